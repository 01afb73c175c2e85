"""The factorize-vs-materialize decision layer.

Couples the 33-entry feature vector to the from-scratch booster, provides the
tuple-ratio/feature-ratio threshold baselines, and scores decision policies by
accuracy, F1 and the overall speedup Sum t_mat / Sum t_chosen. The label
convention everywhere: True = factorization was (or is predicted) faster.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import gbdt
from .features import FEATURE_NAMES, HARDWARE_FEATURE_INDICES, N_FEATURES

FACTORIZE = "factorize"
MATERIALIZE = "materialize"

TUPLE_RATIO_THRESHOLD = 5.0
FEATURE_RATIO_THRESHOLD = 1.0


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledRun:
    """One benchmarked (dataset, model, hardware) combination.

    tr_fr optionally records the threshold baseline's decision, computed at
    benchmark time when the table structure (which sources actually get
    replicated by the join) is still in hand; the feature vector alone cannot
    recover it once several sources are folded into min/max ratios.
    """

    features: np.ndarray
    label: bool
    t_fact: float
    t_mat: float
    tr_fr: str = ""

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.shape != (N_FEATURES,):
            raise EstimatorError(f"feature vector must have shape ({N_FEATURES},)")
        object.__setattr__(self, "features", f)
        if bool(self.label) != (self.t_fact < self.t_mat):
            raise EstimatorError("label contradicts the recorded timings")
        if self.tr_fr not in ("", FACTORIZE, MATERIALIZE):
            raise EstimatorError(f"unknown tr_fr decision {self.tr_fr!r}")


def write_corpus(path, runs: list[LabeledRun]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(FEATURE_NAMES) + ["label", "t_fact", "t_mat", "tr_fr"])
        for r in runs:
            w.writerow([repr(float(v)) for v in r.features]
                       + [int(r.label), repr(r.t_fact), repr(r.t_mat), r.tr_fr])


def read_corpus(path) -> list[LabeledRun]:
    runs = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = list(FEATURE_NAMES) + ["label", "t_fact", "t_mat", "tr_fr"]
        if header != expected:
            raise EstimatorError(f"corpus header mismatch in {path}")
        for row in reader:
            if not row:
                continue
            vals = [float(v) for v in row[:N_FEATURES + 3]]
            runs.append(LabeledRun(np.asarray(vals[:N_FEATURES]),
                                   bool(int(vals[N_FEATURES])),
                                   vals[N_FEATURES + 1], vals[N_FEATURES + 2],
                                   row[N_FEATURES + 3]))
    return runs


def split_corpus(runs: list[LabeledRun], *, test_fraction: float = 0.2,
                 seed: int = 0) -> tuple[list[LabeledRun], list[LabeledRun]]:
    """Seeded shuffle then an 80/20-style split; reproducible bit-for-bit."""
    order = np.random.default_rng(seed).permutation(len(runs))
    n_test = int(round(len(runs) * test_fraction))
    test_idx = set(order[:n_test].tolist())
    train = [runs[i] for i in range(len(runs)) if i not in test_idx]
    test = [runs[i] for i in sorted(test_idx)]
    return train, test


def _stack(runs: list[LabeledRun]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([r.features for r in runs])
    y = np.asarray([r.label for r in runs], dtype=bool)
    return x, y


def fit_estimator(train: list[LabeledRun], params: gbdt.GbdtParams | None = None, *,
                  use_hardware_features: bool = True) -> gbdt.GbdtModel:
    """Fit the booster; use_hardware_features=False is the ablation that hides
    the parallelism/bandwidth group from split search."""
    if not train:
        raise EstimatorError("empty training set")
    x, y = _stack(train)
    mask = None
    if not use_hardware_features:
        mask = tuple(i for i in range(N_FEATURES)
                     if i not in HARDWARE_FEATURE_INDICES)
    try:
        return gbdt.fit(x, y, params, feature_mask=mask)
    except gbdt.GbdtError as e:
        raise EstimatorError(str(e)) from e


def predict(model: gbdt.GbdtModel, features: np.ndarray) -> tuple[float, str]:
    """(probability that factorization is faster, decision). Ties at exactly
    0.5 choose materialization, the always-valid path."""
    prob = float(model.predict_proba(np.asarray(features, dtype=np.float64)
                                     .reshape(1, -1))[0])
    return prob, FACTORIZE if prob > 0.5 else MATERIALIZE


def baseline_threshold(tuple_ratios, feature_ratios, *,
                       tuple_threshold: float = TUPLE_RATIO_THRESHOLD,
                       feature_threshold: float = FEATURE_RATIO_THRESHOLD) -> str:
    """Parameterized redundancy-threshold rule; the defaults are the TR&FR
    baseline (factorize iff min TR > 5 and min FR > 1)."""
    if min(tuple_ratios) > tuple_threshold and min(feature_ratios) > feature_threshold:
        return FACTORIZE
    return MATERIALIZE


def baseline_tr_fr(tuple_ratios, feature_ratios) -> str:
    return baseline_threshold(tuple_ratios, feature_ratios)


def baseline_tr_fr_table(ft) -> str:
    """TR&FR evaluated on a FactorizedTable.

    The ratios quantify redundancy relative to the tables the join replicates,
    so only sources whose rows fan out (some row feeds more than one target
    row) participate. A base table joined 1:1 would otherwise contribute a
    constant tuple ratio of 1 and pin the min below any threshold; a table
    with no replicated source has no redundancy to exploit, so the rule says
    materialize.
    """
    ratios = [(ft.r_T / src.n_rows, ft.c_T / src.n_cols)
              for src, ind in zip(ft.sources, ft.indicators)
              if ind.fanout().max(initial=0) > 1]
    if not ratios:
        return MATERIALIZE
    return baseline_threshold([t for t, _ in ratios], [f for _, f in ratios])


def baseline_tr_fr_features(features: np.ndarray) -> str:
    """TR&FR applied to a feature vector (uses the min-ratio entries)."""
    f = np.asarray(features, dtype=np.float64)
    return baseline_threshold((f[6],), (f[8],))


def decide_with_model(model: gbdt.GbdtModel, runs: list[LabeledRun]) -> list[str]:
    x, _ = _stack(runs)
    labels = model.predict_label(x)
    return [FACTORIZE if b else MATERIALIZE for b in labels]


def decide_with_baseline(runs: list[LabeledRun], *,
                         tuple_threshold: float = TUPLE_RATIO_THRESHOLD,
                         feature_threshold: float = FEATURE_RATIO_THRESHOLD) -> list[str]:
    return [baseline_threshold((r.features[6],), (r.features[8],),
                               tuple_threshold=tuple_threshold,
                               feature_threshold=feature_threshold)
            for r in runs]


def decide_recorded_baseline(runs: list[LabeledRun]) -> list[str]:
    """The TR&FR decisions stored in the corpus (falling back to the feature
    min-ratios for runs benchmarked without one)."""
    return [r.tr_fr or baseline_tr_fr_features(r.features) for r in runs]


def decide_always_materialize(runs: list[LabeledRun]) -> list[str]:
    return [MATERIALIZE] * len(runs)


def decide_oracle(runs: list[LabeledRun]) -> list[str]:
    return [FACTORIZE if r.label else MATERIALIZE for r in runs]


def evaluate(decisions: list[str], runs: list[LabeledRun]) -> dict:
    """accuracy/F1 (positive class = factorize) and overall speedup relative
    to always materializing."""
    if not runs:
        raise EstimatorError("empty evaluation set")
    if len(decisions) != len(runs):
        raise EstimatorError("one decision required per run")
    pred = np.asarray([d == FACTORIZE for d in decisions], dtype=bool)
    truth = np.asarray([r.label for r in runs], dtype=bool)
    tp = int((pred & truth).sum())
    fp = int((pred & ~truth).sum())
    fn = int((~pred & truth).sum())
    accuracy = float((pred == truth).mean())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    t_mat = sum(r.t_mat for r in runs)
    t_chosen = sum(r.t_fact if p else r.t_mat for p, r in zip(pred, runs))
    return {"accuracy": accuracy, "f1": f1,
            "overall_speedup": t_mat / t_chosen if t_chosen else 1.0,
            "n": len(runs)}
