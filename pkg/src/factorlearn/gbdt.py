"""Gradient-boosted decision trees, from scratch, for binary classification.

Newton-step boosting on the logistic loss: per round the booster fits one
regression tree to the first/second-order statistics g = p - y, h = p(1 - p),
using exact greedy split search over sorted feature values with the
second-order gain

    gain = 1/2 (G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda))

and leaf weight -G/(H+lambda). No subsampling of rows or columns, so fitting
is deterministic: features are scanned in index order and ties keep the
earliest candidate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class GbdtError(ValueError):
    pass


@dataclass(frozen=True)
class GbdtParams:
    rounds: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    min_gain: float = 1e-12

    def __post_init__(self):
        if self.rounds < 0:
            raise GbdtError("rounds must be >= 0")
        if self.max_depth < 1:
            raise GbdtError("max_depth must be >= 1")
        if not self.learning_rate > 0:
            raise GbdtError("learning_rate must be > 0")
        if self.reg_lambda < 0 or self.min_child_weight < 0:
            raise GbdtError("reg_lambda and min_child_weight must be >= 0")


@dataclass
class Tree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        # every path ends at depth <= max_depth, so bounded iteration suffices
        for _ in range(64):
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            go_left = x[idx, feat[idx]] < self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
        return self.weight[node]

    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(),
                "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "weight": self.weight.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(np.asarray(d["feature"], dtype=np.int64),
                   np.asarray(d["threshold"], dtype=np.float64),
                   np.asarray(d["left"], dtype=np.int64),
                   np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["weight"], dtype=np.float64))


@dataclass
class GbdtModel:
    params: GbdtParams
    base_score: float
    trees: list[Tree] = field(default_factory=list)
    feature_mask: tuple[int, ...] | None = None
    loss_curve: list[float] = field(default_factory=list)

    def predict_raw(self, x: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        raw = np.full(x.shape[0], self.base_score)
        use = self.trees if n_trees is None else self.trees[:n_trees]
        for t in use:
            raw += self.params.learning_rate * t.predict(x)
        return raw

    def predict_proba(self, x: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.predict_raw(x, n_trees)))

    def predict_label(self, x: np.ndarray) -> np.ndarray:
        """True iff probability strictly above 1/2 (ties resolve False)."""
        return self.predict_proba(x) > 0.5

    def to_dict(self) -> dict:
        return {
            "format": "gbdt-v1",
            "params": {
                "rounds": self.params.rounds,
                "max_depth": self.params.max_depth,
                "learning_rate": self.params.learning_rate,
                "reg_lambda": self.params.reg_lambda,
                "min_child_weight": self.params.min_child_weight,
                "min_gain": self.params.min_gain,
            },
            "base_score": self.base_score,
            "feature_mask": list(self.feature_mask) if self.feature_mask is not None else None,
            "loss_curve": self.loss_curve,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("format") != "gbdt-v1":
            raise GbdtError(f"unsupported model format {d.get('format')!r}")
        mask = d.get("feature_mask")
        return cls(GbdtParams(**d["params"]), d["base_score"],
                   [Tree.from_dict(t) for t in d["trees"]],
                   tuple(mask) if mask is not None else None,
                   list(d.get("loss_curve", [])))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "GbdtModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class _TreeBuilder:
    def __init__(self, x, g, h, params: GbdtParams, features: np.ndarray):
        self.x, self.g, self.h = x, g, h
        self.p = params
        self.features = features
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.weight = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.weight.append(0.0)
        return len(self.feature) - 1

    def build(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        g_sum = float(self.g[idx].sum())
        h_sum = float(self.h[idx].sum())
        lam = self.p.reg_lambda
        if depth < self.p.max_depth and idx.size >= 2:
            best = (self.p.min_gain, -1, 0.0)
            parent_score = g_sum * g_sum / (h_sum + lam)
            for f in self.features:
                vals = self.x[idx, f]
                order = np.argsort(vals, kind="stable")
                sv = vals[order]
                sg = np.cumsum(self.g[idx][order])
                sh = np.cumsum(self.h[idx][order])
                # candidate boundaries = positions where the value changes
                cut = np.nonzero(sv[:-1] < sv[1:])[0]
                if cut.size == 0:
                    continue
                gl, hl = sg[cut], sh[cut]
                gr, hr = g_sum - gl, h_sum - hl
                ok = (hl >= self.p.min_child_weight) & (hr >= self.p.min_child_weight)
                if not ok.any():
                    continue
                gains = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam)
                               - parent_score)
                gains[~ok] = -np.inf
                j = int(np.argmax(gains))
                if gains[j] > best[0]:
                    best = (float(gains[j]), int(f),
                            0.5 * (float(sv[cut[j]]) + float(sv[cut[j] + 1])))
            if best[1] >= 0:
                f, thr = best[1], best[2]
                mask = self.x[idx, f] < thr
                self.feature[node] = f
                self.threshold[node] = thr
                self.left[node] = self.build(idx[mask], depth + 1)
                self.right[node] = self.build(idx[~mask], depth + 1)
                return node
        self.weight[node] = -g_sum / (h_sum + lam)
        return node

    def tree(self) -> Tree:
        return Tree(np.asarray(self.feature, dtype=np.int64),
                    np.asarray(self.threshold, dtype=np.float64),
                    np.asarray(self.left, dtype=np.int64),
                    np.asarray(self.right, dtype=np.int64),
                    np.asarray(self.weight, dtype=np.float64))


def logloss(y: np.ndarray, p: np.ndarray) -> float:
    pc = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).mean())


def fit(x: np.ndarray, y: np.ndarray, params: GbdtParams | None = None, *,
        feature_mask: tuple[int, ...] | None = None,
        min_examples: int = 20) -> GbdtModel:
    """Train the booster; y is a boolean (or 0/1) label vector.

    feature_mask restricts splits to the listed feature indices (models are
    always fed full-width vectors at predict time, masked features are just
    never consulted). Requires both classes present.
    """
    params = params or GbdtParams()
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape[0] != y.shape[0]:
        raise GbdtError(f"{x.shape[0]} rows but {y.shape[0]} labels")
    if x.shape[0] < min_examples:
        raise GbdtError(f"need at least {min_examples} examples, got {x.shape[0]}")
    pos = float(y.sum())
    if pos == 0.0 or pos == y.shape[0]:
        raise GbdtError("single-class input: both labels must be present")
    if feature_mask is not None:
        feats = np.asarray(sorted(set(feature_mask)), dtype=np.int64)
        if feats.size == 0 or feats[0] < 0 or feats[-1] >= x.shape[1]:
            raise GbdtError("feature_mask indices out of range")
    else:
        feats = np.arange(x.shape[1], dtype=np.int64)

    prior = np.clip(pos / y.shape[0], 1e-6, 1.0 - 1e-6)
    base = float(np.log(prior / (1.0 - prior)))
    model = GbdtModel(params, base, [],
                      tuple(int(f) for f in feats) if feature_mask is not None else None)
    raw = np.full(y.shape[0], base)
    model.loss_curve.append(logloss(y, 1.0 / (1.0 + np.exp(-raw))))
    all_idx = np.arange(y.shape[0], dtype=np.int64)
    for _ in range(params.rounds):
        p = 1.0 / (1.0 + np.exp(-raw))
        g = p - y
        h = p * (1.0 - p)
        builder = _TreeBuilder(x, g, h, params, feats)
        builder.build(all_idx, 0)
        tree = builder.tree()
        model.trees.append(tree)
        raw += params.learning_rate * tree.predict(x)
        model.loss_curve.append(logloss(y, 1.0 / (1.0 + np.exp(-raw))))
    return model
