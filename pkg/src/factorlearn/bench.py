"""Dual-path benchmark harness.

For every (dataset, model, thread count) combination this runs training on
the factorized path and on the materialized path, checks that their
per-iteration losses agree before accepting any timing, and emits

  * a report row (times, speedup, traces, flags) and
  * when the equivalence check passed, a LabeledRun for the estimator corpus
    (label = factorized was faster).

Timing protocol: optional warm-up run discarded, then the median of `repeats`
runs of TrainResult.wall_time (operator work only; loss bookkeeping and
materialization are excluded from both paths' clocks). Materialization time
is recorded separately per dataset for reporting.
"""

from __future__ import annotations

import csv
import statistics
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import trainers
from .cost import MODELS, HardwareSpec
from .datagen import GenSpec, generate
from .estimator import LabeledRun, baseline_tr_fr_table
from .features import DatasetProfile, extract_features
from .metadata import FactorizedTable, materialize
from .ops import TargetHandle
from .sparse import SparseMatrix
from .trainers import TrainConfig, TrainResult


@dataclass(frozen=True)
class BenchConfig:
    models: tuple[str, ...] = MODELS
    threads: tuple[int, ...] = (1, 2)
    repeats: int = 3
    warmup: bool = True
    iterations: int = 20
    k_clusters: int = 4
    rank: int = 2
    seed: int = 0
    equivalence_tol: float = 1e-6
    memory_bandwidth: float = 1e9


@dataclass
class BenchRow:
    dataset: str
    model: str
    threads: int
    t_fact: float = 0.0
    t_mat: float = 0.0
    materialize_seconds: float = 0.0
    status: str = "ok"
    equivalence_ok: bool = False
    max_loss_rel_diff: float = float("nan")
    madds_fact: int = 0
    madds_mat: int = 0
    bytes_fact: int = 0
    bytes_mat: int = 0
    choice_tr_fr: str = ""

    @property
    def speedup(self) -> float:
        return self.t_mat / self.t_fact if self.t_fact > 0 else float("nan")

    @property
    def label(self) -> bool:
        return self.t_fact < self.t_mat


REPORT_COLUMNS = ("dataset", "model", "threads", "t_fact", "t_mat", "speedup",
                  "label", "status", "equivalence_ok", "max_loss_rel_diff",
                  "materialize_seconds", "madds_fact", "madds_mat",
                  "bytes_fact", "bytes_mat", "choice_tr_fr")


def write_report(path, rows: list[BenchRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([r.dataset, r.model, r.threads, repr(r.t_fact),
                        repr(r.t_mat), repr(r.speedup), int(r.label), r.status,
                        int(r.equivalence_ok), repr(r.max_loss_rel_diff),
                        repr(r.materialize_seconds), r.madds_fact, r.madds_mat,
                        r.bytes_fact, r.bytes_mat, r.choice_tr_fr])


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _dataset_rng(dataset_id: str, seed: int) -> np.random.Generator:
    return np.random.default_rng((zlib.crc32(dataset_id.encode()) << 16) ^ seed)


def _labels_for(ft: FactorizedTable, rng: np.random.Generator) -> dict[str, SparseMatrix]:
    y_lin = rng.random((ft.r_T, 1))
    y_log = rng.integers(0, 2, size=(ft.r_T, 1)).astype(np.float64)
    return {"linreg": SparseMatrix.from_dense(y_lin),
            "logreg": SparseMatrix.from_dense(y_log)}


def _safe_learning_rate(target: SparseMatrix) -> float:
    """1 / (max row sum * max col sum) of |T| upper-bounds 1/||T^T T||_2, so
    plain GD on the least-squares loss cannot diverge."""
    if target.nnz == 0:
        return 1.0
    a = np.abs(target.data)
    row = np.zeros(target.n_rows)
    np.add.at(row, np.repeat(np.arange(target.n_rows), np.diff(target.indptr)), a)
    col = np.zeros(target.n_cols)
    np.add.at(col, target.indices, a)
    bound = row.max() * col.max()
    return 1.0 / bound if bound > 0 else 1.0


def loss_rel_diff(a: list[float], b: list[float]) -> float:
    if len(a) != len(b):
        return float("inf")
    worst = 0.0
    for x, z in zip(a, b):
        scale = max(abs(x), abs(z), 1e-30)
        worst = max(worst, abs(x - z) / scale)
    return worst


def _timed_run(model: str, handle: TargetHandle, cfg: TrainConfig,
               y: SparseMatrix | None, repeats: int,
               warmup: bool) -> tuple[float, TrainResult]:
    if warmup:
        trainers.train(model, handle, cfg, y)
    times, result = [], None
    for _ in range(max(1, repeats)):
        result = trainers.train(model, handle, cfg, y)
        times.append(result.wall_time)
    return statistics.median(times), result


def bench_dataset(ft: FactorizedTable, dataset_id: str,
                  cfg: BenchConfig) -> tuple[list[BenchRow], list[LabeledRun]]:
    """All (model, threads) combinations for one dataset."""
    profile = DatasetProfile.from_table(ft)
    rng = _dataset_rng(dataset_id, cfg.seed)
    labels = _labels_for(ft, rng)
    train_seed = int(rng.integers(0, 2**31))

    t0 = time.perf_counter()
    target = materialize(ft)
    mat_seconds = time.perf_counter() - t0
    gamma = _safe_learning_rate(target)
    tr_fr = baseline_tr_fr_table(ft)

    rows, runs = [], []
    for th in cfg.threads:
        fact = TargetHandle.factorized(ft, threads=th, check=False)
        mat = TargetHandle.materialized(target, threads=th)
        hw = HardwareSpec(th, cfg.memory_bandwidth)
        for model in cfg.models:
            tcfg = TrainConfig(iterations=cfg.iterations, learning_rate=gamma,
                               k_clusters=min(cfg.k_clusters, ft.r_T),
                               rank=min(cfg.rank, min(ft.r_T, ft.c_T)),
                               seed=train_seed)
            row = BenchRow(dataset_id, model, th,
                           materialize_seconds=mat_seconds, choice_tr_fr=tr_fr)
            try:
                t_f, res_f = _timed_run(model, fact, tcfg, labels.get(model),
                                        cfg.repeats, cfg.warmup)
                t_m, res_m = _timed_run(model, mat, tcfg, labels.get(model),
                                        cfg.repeats, cfg.warmup)
            except (trainers.DivergenceError, trainers.ConfigError) as e:
                row.status = f"error: {e}"
                rows.append(row)
                continue
            row.t_fact, row.t_mat = t_f, t_m
            row.max_loss_rel_diff = loss_rel_diff(res_f.loss_history,
                                                  res_m.loss_history)
            row.equivalence_ok = row.max_loss_rel_diff <= cfg.equivalence_tol
            row.madds_fact = res_f.trace.multiply_add_count
            row.madds_mat = res_m.trace.multiply_add_count
            row.bytes_fact = res_f.trace.bytes_read + res_f.trace.bytes_written
            row.bytes_mat = res_m.trace.bytes_read + res_m.trace.bytes_written
            if not row.equivalence_ok:
                row.status = "equivalence_failed"
                rows.append(row)
                continue
            rows.append(row)
            features = extract_features(profile, model, tcfg, hw)
            runs.append(LabeledRun(features, row.label, t_f, t_m, tr_fr))
    return rows, runs


def warmup_kernels(threads: tuple[int, ...] = (1, 2)) -> None:
    """Compile/warm every kernel and pool before any timed work."""
    ft, _ = generate(GenSpec(r_t=40, n_sources=2, sparsity=0.5, seed=123))
    cfg = BenchConfig(threads=tuple(threads), repeats=1, warmup=False,
                      iterations=2, k_clusters=2, rank=1)
    bench_dataset(ft, "warmup", cfg)


def bench_many(tables: list[tuple[str, FactorizedTable]], cfg: BenchConfig, *,
               progress=None) -> tuple[list[BenchRow], list[LabeledRun]]:
    """Sequential benchmark over datasets (combinations must not interfere)."""
    all_rows, all_runs = [], []
    for i, (dataset_id, ft) in enumerate(tables):
        rows, runs = bench_dataset(ft, dataset_id, cfg)
        all_rows.extend(rows)
        all_runs.extend(runs)
        if progress is not None:
            progress(i + 1, len(tables), dataset_id)
    return all_rows, all_runs


def measure_bandwidth(size_mb: int = 64, repeats: int = 3) -> float:
    """Stream-style copy bandwidth in bytes/second (counts read + write)."""
    n = size_mb * (1 << 20) // 8
    src = np.ones(n)
    dst = np.empty(n)
    best = float("inf")
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        np.copyto(dst, src)
        best = min(best, time.perf_counter() - t0)
    return 2.0 * n * 8 / best


__all__ = ["BenchConfig", "BenchRow", "REPORT_COLUMNS", "bench_dataset",
           "bench_many", "loss_rel_diff", "measure_bandwidth", "read_report",
           "warmup_kernels", "write_report"]
