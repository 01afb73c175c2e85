"""Four training loops written once against TargetHandle.

Each trainer sees only the operator set, so the same code runs factorized or
materialized; per-iteration losses agree across paths up to float summation
order. Loss bookkeeping is deliberately kept out of the run's OpTrace and
wall_time, since those feed the cost estimator's labels: loss-only operator
calls pass traced=False and execute while the stopwatch is paused.

Loss conventions (pinned, tests rely on them):
  linear/logistic  loss_history[i] is the loss at the weights entering
                   iteration i (computed from that iteration's residual).
  kmeans           loss_history[i] is the within-cluster squared distance of
                   iteration i's assignment against the centroids it was made
                   with (non-increasing for Lloyd's algorithm).
  gaussian_nmf     loss_history[i] is the Frobenius reconstruction error after
                   iteration i's H and W updates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ops import TargetHandle
from .sparse import OpTrace, ShapeError, SparseMatrix

EPS_NMF = 1e-12


class ConfigError(ValueError):
    pass


class DivergenceError(ValueError):
    """Training produced a non-finite loss."""

    def __init__(self, model: str, iteration: int):
        super().__init__(f"{model}: non-finite loss at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 20
    learning_rate: float = 1e-3
    k_clusters: int = 4
    rank: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.learning_rate > 0.0:
            raise ConfigError("learning_rate must be > 0")
        # spec'd floor for k is ambiguous; k = 1 (global mean) is well defined
        # and kept legal
        if self.k_clusters < 1:
            raise ConfigError("k_clusters must be >= 1")
        if self.rank < 1:
            raise ConfigError("rank must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")


@dataclass
class TrainResult:
    model: str
    parameters: dict[str, np.ndarray]
    loss_history: list[float] = field(default_factory=list)
    trace: OpTrace = field(default_factory=OpTrace)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "parameters": {k: v.tolist() for k, v in self.parameters.items()},
            "loss_history": self.loss_history,
            "trace": {
                "multiply_add_count": self.trace.multiply_add_count,
                "bytes_read": self.trace.bytes_read,
                "bytes_written": self.trace.bytes_written,
                "wall_time": self.trace.wall_time,
            },
            "wall_time": self.wall_time,
        }


class _StopWatch:
    """Accumulating timer; pause around work that must not be billed."""

    def __init__(self):
        self.total = 0.0
        self._t0 = None

    def start(self):
        self._t0 = time.perf_counter()

    def stop(self):
        if self._t0 is not None:
            self.total += time.perf_counter() - self._t0
            self._t0 = None


class _RunTrace:
    """Swap a fresh OpTrace into one or more handles for the fit's duration."""

    def __init__(self, *handles: TargetHandle):
        self.handles = handles
        self.trace = OpTrace()

    def __enter__(self):
        self._saved = [h.trace for h in self.handles]
        for h in self.handles:
            h.trace = self.trace
        return self.trace

    def __exit__(self, *exc):
        for h, saved in zip(self.handles, self._saved):
            h.trace = saved
            saved.merge(self.trace)
        return False


def _check_finite(loss: float, model: str, iteration: int) -> float:
    if not np.isfinite(loss):
        raise DivergenceError(model, iteration)
    return float(loss)


def _column(v) -> np.ndarray:
    """Dense (n, 1) float64 view of a vector-shaped operand."""
    arr = v.to_dense() if isinstance(v, SparseMatrix) else np.asarray(v, dtype=np.float64)
    return arr.reshape(-1, 1)


def linear_regression(t: TargetHandle, y: SparseMatrix,
                      cfg: TrainConfig) -> TrainResult:
    """Batch gradient descent on 1/2 ||Tw - y||^2: w <- w - g*T^T((Tw) - y)."""
    r_t, c_t = t.shape
    if y.shape != (r_t, 1):
        raise ShapeError(f"labels must be {r_t}x1, got {y.shape}")
    yd = _column(y)
    w = np.zeros((c_t, 1))
    result = TrainResult("linreg", {})
    clock = _StopWatch()
    with _RunTrace(t) as run:
        for it in range(cfg.iterations):
            clock.start()
            z = t.lmm(SparseMatrix.from_dense(w))
            resid = _column(z) - yd
            clock.stop()
            loss = _check_finite(0.5 * (resid.T @ resid).item(), "linreg", it)
            result.loss_history.append(loss)
            clock.start()
            grad = t.transpose_lmm(SparseMatrix.from_dense(resid))
            w = w - cfg.learning_rate * _column(grad)
            clock.stop()
    result.parameters["w"] = w
    result.trace = run
    result.wall_time = clock.total
    return result


def logistic_regression(t: TargetHandle, y: SparseMatrix,
                        cfg: TrainConfig) -> TrainResult:
    """GD on the logistic loss: w <- w - g*T^T(sigma(Tw) - y), y in {0,1}."""
    r_t, c_t = t.shape
    if y.shape != (r_t, 1):
        raise ShapeError(f"labels must be {r_t}x1, got {y.shape}")
    if y.nnz and not np.all(y.data == 1.0):
        raise ConfigError("logistic labels must be 0/1")
    yd = _column(y)
    w = np.zeros((c_t, 1))
    result = TrainResult("logreg", {})
    clock = _StopWatch()
    with _RunTrace(t) as run:
        for it in range(cfg.iterations):
            clock.start()
            z = _column(t.lmm(SparseMatrix.from_dense(w)))
            # sigma applies to the dense intermediate, never to T: sigma(0) != 0
            p = 1.0 / (1.0 + np.exp(-z))
            clock.stop()
            pc = np.clip(p, 1e-12, 1.0 - 1e-12)
            loss = -(yd.T @ np.log(pc) + (1.0 - yd).T @ np.log1p(-pc)).item()
            result.loss_history.append(_check_finite(loss, "logreg", it))
            clock.start()
            grad = t.transpose_lmm(SparseMatrix.from_dense(p - yd))
            w = w - cfg.learning_rate * _column(grad)
            clock.stop()
    result.parameters["w"] = w
    result.trace = run
    result.wall_time = clock.total
    return result


def kmeans(t: TargetHandle, cfg: TrainConfig) -> TrainResult:
    """Lloyd's algorithm in LA form.

    D = rowSum(T^2) 1^T - 2 T C^T + 1 rowSum(C o C)^T, one-hot argmin
    assignment (ties to the lowest cluster index), C <- (A^T T) / (A^T 1)
    with empty clusters keeping their previous centroid.
    """
    r_t, c_t = t.shape
    k = cfg.k_clusters
    if k > r_t:
        raise ConfigError(f"k_clusters = {k} exceeds row count {r_t}")
    rng = np.random.default_rng(cfg.seed)
    pick = np.sort(rng.choice(r_t, size=k, replace=False))
    result = TrainResult("kmeans", {})
    clock = _StopWatch()
    with _RunTrace(t) as run:
        clock.start()
        # seed centroids = k sampled target rows, fetched through the
        # operator set so neither path materializes T
        selector = SparseMatrix.from_coo(k, r_t, np.arange(k), pick, np.ones(k))
        centroids = t.rmm(selector).to_dense()
        sq = t.elementwise("square")
        sq.trace = run
        sq.trace_log = t.trace_log
        sq_rows = _column(sq.row_sum())
        ones_k = np.ones((1, k))
        clock.stop()
        for it in range(cfg.iterations):
            clock.start()
            tc = t.lmm(SparseMatrix.from_dense(centroids.T)).to_dense()
            dist = sq_rows @ ones_k - 2.0 * tc + (centroids ** 2).sum(axis=1)
            assign = np.argmin(dist, axis=1)
            clock.stop()
            loss = float(dist[np.arange(r_t), assign].sum())
            result.loss_history.append(_check_finite(loss, "kmeans", it))
            clock.start()
            onehot = np.zeros((r_t, k))
            onehot[np.arange(r_t), assign] = 1.0
            sums = t.transpose_lmm(SparseMatrix.from_dense(onehot)).to_dense().T
            counts = onehot.sum(axis=0)
            live = counts > 0
            centroids = centroids.copy()
            centroids[live] = sums[live] / counts[live, None]
            clock.stop()
    result.parameters["centroids"] = centroids
    result.parameters["assignments"] = assign
    result.trace = run
    result.wall_time = clock.total
    return result


def _nonneg_min(t: TargetHandle) -> float:
    if t.matrix is not None:
        return float(t.matrix.data.min()) if t.matrix.nnz else 0.0
    mins = [float(s.data.min()) for s in t.table.sources if s.nnz]
    return min(mins) if mins else 0.0


def gaussian_nmf(t: TargetHandle, cfg: TrainConfig) -> TrainResult:
    """Multiplicative-update NMF under Frobenius (Gaussian) loss.

    H <- H o (W^T T) / (W^T W H + eps), then W <- W o (T H^T) / (W H H^T + eps).
    Updating H first with the pre-update W keeps the scheme monotone.
    """
    r_t, c_t = t.shape
    r = cfg.rank
    if r > min(r_t, c_t):
        raise ConfigError(f"rank = {r} exceeds min(shape) = {min(r_t, c_t)}")
    if _nonneg_min(t) < 0.0:
        raise ConfigError("gaussian_nmf requires a non-negative target")
    result = TrainResult("gnmf", {})
    clock = _StopWatch()
    with _RunTrace(t) as run:
        clock.start()
        total = _column(t.row_sum()).sum()
        scale = total / (r_t * c_t) if total > 0 else 1.0
        rng = np.random.default_rng(cfg.seed)
        w = rng.random((r_t, r)) * scale
        h = rng.random((r, c_t)) * scale
        clock.stop()
        sq = t.elementwise("square", traced=False)
        t_sq = float(_column(sq.row_sum(traced=False)).sum())

        def frob_loss(p: np.ndarray) -> float:
            # ||T - WH||_F^2 via the Gram identity; p = W^T T with current W
            wtw = w.T @ w
            return t_sq - 2.0 * float((p * h).sum()) + float((wtw * (h @ h.T)).sum())

        for it in range(cfg.iterations):
            clock.start()
            p = t.rmm(SparseMatrix.from_dense(w.T)).to_dense()
            if it > 0:
                # p reuses this iteration's traced product, so recording the
                # previous iteration's loss here costs no extra operator calls
                clock.stop()
                result.loss_history.append(
                    _check_finite(frob_loss(p), "gnmf", it - 1))
                clock.start()
            h = h * p / (w.T @ w @ h + EPS_NMF)
            q = t.lmm(SparseMatrix.from_dense(h.T)).to_dense()
            w = w * q / (w @ (h @ h.T) + EPS_NMF)
            clock.stop()
        p_final = t.rmm(SparseMatrix.from_dense(w.T), traced=False).to_dense()
        result.loss_history.append(
            _check_finite(frob_loss(p_final), "gnmf", cfg.iterations - 1))
    result.parameters["w"] = w
    result.parameters["h"] = h
    result.trace = run
    result.wall_time = clock.total
    return result


TRAINER_FUNCS = {
    "linreg": linear_regression,
    "logreg": logistic_regression,
    "kmeans": kmeans,
    "gnmf": gaussian_nmf,
}

SUPERVISED = {"linreg", "logreg"}


def train(model: str, t: TargetHandle, cfg: TrainConfig,
          y: SparseMatrix | None = None) -> TrainResult:
    """Dispatch by model name; supervised models require labels."""
    try:
        fn = TRAINER_FUNCS[model]
    except KeyError:
        raise ConfigError(f"unknown model {model!r}; one of {sorted(TRAINER_FUNCS)}") from None
    if model in SUPERVISED:
        if y is None:
            raise ConfigError(f"{model} requires labels")
        return fn(t, y, cfg)
    return fn(t, cfg)
