"""Analytic operator-complexity and memory-traffic model.

Costs count operand element visits of the textbook row-times-column multiply
(the unit the instrumented count_formula kernel reports), with dense upper
bounds for iteration intermediates: an r_X x c_X operand is charged
m_X = r_X * c_X regardless of its actual sparsity. Per-model totals compose a
statically declared operator sequence, so costing never runs training.

Byte estimates per op: reads = element_size * visit count * index_overhead,
writes = element_size * output size. The default overhead 1.5 amortizes
compressed index traffic alongside 8-byte values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .metadata import FactorizedTable
from .trainers import TrainConfig

ELEMENT_SIZE = 8
INDEX_OVERHEAD = 1.5

MODELS = ("linreg", "logreg", "kmeans", "gnmf")


class CostError(ValueError):
    pass


@dataclass(frozen=True)
class SourceDescriptor:
    rows: int
    cols: int
    nnz: int


@dataclass(frozen=True)
class TableDescriptor:
    """Shape and nnz summary of a target table and its sources."""

    r_t: int
    c_t: int
    m_t: int
    sources: tuple[SourceDescriptor, ...]

    @classmethod
    def from_table(cls, ft: FactorizedTable) -> "TableDescriptor":
        return cls(ft.r_T, ft.c_T, ft.target_nnz(),
                   tuple(SourceDescriptor(s.n_rows, s.n_cols, s.nnz)
                         for s in ft.sources))

    @classmethod
    def single(cls, r_t: int, c_t: int, m_t: int) -> "TableDescriptor":
        """Degenerate one-source table with identity metadata."""
        return cls(r_t, c_t, m_t, (SourceDescriptor(r_t, c_t, m_t),))


@dataclass(frozen=True)
class OpSpec:
    """One operator application: tag plus dense operand extents (0x0 for the
    unary ops that take no operand)."""

    op: str
    r_x: int = 0
    c_x: int = 0


@dataclass(frozen=True)
class HardwareSpec:
    parallelism: int
    memory_bandwidth: float
    label: str = ""

    def __post_init__(self):
        if self.parallelism < 1:
            raise CostError("parallelism must be >= 1")
        if not self.memory_bandwidth > 0:
            raise CostError("memory_bandwidth must be > 0")


@dataclass
class CostProfile:
    op_costs_materialized: dict[str, int] = field(default_factory=dict)
    op_costs_factorized: dict[str, int] = field(default_factory=dict)
    o_materialized: int = 0
    o_factorized: int = 0
    bytes_read_materialized: float = 0.0
    bytes_written_materialized: float = 0.0
    bytes_read_factorized: float = 0.0
    bytes_written_factorized: float = 0.0

    @property
    def complexity_ratio(self) -> float:
        if self.o_factorized == 0:
            return float("inf") if self.o_materialized else 1.0
        return self.o_materialized / self.o_factorized

    def to_rows(self, dataset_id: str, model: str) -> list[dict]:
        rows = []
        for path in ("materialized", "factorized"):
            rows.append({
                "dataset": dataset_id,
                "model": model,
                "path": path,
                "complexity": getattr(self, f"o_{path}"),
                "bytes_read": getattr(self, f"bytes_read_{path}"),
                "bytes_written": getattr(self, f"bytes_written_{path}"),
                "complexity_ratio": self.complexity_ratio,
            })
        return rows


_UNARY = ("elementwise", "rowsum", "colsum")


def op_cost(op: str, desc: TableDescriptor, r_x: int = 0, c_x: int = 0, *,
            path: str = "materialized") -> int:
    """Table-style visit count for one operator on the given path.

    elementwise/rowSum/colSum: m_T vs sum m_k.
    lmm   (T @ X):   c_X*m_T + r_T*m_X  vs  sum(c_X*m_k + r_k*m_X)
    rmm   (X @ T):   r_X*m_T + c_T*m_X  vs  sum(r_X*m_k + c_k*m_X)
    transpose_lmm:   c_X*m_T + c_T*m_X  vs  sum(c_X*m_k + c_k*m_X)
    with the dense bound m_X = r_X * c_X.
    """
    if path not in ("materialized", "factorized"):
        raise CostError(f"unknown path {path!r}")
    mat = path == "materialized"
    m_x = r_x * c_x
    if op in _UNARY:
        return desc.m_t if mat else sum(s.nnz for s in desc.sources)
    if op == "lmm":
        if mat:
            return c_x * desc.m_t + desc.r_t * m_x
        return sum(c_x * s.nnz + s.rows * m_x for s in desc.sources)
    if op == "rmm":
        if mat:
            return r_x * desc.m_t + desc.c_t * m_x
        return sum(r_x * s.nnz + s.cols * m_x for s in desc.sources)
    if op == "transpose_lmm":
        if mat:
            return c_x * desc.m_t + desc.c_t * m_x
        return sum(c_x * s.nnz + s.cols * m_x for s in desc.sources)
    raise CostError(f"unknown operator tag {op!r}")


def _output_size(op: str, desc: TableDescriptor, r_x: int, c_x: int,
                 path: str) -> int:
    """Dense output size written by the op (stored nnz for elementwise)."""
    if op == "lmm":
        return desc.r_t * c_x
    if op == "rmm":
        return r_x * desc.c_t
    if op == "transpose_lmm":
        return desc.c_t * c_x
    if op == "elementwise":
        return desc.m_t if path == "materialized" else sum(s.nnz for s in desc.sources)
    if op == "rowsum":
        return desc.r_t
    if op == "colsum":
        return desc.c_t
    raise CostError(f"unknown operator tag {op!r}")


def bytes_estimate(sequence: list[tuple[OpSpec, int]], desc: TableDescriptor,
                   path: str, *, element_size: int = ELEMENT_SIZE,
                   index_overhead: float = INDEX_OVERHEAD) -> tuple[float, float]:
    """(reads, writes) over a [(op_spec, repetitions)] sequence."""
    reads = writes = 0.0
    for spec, times in sequence:
        visits = op_cost(spec.op, desc, spec.r_x, spec.c_x, path=path)
        reads += times * element_size * index_overhead * visits
        writes += times * element_size * _output_size(spec.op, desc, spec.r_x,
                                                      spec.c_x, path)
    return reads, writes


def model_sequence(model: str, desc: TableDescriptor,
                   cfg: TrainConfig) -> list[tuple[OpSpec, int]]:
    """The operator manifest each trainer executes: (spec, repetitions).

    Mirrors exactly the traced operator calls in trainers.py; loss-only work
    is untraced there and therefore absent here.
    """
    r_t, c_t = desc.r_t, desc.c_t
    if model in ("linreg", "logreg"):
        return [(OpSpec("lmm", c_t, 1), cfg.iterations),
                (OpSpec("transpose_lmm", r_t, 1), cfg.iterations)]
    if model == "kmeans":
        k = cfg.k_clusters
        return [(OpSpec("rmm", k, r_t), 1),
                (OpSpec("elementwise"), 1),
                (OpSpec("rowsum"), 1),
                (OpSpec("lmm", c_t, k), cfg.iterations),
                (OpSpec("transpose_lmm", r_t, k), cfg.iterations)]
    if model == "gnmf":
        r = cfg.rank
        return [(OpSpec("rowsum"), 1),
                (OpSpec("rmm", r, r_t), cfg.iterations),
                (OpSpec("lmm", c_t, r), cfg.iterations)]
    raise CostError(f"unknown model {model!r}; one of {MODELS}")


def sequence_cost(sequence: list[tuple[OpSpec, int]],
                  desc: TableDescriptor) -> CostProfile:
    profile = CostProfile()
    for spec, times in sequence:
        for path, bucket in (("materialized", profile.op_costs_materialized),
                             ("factorized", profile.op_costs_factorized)):
            c = times * op_cost(spec.op, desc, spec.r_x, spec.c_x, path=path)
            bucket[spec.op] = bucket.get(spec.op, 0) + c
    profile.o_materialized = sum(profile.op_costs_materialized.values())
    profile.o_factorized = sum(profile.op_costs_factorized.values())
    (profile.bytes_read_materialized,
     profile.bytes_written_materialized) = bytes_estimate(sequence, desc,
                                                          "materialized")
    (profile.bytes_read_factorized,
     profile.bytes_written_factorized) = bytes_estimate(sequence, desc,
                                                        "factorized")
    return profile


def model_cost(model: str, desc: TableDescriptor,
               cfg: TrainConfig) -> CostProfile:
    return sequence_cost(model_sequence(model, desc, cfg), desc)


def linreg_cost(desc: TableDescriptor, iterations: int = 1) -> CostProfile:
    """The linear-regression derivation: one T@w plus one T^T@resid per pass.

    With the dense bounds m_w = c_T, m_resid = r_T this reduces to
      O_mat  = (m_T + r_T*c_T) + (m_T + c_T*r_T)
      O_fact = sum(m_k + r_k*c_T) + sum(m_k + c_k*r_T).
    """
    cfg = TrainConfig(iterations=iterations,
                      learning_rate=1.0, k_clusters=1, rank=1)
    return model_cost("linreg", desc, cfg)


def complexity_ratio(desc: TableDescriptor) -> float:
    """O_materialized / O_factorized for the linear-regression sequence (the
    scalar the decision heuristics and feature vector use)."""
    return linreg_cost(desc).complexity_ratio
