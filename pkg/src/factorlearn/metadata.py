"""Data-integration metadata as sparse binary matrices.

A target table is represented without materialization by its source matrices
S_k together with, per source, a mapping matrix (c_T x c_k, which source
column feeds which target column) and an indicator matrix (r_T x r_k, which
source row feeds which target row). Join semantics live entirely in the
indicator structure: inner joins match every target row, left/outer joins may
leave all-zero indicator rows on the non-preserved side, and unions stack
per-source row blocks. Materialization is the sum of I_k @ S_k @ M_k^T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import sparse
from .sparse import OpTrace, SparseMatrix

JOIN_TYPES = ("inner", "left", "outer", "union")


@dataclass(frozen=True)
class Violation:
    source: int | None
    kind: str
    message: str

    def __str__(self) -> str:
        where = "table" if self.source is None else f"source {self.source}"
        return f"[{where}] {self.kind}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, source: int | None, kind: str, message: str) -> None:
        self.violations.append(Violation(source, kind, message))

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


class MetadataError(ValueError):
    """Raised when metadata invariants are violated at use time."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__(str(report))


def _check_binary(m: SparseMatrix, report: ValidationReport, source: int, name: str) -> None:
    bad = np.nonzero(m.data != 1.0)[0]
    if bad.size:
        report.add(source, "non-binary entry",
                   f"{name} stores value {m.data[bad[0]]} (all entries must be 1.0)")


@dataclass
class MappingMatrix:
    """Binary c_T x c_k matrix; entry (i, j) = 1 maps source column j to target column i."""

    matrix: SparseMatrix

    def target_columns(self) -> np.ndarray:
        """Target column indices claimed by this source (nonzero rows)."""
        return np.nonzero(self.matrix.row_nnz())[0]

    def check(self, report: ValidationReport, source: int) -> None:
        m = self.matrix
        _check_binary(m, report, source, "mapping matrix")
        col_counts = np.bincount(m.indices, minlength=m.n_cols)
        for j in np.nonzero(col_counts > 1)[0]:
            report.add(source, "column maps twice",
                       f"source column {j} maps to {col_counts[j]} target columns")
        for j in np.nonzero(col_counts == 0)[0]:
            report.add(source, "column unmapped",
                       f"source column {j} maps to no target column")
        rows = m.row_nnz()
        for i in np.nonzero(rows > 1)[0]:
            report.add(source, "duplicate mapping",
                       f"target column {i} claimed {rows[i]} times within one source")


@dataclass
class IndicatorMatrix:
    """Binary r_T x r_k matrix; entry (i, j) = 1 draws target row i from source row j.

    All-zero rows encode outer-join padding (no source row feeds that target row).
    """

    matrix: SparseMatrix

    def fanout(self) -> np.ndarray:
        """Per source row, the number of target rows drawing it."""
        return np.bincount(self.matrix.indices, minlength=self.matrix.n_cols)

    def matched_rows(self) -> int:
        """Number of target rows drawing from this source."""
        return int(np.count_nonzero(self.matrix.row_nnz()))

    def check(self, report: ValidationReport, source: int, join_type: str) -> None:
        m = self.matrix
        _check_binary(m, report, source, "indicator matrix")
        rows = m.row_nnz()
        for i in np.nonzero(rows > 1)[0]:
            report.add(source, "row matched twice",
                       f"target row {i} draws {rows[i]} rows from one source")
        if join_type == "inner" and np.any(rows == 0):
            i = int(np.nonzero(rows == 0)[0][0])
            report.add(source, "inner join gap",
                       f"target row {i} has no match (inner join requires full coverage)")


@dataclass(eq=False)
class FactorizedTable:
    """n source matrices plus their mapping/indicator metadata; stands in for
    the r_T x c_T join result without materializing it."""

    sources: list[SparseMatrix]
    mappings: list[MappingMatrix]
    indicators: list[IndicatorMatrix]
    join_type: str
    r_T: int
    c_T: int

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.r_T, self.c_T)

    @cached_property
    def mappings_t(self) -> list[SparseMatrix]:
        return [sparse.transpose(m.matrix) for m in self.mappings]

    @cached_property
    def sources_t(self) -> list[SparseMatrix]:
        return [sparse.transpose(s) for s in self.sources]

    @cached_property
    def indicators_t(self) -> list[SparseMatrix]:
        return [sparse.transpose(i.matrix) for i in self.indicators]

    def source_nnz(self) -> list[int]:
        return [s.nnz for s in self.sources]

    def target_nnz(self) -> int:
        """nnz of the materialized table, computed from metadata alone.

        Valid because mappings are column-disjoint and each target row draws at
        most one row per source: every stored source value lands in its own
        target cell, scattered once per unit of indicator fanout.
        """
        total = 0
        for s, ind in zip(self.sources, self.indicators):
            total += int(np.dot(ind.fanout().astype(np.float64),
                                s.row_nnz().astype(np.float64)))
        return total

    def validate(self) -> ValidationReport:
        report = ValidationReport()
        n = len(self.sources)
        if n < 1:
            report.add(None, "empty", "factorized table needs at least one source")
            return report
        if len(self.mappings) != n or len(self.indicators) != n:
            report.add(None, "length mismatch",
                       f"{n} sources but {len(self.mappings)} mappings and "
                       f"{len(self.indicators)} indicators")
            return report
        if self.join_type not in JOIN_TYPES:
            report.add(None, "join type", f"unknown join type {self.join_type!r}")
        for k, (s, mp, ind) in enumerate(zip(self.sources, self.mappings, self.indicators)):
            if ind.matrix.shape != (self.r_T, s.n_rows):
                report.add(k, "indicator shape",
                           f"expected {(self.r_T, s.n_rows)}, got {ind.matrix.shape}")
                continue
            if mp.matrix.shape != (self.c_T, s.n_cols):
                report.add(k, "mapping shape",
                           f"expected {(self.c_T, s.n_cols)}, got {mp.matrix.shape}")
                continue
            mp.check(report, k)
            ind.check(report, k, self.join_type)
        # Column-disjointness across sources: no target column claimed twice.
        owners = np.full(self.c_T, -1, dtype=np.int64)
        for k, mp in enumerate(self.mappings):
            if mp.matrix.n_rows != self.c_T:
                continue
            for i in mp.target_columns():
                if owners[i] >= 0:
                    report.add(k, "column claimed twice",
                               f"target column {i} already claimed by source {owners[i]}")
                else:
                    owners[i] = k
        return report

    def require_valid(self) -> None:
        report = self.validate()
        if not report.ok:
            raise MetadataError(report)


def materialize(ft: FactorizedTable, *, threads: int = 1,
                trace: OpTrace | None = None, check: bool = True) -> SparseMatrix:
    """Sum of I_k @ (S_k @ M_k^T): the join/union result the metadata encodes."""
    if check:
        ft.require_valid()
    out = None
    for s, mp_t, ind in zip(ft.sources, ft.mappings_t, ft.indicators):
        scattered = sparse.spmm(s, mp_t, threads=threads, trace=trace)
        term = sparse.spmm(ind.matrix, scattered, threads=threads, trace=trace)
        out = term if out is None else sparse.add(out, term, threads=threads, trace=trace)
    return out


@dataclass(frozen=True)
class RedundancyStats:
    tuple_ratios: tuple[float, ...]
    feature_ratios: tuple[float, ...]
    sparsity_target: float
    rho_c: float


def redundancy_stats(ft: FactorizedTable) -> RedundancyStats:
    """Redundancy of the target relative to each source, without materializing."""
    tuple_ratios = tuple(ft.r_T / s.n_rows for s in ft.sources)
    feature_ratios = tuple(ft.c_T / s.n_cols for s in ft.sources)
    cells = ft.r_T * ft.c_T
    sparsity = 1.0 - ft.target_nnz() / cells if cells else 0.0
    rho_c = sum(s.n_cols for s in ft.sources) / ft.c_T
    return RedundancyStats(tuple_ratios, feature_ratios, sparsity, rho_c)
