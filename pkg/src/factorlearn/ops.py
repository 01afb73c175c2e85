"""Operators that run on a target table either materialized or factorized.

A :class:`TargetHandle` wraps either the materialized matrix or the
:class:`~factorlearn.metadata.FactorizedTable` and exposes one operator set;
trainers are written once against the handle and never know which execution
path is active.

Factorized evaluation pushes each operator to the sources via the metadata
rewrites, e.g. T @ x becomes sum_k I_k @ (S_k @ (M_k^T @ x)), associating from
the mapping side first because that is the cheapest step (a row gather).
Binary mapping/indicator matrices are applied as gathers / grouped sums, which
move data but perform no multiply-adds; only the S_k products contribute
arithmetic to the trace, matching what the analytic cost model charges.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from . import sparse
from .metadata import FactorizedTable
from .sparse import OpTrace, ShapeError, SparseMatrix

# Accumulate per-source partial results into a dense buffer once their
# combined density passes this fraction; below it, sparse pairwise adds win.
DENSE_ACCUM_THRESHOLD = 0.25


class OpError(ValueError):
    pass


@dataclass(frozen=True)
class SourceSelectors:
    """Index-array form of one source's binary metadata.

    ind_sel[i] is the source row feeding target row i (-1 for outer padding);
    group_indptr/group_rows invert it (target rows drawing each source row, in
    ascending order); map_sel[t] is the source column feeding target column t
    (-1 if unmapped) and map_sel_t its inverse, the target column for each
    source column.
    """

    ind_sel: np.ndarray
    group_indptr: np.ndarray
    group_rows: np.ndarray
    map_sel: np.ndarray
    map_sel_t: np.ndarray


def _build_selectors(ft: FactorizedTable) -> list[SourceSelectors]:
    out = []
    for s, mp, ind in zip(ft.sources, ft.mappings, ft.indicators):
        im = ind.matrix
        ind_sel = np.full(ft.r_T, -1, dtype=np.int64)
        matched = np.nonzero(np.diff(im.indptr) == 1)[0]
        ind_sel[matched] = im.indices[im.indptr[matched]]
        order = np.argsort(ind_sel, kind="stable")
        order = order[ind_sel[order] >= 0]
        counts = np.bincount(ind_sel[ind_sel >= 0], minlength=s.n_rows)
        group_indptr = np.zeros(s.n_rows + 1, dtype=np.int64)
        np.cumsum(counts, out=group_indptr[1:])
        mm = mp.matrix
        map_sel = np.full(ft.c_T, -1, dtype=np.int64)
        mapped = np.nonzero(np.diff(mm.indptr) == 1)[0]
        map_sel[mapped] = mm.indices[mm.indptr[mapped]]
        map_sel_t = np.full(s.n_cols, -1, dtype=np.int64)
        map_sel_t[map_sel[mapped]] = mapped
        out.append(SourceSelectors(ind_sel, group_indptr, order, map_sel, map_sel_t))
    return out


def _gather_rows(sel: np.ndarray, a: SparseMatrix, n_cols: int,
                 trace: OpTrace | None) -> SparseMatrix:
    t0 = time.perf_counter()
    indptr, indices, data = _k.gather_rows_kernel(sel, a.indptr, a.indices, a.data)
    out = SparseMatrix(sel.shape[0], n_cols, indptr, indices, data, check=False)
    if trace is not None:
        trace.record(0, 16 * out.nnz, 16 * out.nnz, time.perf_counter() - t0)
    return out


def _group_sum(group_indptr, group_rows, a: SparseMatrix,
               trace: OpTrace | None) -> SparseMatrix:
    t0 = time.perf_counter()
    indptr, indices, data = _k.group_sum_kernel(group_indptr, group_rows,
                                                a.indptr, a.indices, a.data,
                                                a.n_cols)
    out = SparseMatrix(group_indptr.shape[0] - 1, a.n_cols, indptr, indices,
                       data, check=False)
    if trace is not None:
        trace.record(0, 16 * a.nnz, 16 * out.nnz, time.perf_counter() - t0)
    return out


def _remap_cols_sum(col_map, out_width, a: SparseMatrix,
                    trace: OpTrace | None) -> SparseMatrix:
    t0 = time.perf_counter()
    indptr, indices, data = _k.remap_cols_sum_kernel(col_map, out_width,
                                                     a.indptr, a.indices, a.data)
    out = SparseMatrix(a.n_rows, out_width, indptr, indices, data, check=False)
    if trace is not None:
        trace.record(0, 16 * a.nnz, 16 * out.nnz, time.perf_counter() - t0)
    return out


def _remap_cols_sorted(col_map, out_width, a: SparseMatrix,
                       trace: OpTrace | None) -> SparseMatrix:
    t0 = time.perf_counter()
    indptr, indices, data = _k.remap_cols_sorted_kernel(col_map, out_width,
                                                        a.indptr, a.indices, a.data)
    out = SparseMatrix(a.n_rows, out_width, indptr, indices, data, check=False)
    if trace is not None:
        trace.record(0, 16 * a.nnz, 16 * out.nnz, time.perf_counter() - t0)
    return out


def _accumulate(terms: list[SparseMatrix], threads: int, trace: OpTrace | None,
                threshold: float) -> SparseMatrix:
    """Sum per-source partials in source order; dense buffer when the sum is
    expected dense, sparse merges otherwise. Both orders add cell values in
    the same sequence, so the result does not depend on the strategy."""
    if len(terms) == 1:
        return terms[0]
    r, c = terms[0].shape
    est_density = min(1.0, sum(t.nnz for t in terms) / max(1, r * c))
    if est_density > threshold:
        t0 = time.perf_counter()
        buf = np.zeros((r, c))
        for t in terms:
            _k.scatter_add_dense(t.indptr, t.indices, t.data, buf, 0)
        out = SparseMatrix.from_dense(buf)
        if trace is not None:
            trace.record(0, 16 * sum(t.nnz for t in terms), 16 * out.nnz,
                         time.perf_counter() - t0)
        return out
    out = terms[0]
    for t in terms[1:]:
        out = sparse.add(out, t, threads=threads, trace=trace)
    return out


class TargetHandle:
    """Uniform view of the target table for either execution path."""

    def __init__(self, *, table: FactorizedTable | None = None,
                 matrix: SparseMatrix | None = None, threads: int = 1,
                 accum_threshold: float = DENSE_ACCUM_THRESHOLD):
        if (table is None) == (matrix is None):
            raise OpError("exactly one of table or matrix must be given")
        self.table = table
        self.matrix = matrix
        self.threads = threads
        self.accum_threshold = accum_threshold
        self.trace = OpTrace()
        self.trace_log: list[tuple[str, str, OpTrace]] | None = None
        self._selectors: list[SourceSelectors] | None = None
        self._matrix_t: SparseMatrix | None = None

    @classmethod
    def factorized(cls, ft: FactorizedTable, *, threads: int = 1,
                   check: bool = True) -> "TargetHandle":
        if check:
            ft.require_valid()
        return cls(table=ft, threads=threads)

    @classmethod
    def materialized(cls, matrix: SparseMatrix, *, threads: int = 1) -> "TargetHandle":
        return cls(matrix=matrix, threads=threads)

    @property
    def path(self) -> str:
        return "factorized" if self.table is not None else "materialized"

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape if self.table is not None else self.matrix.shape

    @property
    def selectors(self) -> list[SourceSelectors]:
        if self._selectors is None:
            self._selectors = _build_selectors(self.table)
        return self._selectors

    def _t_transposed(self) -> SparseMatrix:
        if self._matrix_t is None:
            self._matrix_t = sparse.transpose(self.matrix)
        return self._matrix_t

    def enable_trace_log(self) -> None:
        self.trace_log = []

    def _trace_for(self, traced: bool) -> OpTrace | None:
        return OpTrace() if traced else None

    def _close(self, name: str, call: OpTrace | None):
        if call is not None:
            self.trace.merge(call)
            if self.trace_log is not None:
                self.trace_log.append((name, self.path, call))

    def materialize_target(self, *, traced: bool = False) -> SparseMatrix:
        """The full target matrix (identity-operand evaluation of the rewrite)."""
        if self.matrix is not None:
            return self.matrix
        call = self._trace_for(traced)
        terms = []
        for s, sel in zip(self.table.sources, self.selectors):
            scattered = _remap_cols_sorted(sel.map_sel_t, self.table.c_T, s, call)
            terms.append(_gather_rows(sel.ind_sel, scattered, self.table.c_T, call))
        out = _accumulate(terms, self.threads, call, self.accum_threshold)
        self._close("materialize", call)
        return out

    def lmm(self, x: SparseMatrix, *, traced: bool = True) -> SparseMatrix:
        """T @ x."""
        r, c = self.shape
        if x.n_rows != c:
            raise ShapeError(f"lmm: target is {r}x{c} but operand is {x.shape}")
        call = self._trace_for(traced)
        if self.matrix is not None:
            out = sparse.spmm(self.matrix, x, threads=self.threads, trace=call)
        else:
            terms = []
            for s, sel in zip(self.table.sources, self.selectors):
                u = _gather_rows(sel.map_sel_t, x, x.n_cols, call)
                v = sparse.spmm(s, u, threads=self.threads, trace=call)
                terms.append(_gather_rows(sel.ind_sel, v, x.n_cols, call))
            out = _accumulate(terms, self.threads, call, self.accum_threshold)
        self._close("lmm", call)
        return out

    def rmm(self, x: SparseMatrix, *, traced: bool = True) -> SparseMatrix:
        """x @ T."""
        r, c = self.shape
        if x.n_cols != r:
            raise ShapeError(f"rmm: target is {r}x{c} but operand is {x.shape}")
        call = self._trace_for(traced)
        if self.matrix is not None:
            out = sparse.spmm(x, self.matrix, threads=self.threads, trace=call)
        else:
            terms = []
            for s, sel in zip(self.table.sources, self.selectors):
                w = _remap_cols_sum(sel.ind_sel, s.n_rows, x, call)
                z = sparse.spmm(w, s, threads=self.threads, trace=call)
                terms.append(_remap_cols_sorted(sel.map_sel_t, c, z, call))
            out = _accumulate(terms, self.threads, call, self.accum_threshold)
        self._close("rmm", call)
        return out

    def transpose_lmm(self, x: SparseMatrix, *, traced: bool = True) -> SparseMatrix:
        """T^T @ x (the gradient-side product in the trainers)."""
        r, c = self.shape
        if x.n_rows != r:
            raise ShapeError(f"transpose_lmm: target is {r}x{c} but operand is {x.shape}")
        call = self._trace_for(traced)
        if self.matrix is not None:
            out = sparse.spmm(self._t_transposed(), x, threads=self.threads, trace=call)
        else:
            terms = []
            for s_t, sel in zip(self.table.sources_t, self.selectors):
                u = _group_sum(sel.group_indptr, sel.group_rows, x, call)
                v = sparse.spmm(s_t, u, threads=self.threads, trace=call)
                terms.append(_gather_rows(sel.map_sel, v, x.n_cols, call))
            out = _accumulate(terms, self.threads, call, self.accum_threshold)
        self._close("transpose_lmm", call)
        return out

    def elementwise(self, func: str, scalar: float | None = None, *,
                    traced: bool = True) -> "TargetHandle":
        """Apply a registered zero-preserving map; the handle stays on its path."""
        if func not in sparse.ELEMENTWISE_FUNCS:
            raise OpError(f"elementwise map {func!r} is not registered "
                          "(or does not preserve zero): requires materialization fallback")
        call = self._trace_for(traced)
        if self.matrix is not None:
            out = TargetHandle(matrix=sparse.elementwise(self.matrix, func, scalar,
                                                         trace=call),
                               threads=self.threads,
                               accum_threshold=self.accum_threshold)
        else:
            new_sources = [sparse.elementwise(s, func, scalar, trace=call)
                           for s in self.table.sources]
            ft = FactorizedTable(new_sources, self.table.mappings,
                                 self.table.indicators, self.table.join_type,
                                 self.table.r_T, self.table.c_T)
            out = TargetHandle(table=ft, threads=self.threads,
                               accum_threshold=self.accum_threshold)
            out._selectors = self._selectors
        self._close("elementwise", call)
        return out

    def row_sum(self, *, traced: bool = True) -> SparseMatrix:
        """Column vector of row sums; outer-join padding rows contribute zero."""
        call = self._trace_for(traced)
        if self.matrix is not None:
            out = sparse.row_sum(self.matrix, trace=call)
        else:
            # M_k^T @ ones == ones (every source column maps somewhere), so the
            # mapping drops out and only the indicator scatter remains.
            terms = []
            for s, sel in zip(self.table.sources, self.selectors):
                rs = sparse.row_sum(s, trace=call)
                terms.append(_gather_rows(sel.ind_sel, rs, 1, call))
            out = _accumulate(terms, self.threads, call, self.accum_threshold)
        self._close("row_sum", call)
        return out

    def col_sum(self, *, traced: bool = True) -> SparseMatrix:
        """Row vector of column sums."""
        call = self._trace_for(traced)
        if self.matrix is not None:
            out = sparse.col_sum(self.matrix, trace=call)
        else:
            terms = []
            for s, sel in zip(self.table.sources, self.selectors):
                fanout = np.bincount(sel.ind_sel[sel.ind_sel >= 0],
                                     minlength=s.n_rows).astype(np.float64)
                weights = SparseMatrix.from_dense(fanout.reshape(1, -1))
                z = sparse.spmm(weights, s, threads=self.threads, trace=call)
                terms.append(_remap_cols_sorted(sel.map_sel_t, self.shape[1], z, call))
            out = _accumulate(terms, self.threads, call, self.accum_threshold)
        self._close("col_sum", call)
        return out


def export_trace_csv(path, rows: list[tuple[str, str, OpTrace]]) -> None:
    """Write logged per-op traces as CSV."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["op", "side", "multiply_adds", "bytes_read",
                    "bytes_written", "wall_time"])
        for name, side, tr in rows:
            w.writerow([name, side, tr.multiply_add_count, tr.bytes_read,
                        tr.bytes_written, f"{tr.wall_time:.9f}"])
