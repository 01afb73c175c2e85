"""Compressed sparse row matrices and the kernels everything else builds on.

Matrices are immutable after construction: kernels never mutate their inputs,
so instances can be shared freely across threads. Every kernel takes an
explicit worker-thread count and an optional :class:`OpTrace` that accumulates
the arithmetic work and bytes moved by the call. Work is split into contiguous
row chunks and each output row is produced by exactly one worker in a fixed
per-row order, so results are bit-identical for 1, 2, or N threads.

Dense data is representable too (a fully dense matrix is just density 1.0);
the "materialized" execution path reuses these kernels unchanged.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k

# Per-element traffic charged by the instrumentation: 8 bytes of payload plus
# an 8-byte stored index.
_ELEM_BYTES = 16

_pools: dict[int, ThreadPoolExecutor] = {}


def _pool(threads: int) -> ThreadPoolExecutor:
    pool = _pools.get(threads)
    if pool is None:
        pool = ThreadPoolExecutor(max_workers=threads)
        _pools[threads] = pool
    return pool


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class SparseStructureError(ValueError):
    """Raised when a CSR triple violates the storage invariants."""


_STRUCTURE_ERRORS = {
    1: "row extents are not monotone or do not span the stored values",
    2: "column index out of range",
    3: "column indices not strictly increasing within a row",
    4: "explicit zero stored",
    5: "non-finite value stored",
}


@dataclass
class OpTrace:
    """Work performed by one or more kernel calls.

    multiply_add_count counts scalar multiply-adds actually performed, except
    for kernels run in cost-formula counting mode, where it counts operand
    element visits of the textbook row-times-column algorithm (the unit the
    analytic cost model charges). bytes_read/bytes_written charge 16 bytes per
    stored element touched (8-byte value + 8-byte index).
    """

    multiply_add_count: int = 0
    bytes_read: int = 0
    bytes_written: int = 0
    wall_time: float = 0.0

    def record(self, madds: int, bytes_read: int, bytes_written: int, seconds: float) -> None:
        self.multiply_add_count += int(madds)
        self.bytes_read += int(bytes_read)
        self.bytes_written += int(bytes_written)
        self.wall_time += seconds

    def merge(self, other: "OpTrace") -> None:
        self.record(other.multiply_add_count, other.bytes_read,
                    other.bytes_written, other.wall_time)


class SparseMatrix:
    """2-D matrix in compressed sparse row form with float64 values.

    Invariants: column indices are strictly increasing within every row and
    below n_cols; no explicit zeros are stored; indptr is monotone with
    indptr[0] == 0 and indptr[-1] == nnz.
    """

    __slots__ = ("n_rows", "n_cols", "indptr", "indices", "data")

    def __init__(self, n_rows: int, n_cols: int, indptr, indices, data, *, check: bool = True):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if check:
            if self.indptr.shape[0] != self.n_rows + 1:
                raise SparseStructureError(
                    f"indptr has length {self.indptr.shape[0]}, expected {self.n_rows + 1}")
            if self.indices.shape[0] != self.data.shape[0]:
                raise SparseStructureError("indices and data lengths differ")
            code = _k.structure_ok(self.n_rows, self.n_cols, self.indptr,
                                   self.indices, self.data)
            if code:
                raise SparseStructureError(_STRUCTURE_ERRORS[int(code)])

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def density(self) -> float:
        cells = self.n_rows * self.n_cols
        return self.nnz / cells if cells else 0.0

    @classmethod
    def from_dense(cls, arr) -> "SparseMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("from_dense expects a 2-D array")
        rows, cols = np.nonzero(arr)
        indptr = np.zeros(arr.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=arr.shape[0]), out=indptr[1:])
        return cls(arr.shape[0], arr.shape[1], indptr, cols, arr[rows, cols], check=False)

    @classmethod
    def from_coo(cls, n_rows: int, n_cols: int, rows, cols, vals) -> "SparseMatrix":
        """Build from coordinate triples; duplicates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise SparseStructureError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise SparseStructureError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            keys = rows * n_cols + cols
            uniq, start = np.unique(keys, return_index=True)
            vals = np.add.reduceat(vals, start)
            rows = uniq // n_cols
            cols = uniq % n_cols
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
        return cls(n_rows, n_cols, indptr, cols, vals, check=False)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n), check=False)

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "SparseMatrix":
        return cls(n_rows, n_cols, np.zeros(n_rows + 1, dtype=np.int64),
                   np.empty(0, dtype=np.int64), np.empty(0), check=False)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        _k.scatter_add_dense(self.indptr, self.indices, self.data, out, 0)
        return out

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.indptr)

    def __matmul__(self, other: "SparseMatrix") -> "SparseMatrix":
        return spmm(self, other)

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        return add(self, other)

    def __sub__(self, other: "SparseMatrix") -> "SparseMatrix":
        return sub(self, other)

    @property
    def T(self) -> "SparseMatrix":
        return transpose(self)

    def __repr__(self) -> str:
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


def equal_exact(a: SparseMatrix, b: SparseMatrix) -> bool:
    """Bitwise structural and value equality."""
    return (a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data))


def frobenius_norm(a: SparseMatrix) -> float:
    return float(np.sqrt(np.dot(a.data, a.data)))


def rel_frobenius_diff(a: SparseMatrix, b: SparseMatrix) -> float:
    """||a - b||_F / max(||a||_F, ||b||_F); 0 when both are empty."""
    diff = frobenius_norm(sub(a, b))
    scale = max(frobenius_norm(a), frobenius_norm(b))
    return diff / scale if scale > 0.0 else diff


def _chunk_bounds(n_rows: int, threads: int) -> list[tuple[int, int]]:
    if threads <= 1 or n_rows < 2 * threads:
        return [(0, n_rows)]
    edges = np.linspace(0, n_rows, threads + 1, dtype=np.int64)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(threads)
            if edges[i] < edges[i + 1]]


def _assemble(n_rows, n_cols, chunks, results):
    """Stitch per-chunk (rownnz, indices, data, pos) outputs in chunk order."""
    total = sum(pos for _, _, _, pos in results)
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    indices = np.empty(total, dtype=np.int64)
    data = np.empty(total, dtype=np.float64)
    at = 0
    for (r0, r1), (rownnz, idx, dat, pos) in zip(chunks, results):
        indptr[r0 + 1:r1 + 1] = np.cumsum(rownnz) + at
        indices[at:at + pos] = idx[:pos]
        data[at:at + pos] = dat[:pos]
        at += pos
    return SparseMatrix(n_rows, n_cols, indptr, indices, data, check=False)


def spmm(a: SparseMatrix, b: SparseMatrix, *, threads: int = 1,
         trace: OpTrace | None = None, count_formula: bool = False) -> SparseMatrix:
    """Sparse product a @ b.

    The default kernel is row-parallel Gustavson with a dense per-row
    accumulator; the trace then records multiply-adds actually performed.
    With count_formula=True the textbook row-times-column kernel runs instead
    and the trace records its operand visits, which total exactly
    c_B * nnz(A) + r_A * nnz(B) for any inputs (the analytic cost value).
    """
    if a.n_cols != b.n_rows:
        raise ShapeError(f"spmm: {a.shape} @ {b.shape} do not conform")
    t0 = time.perf_counter()
    chunks = _chunk_bounds(a.n_rows, threads)

    if count_formula:
        bt = transpose(b)

        def run(r0, r1):
            rows = r1 - r0
            rownnz = np.empty(rows, dtype=np.int64)
            idx = np.empty(rows * b.n_cols, dtype=np.int64)
            dat = np.empty(rows * b.n_cols, dtype=np.float64)
            pos, work = _k.rowcol_chunk(r0, r1, a.indptr, a.indices, a.data,
                                        bt.indptr, bt.indices, bt.data, b.n_cols,
                                        rownnz, idx, dat)
            return rownnz, idx, dat, pos, work
    else:
        def run(r0, r1):
            rows = r1 - r0
            rownnz = np.empty(rows, dtype=np.int64)
            idx = np.empty(rows * b.n_cols, dtype=np.int64)
            dat = np.empty(rows * b.n_cols, dtype=np.float64)
            pos, work = _k.gustavson_chunk(r0, r1, a.indptr, a.indices, a.data,
                                           b.indptr, b.indices, b.data, b.n_cols,
                                           rownnz, idx, dat)
            return rownnz, idx, dat, pos, work

    if len(chunks) == 1:
        results = [run(*chunks[0])]
    else:
        results = list(_pool(len(chunks)).map(lambda rr: run(*rr), chunks))

    work = sum(r[4] for r in results)
    out = _assemble(a.n_rows, b.n_cols, chunks, [r[:4] for r in results])
    if trace is not None:
        trace.record(work, _ELEM_BYTES * (a.nnz + work), _ELEM_BYTES * out.nnz,
                     time.perf_counter() - t0)
    return out


def transpose(a: SparseMatrix, *, trace: OpTrace | None = None) -> SparseMatrix:
    t0 = time.perf_counter()
    indptr, indices, data = _k.transpose_kernel(a.n_rows, a.n_cols, a.indptr,
                                                a.indices, a.data)
    out = SparseMatrix(a.n_cols, a.n_rows, indptr, indices, data, check=False)
    if trace is not None:
        trace.record(0, _ELEM_BYTES * a.nnz, _ELEM_BYTES * a.nnz,
                     time.perf_counter() - t0)
    return out


# Registered elementwise maps. Every entry satisfies f(0) == 0, which is what
# makes applying f to stored values alone correct.
ELEMENTWISE_FUNCS = {
    "scale": (True, lambda v, x: v * x),
    "divide": (True, lambda v, x: v / x),
    "square": (False, lambda v, _: v * v),
    "abs": (False, lambda v, _: np.abs(v)),
    "expm1": (False, lambda v, _: np.expm1(v)),
    "logistic_centered": (False, lambda v, _: 1.0 / (1.0 + np.exp(-v)) - 0.5),
}


class ElementwiseError(ValueError):
    """Unknown function tag or invalid scalar for an elementwise map."""


def elementwise(a: SparseMatrix, func: str, scalar: float | None = None, *,
                trace: OpTrace | None = None) -> SparseMatrix:
    """Apply a registered zero-preserving scalar map to the stored values.

    Exact zeros produced by the map (e.g. scale by 0) are compacted away.
    """
    try:
        needs_scalar, fn = ELEMENTWISE_FUNCS[func]
    except KeyError:
        raise ElementwiseError(
            f"unknown elementwise function {func!r}; registered: "
            f"{sorted(ELEMENTWISE_FUNCS)}") from None
    if needs_scalar and scalar is None:
        raise ElementwiseError(f"{func!r} requires a scalar argument")
    if func == "divide" and scalar == 0.0:
        raise ElementwiseError("division by zero scalar")
    t0 = time.perf_counter()
    values = fn(a.data, scalar)
    if np.all(values != 0.0):
        out = SparseMatrix(a.n_rows, a.n_cols, a.indptr, a.indices, values, check=False)
    else:
        indptr, indices, data = _k.compact_kernel(a.n_rows, a.indptr, a.indices,
                                                  np.ascontiguousarray(values))
        out = SparseMatrix(a.n_rows, a.n_cols, indptr, indices, data, check=False)
    if trace is not None:
        trace.record(a.nnz, _ELEM_BYTES * a.nnz, _ELEM_BYTES * out.nnz,
                     time.perf_counter() - t0)
    return out


def _combine(a: SparseMatrix, b: SparseMatrix, coef: float, threads: int,
             trace: OpTrace | None) -> SparseMatrix:
    if a.shape != b.shape:
        raise ShapeError(f"elementwise combine: shapes {a.shape} and {b.shape} differ")
    t0 = time.perf_counter()
    chunks = _chunk_bounds(a.n_rows, threads)

    def run(r0, r1):
        rows = r1 - r0
        cap = int((a.indptr[r1] - a.indptr[r0]) + (b.indptr[r1] - b.indptr[r0]))
        rownnz = np.empty(rows, dtype=np.int64)
        idx = np.empty(cap, dtype=np.int64)
        dat = np.empty(cap, dtype=np.float64)
        pos = _k.merge_combine_chunk(r0, r1, a.indptr, a.indices, a.data,
                                     b.indptr, b.indices, b.data, coef,
                                     rownnz, idx, dat)
        return rownnz, idx, dat, pos

    if len(chunks) == 1:
        results = [run(*chunks[0])]
    else:
        results = list(_pool(len(chunks)).map(lambda rr: run(*rr), chunks))
    out = _assemble(a.n_rows, a.n_cols, chunks, results)
    if trace is not None:
        trace.record(a.nnz + b.nnz, _ELEM_BYTES * (a.nnz + b.nnz),
                     _ELEM_BYTES * out.nnz, time.perf_counter() - t0)
    return out


def add(a: SparseMatrix, b: SparseMatrix, *, threads: int = 1,
        trace: OpTrace | None = None) -> SparseMatrix:
    return _combine(a, b, 1.0, threads, trace)


def sub(a: SparseMatrix, b: SparseMatrix, *, threads: int = 1,
        trace: OpTrace | None = None) -> SparseMatrix:
    return _combine(a, b, -1.0, threads, trace)


def hadamard(a: SparseMatrix, b: SparseMatrix, *, threads: int = 1,
             trace: OpTrace | None = None) -> SparseMatrix:
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    t0 = time.perf_counter()
    chunks = _chunk_bounds(a.n_rows, threads)

    def run(r0, r1):
        rows = r1 - r0
        cap = int(min(a.indptr[r1] - a.indptr[r0], b.indptr[r1] - b.indptr[r0]))
        rownnz = np.empty(rows, dtype=np.int64)
        idx = np.empty(cap, dtype=np.int64)
        dat = np.empty(cap, dtype=np.float64)
        pos = _k.hadamard_chunk(r0, r1, a.indptr, a.indices, a.data,
                                b.indptr, b.indices, b.data, rownnz, idx, dat)
        return rownnz, idx, dat, pos

    if len(chunks) == 1:
        results = [run(*chunks[0])]
    else:
        results = list(_pool(len(chunks)).map(lambda rr: run(*rr), chunks))
    out = _assemble(a.n_rows, a.n_cols, chunks, results)
    if trace is not None:
        trace.record(min(a.nnz, b.nnz), _ELEM_BYTES * (a.nnz + b.nnz),
                     _ELEM_BYTES * out.nnz, time.perf_counter() - t0)
    return out


def row_sum(a: SparseMatrix, *, trace: OpTrace | None = None) -> SparseMatrix:
    """Column vector (n_rows x 1) of row sums."""
    t0 = time.perf_counter()
    sums = _k.row_sum_kernel(a.n_rows, a.indptr, a.data)
    out = SparseMatrix.from_dense(sums.reshape(-1, 1))
    if trace is not None:
        trace.record(a.nnz, _ELEM_BYTES * a.nnz, _ELEM_BYTES * out.nnz,
                     time.perf_counter() - t0)
    return out


def col_sum(a: SparseMatrix, *, trace: OpTrace | None = None) -> SparseMatrix:
    """Row vector (1 x n_cols) of column sums."""
    t0 = time.perf_counter()
    sums = _k.col_sum_kernel(a.n_cols, a.indices, a.data)
    out = SparseMatrix.from_dense(sums.reshape(1, -1))
    if trace is not None:
        trace.record(a.nnz, _ELEM_BYTES * a.nnz, _ELEM_BYTES * out.nnz,
                     time.perf_counter() - t0)
    return out
