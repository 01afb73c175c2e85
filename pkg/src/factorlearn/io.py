"""Matrix interchange: Matrix Market text files and a binary cache format.

The binary cache (magic ``ILG1``) is little-endian: header of n_rows, n_cols,
nnz as unsigned 64-bit, then row extents (n_rows + 1), column indices (nnz)
as unsigned 64-bit, then values as float64. It exists so benchmark runs do not
pay Matrix Market parsing costs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .sparse import SparseMatrix, SparseStructureError

_MM_HEADER = "%%MatrixMarket matrix coordinate real general"
_MAGIC = b"ILG1"


class FormatError(ValueError):
    """Raised for malformed matrix files."""


def write_matrix_market(path, a: SparseMatrix) -> None:
    with open(path, "w") as fh:
        fh.write(_MM_HEADER + "\n")
        fh.write(f"{a.n_rows} {a.n_cols} {a.nnz}\n")
        for i in range(a.n_rows):
            for p in range(a.indptr[i], a.indptr[i + 1]):
                fh.write(f"{i + 1} {a.indices[p] + 1} {a.data[p]:.17g}\n")


def read_matrix_market(path) -> SparseMatrix:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("%%MatrixMarket"):
            raise FormatError(f"{path}: missing MatrixMarket banner")
        fields = header.split()
        if fields[1:] != ["matrix", "coordinate", "real", "general"]:
            raise FormatError(f"{path}: unsupported MatrixMarket flavor {header!r}")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        try:
            n_rows, n_cols, nnz = (int(t) for t in line.split())
        except ValueError:
            raise FormatError(f"{path}: bad size line {line!r}") from None
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for line in fh:
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            if k >= nnz:
                raise FormatError(f"{path}: more entries than declared ({nnz})")
            i, j, v = line.split()
            rows[k] = int(i) - 1
            cols[k] = int(j) - 1
            vals[k] = float(v)
            k += 1
        if k != nnz:
            raise FormatError(f"{path}: {k} entries read, {nnz} declared")
    try:
        return SparseMatrix.from_coo(n_rows, n_cols, rows, cols, vals)
    except (SparseStructureError, ValueError, IndexError) as e:
        raise FormatError(f"{path}: invalid entries: {e}") from None


def write_binary(path, a: SparseMatrix) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        np.array([a.n_rows, a.n_cols, a.nnz], dtype="<u8").tofile(fh)
        a.indptr.astype("<u8").tofile(fh)
        a.indices.astype("<u8").tofile(fh)
        a.data.astype("<f8").tofile(fh)


def read_binary(path) -> SparseMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        header = np.fromfile(fh, dtype="<u8", count=3)
        if header.shape[0] != 3:
            raise FormatError(f"{path}: truncated header")
        n_rows, n_cols, nnz = (int(x) for x in header)
        indptr = np.fromfile(fh, dtype="<u8", count=n_rows + 1)
        indices = np.fromfile(fh, dtype="<u8", count=nnz)
        data = np.fromfile(fh, dtype="<f8", count=nnz)
        if indptr.shape[0] != n_rows + 1 or indices.shape[0] != nnz or data.shape[0] != nnz:
            raise FormatError(f"{path}: truncated body")
    try:
        return SparseMatrix(n_rows, n_cols, indptr.astype(np.int64),
                            indices.astype(np.int64), data)
    except (SparseStructureError, ValueError) as e:
        raise FormatError(f"{path}: invalid body: {e}") from None


def save_matrix(path, a: SparseMatrix) -> None:
    """Dispatch on suffix: .mtx is Matrix Market, anything else binary."""
    if Path(path).suffix == ".mtx":
        write_matrix_market(path, a)
    else:
        write_binary(path, a)


def load_matrix(path) -> SparseMatrix:
    if Path(path).suffix == ".mtx":
        return read_matrix_market(path)
    return read_binary(path)
