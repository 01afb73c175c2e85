"""Numba kernels backing the sparse matrix type.

All kernels are nogil so the Python-level chunk dispatcher can run them from a
thread pool. Every kernel processes a contiguous row range and touches only its
own output slots, so results are bit-identical for any worker count: each output
row is accumulated sequentially, in a fixed order, by exactly one thread.
"""

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def gustavson_chunk(r0, r1, a_indptr, a_indices, a_data,
                    b_indptr, b_indices, b_data, b_cols,
                    out_rownnz, out_indices, out_data):
    """Row-parallel Gustavson product for rows [r0, r1) of A.

    Uses a dense accumulator of width b_cols per row; emitted columns are in
    ascending order and exact zeros (including cancellations) are dropped.
    Returns (entries written, multiply-adds performed).
    """
    acc = np.zeros(b_cols)
    pos = 0
    madds = 0
    for i in range(r0, r1):
        for jj in range(b_cols):
            acc[jj] = 0.0
        for p in range(a_indptr[i], a_indptr[i + 1]):
            j = a_indices[p]
            v = a_data[p]
            for q in range(b_indptr[j], b_indptr[j + 1]):
                acc[b_indices[q]] += v * b_data[q]
            madds += b_indptr[j + 1] - b_indptr[j]
        cnt = 0
        for jj in range(b_cols):
            if acc[jj] != 0.0:
                out_indices[pos] = jj
                out_data[pos] = acc[jj]
                pos += 1
                cnt += 1
        out_rownnz[i - r0] = cnt
    return pos, madds


@njit(nogil=True, cache=True)
def rowcol_chunk(r0, r1, a_indptr, a_indices, a_data,
                 bt_indptr, bt_indices, bt_data, b_cols,
                 out_rownnz, out_indices, out_data):
    """Textbook row-times-column product for rows [r0, r1) of A.

    B is given transposed (bt = CSC view of B). For every (row i, column j)
    pair the operand-visit counter charges nnz(row i) + nnz(column j), which is
    what the analytic cost formulas count; the merge below then computes the
    actual dot product. Returns (entries written, operand visits charged).
    """
    pos = 0
    visits = 0
    for i in range(r0, r1):
        ra0 = a_indptr[i]
        ra1 = a_indptr[i + 1]
        cnt = 0
        for j in range(b_cols):
            cb0 = bt_indptr[j]
            cb1 = bt_indptr[j + 1]
            visits += (ra1 - ra0) + (cb1 - cb0)
            s = 0.0
            p = ra0
            q = cb0
            while p < ra1 and q < cb1:
                ka = a_indices[p]
                kb = bt_indices[q]
                if ka == kb:
                    s += a_data[p] * bt_data[q]
                    p += 1
                    q += 1
                elif ka < kb:
                    p += 1
                else:
                    q += 1
            if s != 0.0:
                out_indices[pos] = j
                out_data[pos] = s
                pos += 1
                cnt += 1
        out_rownnz[i - r0] = cnt
    return pos, visits


@njit(nogil=True, cache=True)
def transpose_kernel(n_rows, n_cols, indptr, indices, data):
    """CSR transpose by counting sort; output rows keep ascending columns."""
    nnz = indices.shape[0]
    t_indptr = np.zeros(n_cols + 1, np.int64)
    for p in range(nnz):
        t_indptr[indices[p] + 1] += 1
    for j in range(n_cols):
        t_indptr[j + 1] += t_indptr[j]
    fill = t_indptr[:-1].copy()
    t_indices = np.empty(nnz, np.int64)
    t_data = np.empty(nnz, np.float64)
    for i in range(n_rows):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            dst = fill[j]
            t_indices[dst] = i
            t_data[dst] = data[p]
            fill[j] = dst + 1
    return t_indptr, t_indices, t_data


@njit(nogil=True, cache=True)
def merge_combine_chunk(r0, r1, a_indptr, a_indices, a_data,
                        b_indptr, b_indices, b_data, coef,
                        out_rownnz, out_indices, out_data):
    """Per-row sorted merge computing a + coef * b; exact zeros dropped."""
    pos = 0
    for i in range(r0, r1):
        p = a_indptr[i]
        pe = a_indptr[i + 1]
        q = b_indptr[i]
        qe = b_indptr[i + 1]
        cnt = 0
        while p < pe or q < qe:
            if q >= qe or (p < pe and a_indices[p] < b_indices[q]):
                col = a_indices[p]
                val = a_data[p]
                p += 1
            elif p >= pe or b_indices[q] < a_indices[p]:
                col = b_indices[q]
                val = coef * b_data[q]
                q += 1
            else:
                col = a_indices[p]
                val = a_data[p] + coef * b_data[q]
                p += 1
                q += 1
            if val != 0.0:
                out_indices[pos] = col
                out_data[pos] = val
                pos += 1
                cnt += 1
        out_rownnz[i - r0] = cnt
    return pos


@njit(nogil=True, cache=True)
def hadamard_chunk(r0, r1, a_indptr, a_indices, a_data,
                   b_indptr, b_indices, b_data,
                   out_rownnz, out_indices, out_data):
    """Per-row sorted intersection computing a * b elementwise."""
    pos = 0
    for i in range(r0, r1):
        p = a_indptr[i]
        pe = a_indptr[i + 1]
        q = b_indptr[i]
        qe = b_indptr[i + 1]
        cnt = 0
        while p < pe and q < qe:
            ka = a_indices[p]
            kb = b_indices[q]
            if ka == kb:
                val = a_data[p] * b_data[q]
                if val != 0.0:
                    out_indices[pos] = ka
                    out_data[pos] = val
                    pos += 1
                    cnt += 1
                p += 1
                q += 1
            elif ka < kb:
                p += 1
            else:
                q += 1
        out_rownnz[i - r0] = cnt
    return pos


@njit(nogil=True, cache=True)
def row_sum_kernel(n_rows, indptr, data):
    out = np.zeros(n_rows)
    for i in range(n_rows):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p]
        out[i] = s
    return out


@njit(nogil=True, cache=True)
def col_sum_kernel(n_cols, indices, data):
    out = np.zeros(n_cols)
    for p in range(indices.shape[0]):
        out[indices[p]] += data[p]
    return out


@njit(nogil=True, cache=True)
def compact_kernel(n_rows, indptr, indices, data):
    """Rebuild a CSR triple with explicit zeros removed."""
    new_indptr = np.zeros(n_rows + 1, np.int64)
    pos = 0
    new_indices = np.empty(indices.shape[0], np.int64)
    new_data = np.empty(data.shape[0], np.float64)
    for i in range(n_rows):
        for p in range(indptr[i], indptr[i + 1]):
            if data[p] != 0.0:
                new_indices[pos] = indices[p]
                new_data[pos] = data[p]
                pos += 1
        new_indptr[i + 1] = pos
    return new_indptr, new_indices[:pos].copy(), new_data[:pos].copy()


@njit(nogil=True, cache=True)
def scatter_add_dense(indptr, indices, data, out, row_offset):
    """Accumulate a CSR block into a dense buffer starting at row_offset."""
    n_rows = indptr.shape[0] - 1
    for i in range(n_rows):
        for p in range(indptr[i], indptr[i + 1]):
            out[row_offset + i, indices[p]] += data[p]


@njit(nogil=True, cache=True)
def gather_rows_kernel(sel, indptr, indices, data):
    """Output row i is input row sel[i]; sel[i] == -1 yields an empty row.

    Pure data movement (how binary selector matrices are applied): no
    arithmetic is performed.
    """
    n_out = sel.shape[0]
    out_indptr = np.zeros(n_out + 1, np.int64)
    for i in range(n_out):
        j = sel[i]
        cnt = indptr[j + 1] - indptr[j] if j >= 0 else 0
        out_indptr[i + 1] = out_indptr[i] + cnt
    total = out_indptr[n_out]
    out_indices = np.empty(total, np.int64)
    out_data = np.empty(total, np.float64)
    for i in range(n_out):
        j = sel[i]
        if j < 0:
            continue
        dst = out_indptr[i]
        for p in range(indptr[j], indptr[j + 1]):
            out_indices[dst] = indices[p]
            out_data[dst] = data[p]
            dst += 1
    return out_indptr, out_indices, out_data


@njit(nogil=True, cache=True)
def group_sum_kernel(group_indptr, group_members, indptr, indices, data,
                     n_cols):
    """Output row g is the sum of input rows group_members[slice g].

    Members are accumulated in ascending stored order, so the result is
    deterministic. Additions only; no multiplies. Returns a CSR triple.
    """
    n_groups = group_indptr.shape[0] - 1
    acc = np.zeros(n_cols)
    out_indptr = np.zeros(n_groups + 1, np.int64)
    cap = 0
    for g in range(n_groups):
        rows_nnz = 0
        for m in range(group_indptr[g], group_indptr[g + 1]):
            i = group_members[m]
            rows_nnz += indptr[i + 1] - indptr[i]
        cap += min(rows_nnz, n_cols)
    out_indices = np.empty(cap, np.int64)
    out_data = np.empty(cap, np.float64)
    pos = 0
    for g in range(n_groups):
        for jj in range(n_cols):
            acc[jj] = 0.0
        for m in range(group_indptr[g], group_indptr[g + 1]):
            i = group_members[m]
            for p in range(indptr[i], indptr[i + 1]):
                acc[indices[p]] += data[p]
        cnt = 0
        for jj in range(n_cols):
            if acc[jj] != 0.0:
                out_indices[pos] = jj
                out_data[pos] = acc[jj]
                pos += 1
                cnt += 1
        out_indptr[g + 1] = out_indptr[g] + cnt
    return out_indptr, out_indices[:pos].copy(), out_data[:pos].copy()


@njit(nogil=True, cache=True)
def remap_cols_sum_kernel(col_map, out_width, indptr, indices, data):
    """Remap column t to col_map[t] (dropping t where col_map[t] == -1) and
    sum collisions per row. Additions only. Returns a CSR triple."""
    n_rows = indptr.shape[0] - 1
    acc = np.zeros(out_width)
    out_indptr = np.zeros(n_rows + 1, np.int64)
    cap = 0
    for i in range(n_rows):
        cap += min(indptr[i + 1] - indptr[i], out_width)
    out_indices = np.empty(cap, np.int64)
    out_data = np.empty(cap, np.float64)
    pos = 0
    for i in range(n_rows):
        for jj in range(out_width):
            acc[jj] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            t = col_map[indices[p]]
            if t >= 0:
                acc[t] += data[p]
        cnt = 0
        for jj in range(out_width):
            if acc[jj] != 0.0:
                out_indices[pos] = jj
                out_data[pos] = acc[jj]
                pos += 1
                cnt += 1
        out_indptr[i + 1] = out_indptr[i] + cnt
    return out_indptr, out_indices[:pos].copy(), out_data[:pos].copy()


@njit(nogil=True, cache=True)
def remap_cols_sorted_kernel(col_map, out_width, indptr, indices, data):
    """Remap column j to col_map[j] (injective; -1 drops the entry) and
    re-sort each row by the new column index. Pure data movement."""
    n_rows = indptr.shape[0] - 1
    out_indptr = np.zeros(n_rows + 1, np.int64)
    out_indices = np.empty(indices.shape[0], np.int64)
    out_data = np.empty(data.shape[0], np.float64)
    pos = 0
    for i in range(n_rows):
        start = pos
        for p in range(indptr[i], indptr[i + 1]):
            t = col_map[indices[p]]
            if t >= 0:
                out_indices[pos] = t
                out_data[pos] = data[p]
                pos += 1
        row = out_indices[start:pos]
        order = np.argsort(row)
        out_indices[start:pos] = row[order]
        out_data[start:pos] = out_data[start:pos][order]
        out_indptr[i + 1] = pos
    return out_indptr, out_indices[:pos].copy(), out_data[:pos].copy()


@njit(nogil=True, cache=True)
def structure_ok(n_rows, n_cols, indptr, indices, data):
    """Check CSR invariants; returns an error code (0 = valid).

    1: indptr not monotone / wrong bounds, 2: column index out of range,
    3: columns not strictly increasing within a row, 4: explicit zero stored,
    5: non-finite value stored.
    """
    if indptr[0] != 0 or indptr[n_rows] != indices.shape[0]:
        return 1
    for i in range(n_rows):
        if indptr[i + 1] < indptr[i]:
            return 1
        prev = -1
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j < 0 or j >= n_cols:
                return 2
            if j <= prev:
                return 3
            if data[p] == 0.0:
                return 4
            if not np.isfinite(data[p]):
                return 5
            prev = j
    return 0
