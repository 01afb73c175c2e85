"""CSR core tests.

Oracles: scipy.sparse for products and structure, numpy dense arithmetic
for everything else.  scipy is a test-only dependency.
"""

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from factorlearn.sparse import (
    ELEMENTWISE_FUNCS,
    ElementwiseError,
    OpTrace,
    ShapeError,
    SparseMatrix,
    SparseStructureError,
    add,
    col_sum,
    elementwise,
    equal_exact,
    frobenius_norm,
    hadamard,
    rel_frobenius_diff,
    row_sum,
    spmm,
    sub,
    transpose,
)

from conftest import random_sparse


def to_scipy(a):
    return sp.csr_matrix((a.data, a.indices, a.indptr),
                         shape=(a.n_rows, a.n_cols))


class TestConstruction:
    def test_from_dense_roundtrip(self, rng):
        dense = np.where(rng.random((7, 5)) < 0.4,
                         rng.standard_normal((7, 5)), 0.0)
        a = SparseMatrix.from_dense(dense)
        assert np.array_equal(a.to_dense(), dense)
        assert a.nnz == np.count_nonzero(dense)

    def test_from_coo_sums_duplicates(self):
        a = SparseMatrix.from_coo(2, 3, [0, 0, 1], [1, 1, 2], [2.0, 3.0, 4.0])
        want = np.array([[0, 5, 0], [0, 0, 4.0]])
        assert np.array_equal(a.to_dense(), want)

    def test_from_coo_drops_explicit_zero_sums(self):
        a = SparseMatrix.from_coo(1, 2, [0, 0], [0, 0], [1.0, -1.0])
        assert a.nnz == 0

    def test_identity_and_zeros(self):
        assert np.array_equal(SparseMatrix.identity(3).to_dense(), np.eye(3))
        z = SparseMatrix.zeros(2, 4)
        assert z.nnz == 0 and z.shape == (2, 4)

    def test_rejects_unsorted_columns(self):
        with pytest.raises(SparseStructureError):
            SparseMatrix(1, 3, np.array([0, 2]), np.array([2, 0]),
                         np.array([1.0, 2.0]))

    def test_rejects_duplicate_columns(self):
        with pytest.raises(SparseStructureError):
            SparseMatrix(1, 3, np.array([0, 2]), np.array([1, 1]),
                         np.array([1.0, 2.0]))

    def test_rejects_out_of_range_index(self):
        with pytest.raises(SparseStructureError):
            SparseMatrix(1, 2, np.array([0, 1]), np.array([5]),
                         np.array([1.0]))

    def test_rejects_nonmonotone_indptr(self):
        with pytest.raises(SparseStructureError):
            SparseMatrix(2, 2, np.array([0, 2, 1]), np.array([0, 1]),
                         np.array([1.0, 2.0]))

    def test_rejects_stored_zero(self):
        with pytest.raises(SparseStructureError):
            SparseMatrix(1, 2, np.array([0, 1]), np.array([0]),
                         np.array([0.0]))

    def test_rejects_nan(self):
        with pytest.raises(SparseStructureError):
            SparseMatrix(1, 2, np.array([0, 1]), np.array([0]),
                         np.array([np.nan]))


class TestProducts:
    def test_spmm_matches_scipy(self, rng):
        a = random_sparse(rng, 9, 7, 0.4)
        b = random_sparse(rng, 7, 6, 0.4)
        got = spmm(a, b)
        want = (to_scipy(a) @ to_scipy(b)).toarray()
        assert np.allclose(got.to_dense(), want, rtol=1e-12, atol=1e-14)

    def test_spmm_shape_mismatch(self, rng):
        a = random_sparse(rng, 3, 4)
        b = random_sparse(rng, 5, 2)
        with pytest.raises(ShapeError):
            spmm(a, b)

    def test_operator_matmul(self, rng):
        a = random_sparse(rng, 4, 4)
        b = random_sparse(rng, 4, 4)
        assert equal_exact(a @ b, spmm(a, b))

    def test_thread_count_bit_identical(self, rng):
        a = random_sparse(rng, 64, 48, 0.3)
        b = random_sparse(rng, 48, 32, 0.3)
        single = spmm(a, b, threads=1)
        for threads in (2, 3, 4):
            multi = spmm(a, b, threads=threads)
            assert equal_exact(single, multi)

    def test_identity_is_neutral(self, rng):
        a = random_sparse(rng, 6, 6, 0.5)
        assert equal_exact(spmm(SparseMatrix.identity(6), a), a)
        assert equal_exact(spmm(a, SparseMatrix.identity(6)), a)

    def test_transpose_matches_scipy(self, rng):
        a = random_sparse(rng, 8, 5, 0.4)
        got = transpose(a)
        assert np.array_equal(got.to_dense(), to_scipy(a).T.toarray())
        assert equal_exact(a.T, got)

    def test_add_sub_match_numpy(self, rng):
        a = random_sparse(rng, 6, 6, 0.4)
        b = random_sparse(rng, 6, 6, 0.4)
        assert np.allclose((a + b).to_dense(), a.to_dense() + b.to_dense())
        assert np.allclose((a - b).to_dense(), a.to_dense() - b.to_dense())

    def test_hadamard_matches_numpy(self, rng):
        a = random_sparse(rng, 6, 6, 0.5)
        b = random_sparse(rng, 6, 6, 0.5)
        assert np.allclose(hadamard(a, b).to_dense(),
                           a.to_dense() * b.to_dense())

    def test_row_col_sums(self, rng):
        a = random_sparse(rng, 7, 4, 0.5)
        assert np.allclose(row_sum(a).to_dense(),
                           a.to_dense().sum(axis=1, keepdims=True))
        assert np.allclose(col_sum(a).to_dense(),
                           a.to_dense().sum(axis=0, keepdims=True))


class TestTrace:
    def test_spmm_counts_actual_madds(self):
        # A is 2x2 dense, B is 2x2 dense: Gustavson does 8 madds
        a = SparseMatrix.from_dense([[1, 2], [3, 4]])
        b = SparseMatrix.from_dense([[5, 6], [7, 8]])
        tr = OpTrace()
        spmm(a, b, trace=tr)
        assert tr.multiply_add_count == 8

    def test_spmm_skips_zero_structure(self):
        a = SparseMatrix.from_dense([[1, 0], [0, 2]])
        b = SparseMatrix.from_dense([[3, 0], [0, 4]])
        tr = OpTrace()
        spmm(a, b, trace=tr)
        assert tr.multiply_add_count == 2

    def test_count_formula_mode(self, rng):
        # formula mode pins operand visits: c_B * nnz(A) + r_A * nnz(B)
        a = random_sparse(rng, 10, 8, 0.4)
        b = random_sparse(rng, 8, 6, 0.4)
        tr = OpTrace()
        got = spmm(a, b, trace=tr, count_formula=True)
        assert tr.multiply_add_count == b.n_cols * a.nnz + a.n_rows * b.nnz
        want = spmm(a, b)
        assert np.allclose(got.to_dense(), want.to_dense())

    def test_elementwise_trace_counts_nnz(self, rng):
        a = random_sparse(rng, 9, 9, 0.4)
        tr = OpTrace()
        elementwise(a, "square", trace=tr)
        assert tr.multiply_add_count == a.nnz

    def test_trace_merge(self):
        t1 = OpTrace()
        t1.record(madds=3, bytes_read=10, bytes_written=4, seconds=0.5)
        t2 = OpTrace()
        t2.record(madds=2, bytes_read=1, bytes_written=1, seconds=0.25)
        t1.merge(t2)
        assert t1.multiply_add_count == 5
        assert t1.bytes_read == 11
        assert t1.bytes_written == 5
        assert t1.wall_time == pytest.approx(0.75)


class TestElementwise:
    def test_all_registered_funcs_preserve_zero(self):
        for name, (needs_scalar, fn) in ELEMENTWISE_FUNCS.items():
            scalar = 2.0 if needs_scalar else None
            assert np.all(fn(np.zeros(3), scalar) == 0.0), name

    def test_square_scale_divide(self, rng):
        a = random_sparse(rng, 6, 6, 0.5)
        d = a.to_dense()
        assert np.allclose(elementwise(a, "square").to_dense(), d * d)
        assert np.allclose(elementwise(a, "scale", 3.0).to_dense(), 3 * d)
        assert np.allclose(elementwise(a, "divide", 2.0).to_dense(), d / 2)

    def test_expm1_logistic_centered(self, rng):
        a = random_sparse(rng, 6, 6, 0.5)
        d = a.to_dense()
        assert np.allclose(elementwise(a, "expm1").to_dense(), np.expm1(d))
        mask = d != 0
        want = np.zeros_like(d)
        want[mask] = 1.0 / (1.0 + np.exp(-d[mask])) - 0.5
        assert np.allclose(elementwise(a, "logistic_centered").to_dense(), want)

    def test_unknown_func_rejected(self, rng):
        with pytest.raises(ElementwiseError):
            elementwise(random_sparse(rng, 2, 2), "sigmoid")

    def test_divide_by_zero_rejected(self, rng):
        with pytest.raises(ElementwiseError):
            elementwise(random_sparse(rng, 2, 2), "divide", 0.0)

    def test_missing_scalar_rejected(self, rng):
        with pytest.raises(ElementwiseError):
            elementwise(random_sparse(rng, 2, 2), "scale")


class TestNorms:
    def test_frobenius(self, rng):
        a = random_sparse(rng, 5, 5, 0.6)
        assert frobenius_norm(a) == pytest.approx(
            np.linalg.norm(a.to_dense()))

    def test_rel_diff_zero_for_equal(self, rng):
        a = random_sparse(rng, 5, 5, 0.6)
        assert rel_frobenius_diff(a, a) == 0.0

    def test_rel_diff_scaling(self):
        a = SparseMatrix.from_dense([[3.0, 4.0]])
        b = SparseMatrix.from_dense([[3.0, 4.0 + 5e-9]])
        assert rel_frobenius_diff(a, b) == pytest.approx(1e-9, rel=1e-3)


@st.composite
def sparse_pairs(draw):
    r = draw(st.integers(1, 12))
    k = draw(st.integers(1, 12))
    c = draw(st.integers(1, 12))
    seed = draw(st.integers(0, 2**31))
    density = draw(st.floats(0.0, 0.9))
    rng = np.random.default_rng(seed)
    return (random_sparse(rng, r, k, density),
            random_sparse(rng, k, c, density))


@settings(max_examples=60, deadline=None)
@given(sparse_pairs())
def test_spmm_property_vs_scipy(pair):
    a, b = pair
    got = spmm(a, b).to_dense()
    want = (to_scipy(a) @ to_scipy(b)).toarray()
    assert np.allclose(got, want, rtol=1e-12, atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 15), st.integers(1, 15))
def test_transpose_involution(seed, r, c):
    rng = np.random.default_rng(seed)
    a = random_sparse(rng, r, c, 0.4)
    assert equal_exact(transpose(transpose(a)), a)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 10))
def test_add_commutes(seed, n):
    rng = np.random.default_rng(seed)
    a = random_sparse(rng, n, n, 0.5)
    b = random_sparse(rng, n, n, 0.5)
    assert equal_exact(add(a, b), add(b, a))
    assert np.allclose(sub(a, b).to_dense(), -sub(b, a).to_dense())
