import numpy as np
import pytest

from factorlearn.metadata import (
    FactorizedTable,
    IndicatorMatrix,
    MappingMatrix,
)
from factorlearn.sparse import SparseMatrix


def build_two_source(join_type="inner"):
    """Canonical 4x4 two-source join used across the suite.

    Source 1 holds target columns {0,1} with identity row mapping; source 2
    holds columns {2,3} with each dimension row fanning out to two target
    rows.  Dense reference is returned alongside the factorized form.
    """
    s1 = SparseMatrix.from_dense([[1, 2], [3, 4], [5, 6], [7, 8]])
    s2 = SparseMatrix.from_dense([[10, 0], [30, 40]])
    m1 = MappingMatrix(SparseMatrix.from_dense(
        [[1, 0], [0, 1], [0, 0], [0, 0]]))
    m2 = MappingMatrix(SparseMatrix.from_dense(
        [[0, 0], [0, 0], [1, 0], [0, 1]]))
    i1 = IndicatorMatrix(SparseMatrix.identity(4))
    i2 = IndicatorMatrix(SparseMatrix.from_dense(
        [[1, 0], [1, 0], [0, 1], [0, 1]]))
    ft = FactorizedTable([s1, s2], [m1, m2], [i1, i2], join_type, 4, 4)
    ref = np.array([[1, 2, 10, 0], [3, 4, 10, 0],
                    [5, 6, 30, 40], [7, 8, 30, 40]], dtype=float)
    return ft, ref


def build_outer_table():
    """5-row variant where the last target row is unmatched in both sources."""
    s1 = SparseMatrix.from_dense([[1, 2], [3, 4], [5, 6], [7, 8]])
    s2 = SparseMatrix.from_dense([[10, 0], [30, 40]])
    m1 = MappingMatrix(SparseMatrix.from_dense(
        [[1, 0], [0, 1], [0, 0], [0, 0]]))
    m2 = MappingMatrix(SparseMatrix.from_dense(
        [[0, 0], [0, 0], [1, 0], [0, 1]]))
    i1 = IndicatorMatrix(SparseMatrix.from_dense(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1],
         [0, 0, 0, 0]]))
    i2 = IndicatorMatrix(SparseMatrix.from_dense(
        [[1, 0], [1, 0], [0, 1], [0, 1], [0, 0]]))
    ft = FactorizedTable([s1, s2], [m1, m2], [i1, i2], "outer", 5, 4)
    ref = np.array([[1, 2, 10, 0], [3, 4, 10, 0], [5, 6, 30, 40],
                    [7, 8, 30, 40], [0, 0, 0, 0]], dtype=float)
    return ft, ref


def random_factorized(seed, r_t=300, join_type="inner", sparsity=0.3,
                      n_sources=2, rho_c=1.0):
    from factorlearn.datagen import GenSpec, generate

    spec = GenSpec(r_t=r_t, n_sources=n_sources, c_min=4, c_max=12,
                   sparsity=sparsity, rho_c=rho_c, join_type=join_type,
                   seed=seed)
    ft, _ = generate(spec)
    return ft


def random_sparse(rng, n_rows, n_cols, density=0.3):
    mask = rng.random((n_rows, n_cols)) < density
    dense = np.where(mask, rng.standard_normal((n_rows, n_cols)), 0.0)
    return SparseMatrix.from_dense(dense)


@pytest.fixture
def two_source():
    return build_two_source()


@pytest.fixture
def outer_table():
    return build_outer_table()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
