import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pncriterion.exceptions import DimensionMismatch, NotPositiveDefinite
from pncriterion.linalg import (
    check_pd,
    is_symmetric,
    mode_product,
    multi_mode_product,
    swap_pairs,
    sym_solve,
    symmetrize,
)


def test_identity_solve():
    B = np.arange(6.0).reshape(3, 2)
    assert np.allclose(sym_solve(np.eye(3), B), B)


def test_diagonal_solve():
    assert np.allclose(sym_solve(np.diag([2.0, 4.0]), np.eye(2)), np.diag([0.5, 0.25]))


@pytest.mark.parametrize("seed", range(5))
def test_random_pd_residual(seed):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((10, 10))
    A = W @ W.T + 10 * np.eye(10)
    B = rng.standard_normal((10, 4))
    X = sym_solve(A, B)
    assert np.linalg.norm(A @ X - B) / np.linalg.norm(B) < 1e-10


def test_not_pd_raises():
    with pytest.raises(NotPositiveDefinite):
        sym_solve(np.diag([1.0, -1.0]), np.eye(2))
    with pytest.raises(NotPositiveDefinite):
        check_pd(np.diag([1.0, 1e-14]))


def test_mode_product_identity():
    T = np.random.default_rng(0).standard_normal((3, 3, 3, 3))
    for mode in range(4):
        assert np.array_equal(mode_product(T, np.eye(3), mode), T)


def test_mode_product_rank_one_by_hand():
    a, b, c = np.array([1.0, 2.0]), np.array([3.0, -1.0]), np.array([0.5, 4.0])
    T = np.einsum("i,j,k->ijk", a, b, c)
    M = np.array([[1.0, 2.0], [0.0, 3.0]])
    out = mode_product(T, M, 1)
    expected = np.zeros((2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for r in range(2):
                    expected[i, j, k] += T[i, r, k] * M[r, j]
    assert np.allclose(out, expected, rtol=0, atol=1e-15)


def test_mode_product_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        mode_product(np.zeros((2, 2, 2)), np.eye(3), 0)


@given(st.integers(0, 10_000), st.permutations([0, 1, 2]))
def test_mode_products_commute(seed, order):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((3, 3, 3))
    Ms = [rng.standard_normal((3, 3)) for _ in range(3)]
    ref = mode_product(mode_product(mode_product(T, Ms[0], 0), Ms[1], 1), Ms[2], 2)
    out = T
    for mode in order:
        out = mode_product(out, Ms[mode], mode)
    assert np.max(np.abs(out - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_multi_mode_product_matches_einsum():
    rng = np.random.default_rng(3)
    T = rng.standard_normal((3, 3, 3))
    M = rng.standard_normal((3, 3))
    assert np.allclose(multi_mode_product(T, M), np.einsum("abc,ai,bj,ck->ijk", T, M, M, M))


@given(st.integers(0, 10_000), st.sampled_from([None, [(0, 1)], [(0, 1), (2, 3)], [(0, 1, 2)]]))
def test_symmetrize_idempotent(seed, groups):
    T = np.random.default_rng(seed).standard_normal((3, 3, 3, 3))
    S = symmetrize(T, groups)
    assert np.allclose(symmetrize(S, groups), S, rtol=0, atol=1e-14)
    assert is_symmetric(S, 1e-12, groups)


def test_swap_pairs_symmetry():
    T = np.random.default_rng(0).standard_normal((2, 2, 2, 2))
    S = swap_pairs(T)
    assert np.allclose(S, S.transpose(2, 3, 0, 1))
