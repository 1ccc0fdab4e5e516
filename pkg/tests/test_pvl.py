import numpy as np
import pytest

from sepcov.errors import DimensionMismatch, SepcovError
from sepcov.kron import kron, vec
from sepcov.pvl import PvlTerms, ScatterMatrix, pvl_decompose, rearrange, scatter

from conftest import random_spd


def test_scatter_single_vector():
    e1 = np.zeros(4)
    e1[0] = 1.0
    sc = scatter(e1[None, :])
    assert sc.n == 1
    assert np.allclose(sc.s, np.outer(e1, e1))


def test_scatter_duplicates():
    y = np.array([1.0, -2.0, 0.5])
    sc = scatter(np.vstack([y, y]))
    assert np.allclose(sc.s, 2 * np.outer(y, y))
    assert sc.n == 2


def test_scatter_matches_naive_loop(rng):
    ys = rng.standard_normal((10, 6))
    sc = scatter(ys)
    naive = sum(np.outer(y, y) for y in ys)
    assert np.allclose(sc.s, naive)
    assert np.linalg.eigvalsh(sc.s)[0] > -1e-12


def test_scatter_rejects_empty():
    with pytest.raises(SepcovError):
        scatter(np.zeros((0, 4)))


def test_rearrange_rank_one(rng):
    a = random_spd(2, rng).m
    b = random_spd(3, rng).m
    r = rearrange(kron(a, b), 2, 3)
    assert np.allclose(r, np.outer(vec(a), vec(b)))
    assert np.linalg.matrix_rank(r) == 1


def test_rearrange_identity():
    r = rearrange(np.eye(4), 2, 2)
    assert np.allclose(r, np.outer(vec(np.eye(2)), vec(np.eye(2))))


def test_rearrange_entry_index_formula(rng):
    d1, d2 = 2, 3
    s = rng.standard_normal((6, 6))
    s = s + s.T
    r = rearrange(s, d1, d2)
    # brute-force index enumeration: row j*d1+i holds vec of block (i, j)
    for i in range(d1):
        for j in range(d1):
            block = s[i * d2:(i + 1) * d2, j * d2:(j + 1) * d2]
            assert np.allclose(r[j * d1 + i], vec(block))


def test_rearrange_dim_check(rng):
    with pytest.raises(DimensionMismatch):
        rearrange(np.eye(6), 2, 2)


def test_decompose_exact_rank_one(rng):
    a = random_spd(2, rng).m
    b = random_spd(3, rng).m
    sc = ScatterMatrix(s=kron(a, b), n=1)
    terms = pvl_decompose(sc, 2, 3)
    assert terms.r == 1
    assert np.allclose(kron(terms.a_terms[0], terms.b_terms[0]), kron(a, b), rtol=1e-10)


@pytest.mark.parametrize("d1,d2,n", [(2, 3, 10), (3, 4, 20), (4, 7, 40)])
def test_decompose_full_rank_exact(d1, d2, n, rng):
    ys = rng.standard_normal((n, d1 * d2))
    sc = scatter(ys)
    terms = pvl_decompose(sc, d1, d2)
    rel = np.linalg.norm(terms.dense() - sc.s) / np.linalg.norm(sc.s)
    assert rel < 1e-10
    assert terms.r <= min(d1 * d1, d2 * d2)


def test_factors_split_by_symmetry_type(rng):
    # each pair is exactly symmetric or exactly antisymmetric, matching types
    ys = rng.standard_normal((15, 12))
    terms = pvl_decompose(scatter(ys), 3, 4)
    saw_symmetric = saw_anti = False
    for a, b in zip(terms.a_terms, terms.b_terms):
        if np.array_equal(a, a.T):
            assert np.array_equal(b, b.T)
            saw_symmetric = True
        else:
            assert np.array_equal(a, -a.T)
            assert np.array_equal(b, -b.T)
            saw_anti = True
    assert saw_symmetric and saw_anti


def test_antisymmetric_pairs_invisible_to_traces(rng):
    # trace against any symmetric matrix vanishes on the antisymmetric pairs
    ys = rng.standard_normal((15, 12))
    terms = pvl_decompose(scatter(ys), 3, 4)
    w = random_spd(4, rng).m
    for a, b in zip(terms.a_terms, terms.b_terms):
        if not np.array_equal(b, b.T):
            assert abs(np.trace(w @ b)) < 1e-12 * np.linalg.norm(b) * np.linalg.norm(w)


@pytest.mark.parametrize("d1,d2", [(2, 3), (4, 7)])
def test_mixed_trace_identity(d1, d2, rng):
    # sum_k tr(S1^-1 A_k) tr(S2^-1 B_k) == tr((S1 (x) S2)^-1 S)
    ys = rng.standard_normal((30, d1 * d2))
    sc = scatter(ys)
    terms = pvl_decompose(sc, d1, d2)
    s1, s2 = random_spd(d1, rng), random_spd(d2, rng)
    lhs = sum(np.trace(np.linalg.solve(s1.m, a)) * np.trace(np.linalg.solve(s2.m, b))
              for a, b in zip(terms.a_terms, terms.b_terms))
    big = kron(s1.m, s2.m, cap=None)
    rhs = np.trace(np.linalg.solve(big, sc.s))
    assert np.isclose(lhs, rhs, rtol=1e-9)


def test_truncation_keeps_dominant_terms(rng):
    a1, b1 = random_spd(2, rng).m, random_spd(3, rng).m
    a2, b2 = random_spd(2, rng).m, random_spd(3, rng).m
    s = kron(a1, b1) + 1e-8 * kron(a2, b2)
    terms = pvl_decompose(ScatterMatrix(s=s, n=1), 2, 3, tol=1e-4)
    assert terms.r == 1
    # trace identity still holds against the truncated reconstruction
    s1, s2 = random_spd(2, rng), random_spd(3, rng)
    lhs = sum(np.trace(np.linalg.solve(s1.m, a)) * np.trace(np.linalg.solve(s2.m, b))
              for a, b in zip(terms.a_terms, terms.b_terms))
    rhs = np.trace(np.linalg.solve(kron(s1.m, s2.m, cap=None), terms.dense()))
    assert np.isclose(lhs, rhs, rtol=1e-9)
