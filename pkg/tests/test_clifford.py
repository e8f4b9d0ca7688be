"""Tests for the Clifford representation tables.

The residual checks assert exact equality with 0.0 on purpose: every
generator entry is one of {0, +1, -1, +i, -i}, so the defining
relations hold without any rounding and the verifier must report
literal zeros.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topoidx.clifford import (CliffordRep, complex_irrep, quaternion_matrix,
                              real_rep, verify_clifford)
from topoidx.errors import UnsupportedClass

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

REAL_SIGNATURES = [(1, 0), (0, 1), (1, 1), (0, 2), (0, 3), (0, 4),
                   (0, 5), (0, 6)]
REAL_DIMS = {(1, 0): 2, (0, 1): 1, (1, 1): 2, (0, 2): 2, (0, 3): 4,
             (0, 4): 4, (0, 5): 4, (0, 6): 8}


def commutant_dimension(gens):
    """Oracle: complex dimension of {M : [M, g] = 0 for all g}.

    Solves the linear system directly; with row-major vec,
    vec(GM - MG) = (G kron 1 - 1 kron G^T) vec(M).
    """
    n = gens[0].shape[0]
    eye = np.eye(n)
    rows = [np.kron(g, eye) - np.kron(eye, g.T) for g in gens]
    K = np.vstack(rows)
    sv = np.linalg.svd(K, compute_uv=False)
    return int(np.sum(sv < 1e-9))


@pytest.mark.parametrize('d', range(1, 9))
def test_complex_dimension(d):
    rep = complex_irrep(d)
    assert rep.dim == 2 ** (d // 2)
    assert len(rep.generators) == d
    assert rep.signs == [1] * d


@pytest.mark.parametrize('d', range(1, 9))
def test_complex_residuals_exactly_zero(d):
    report = verify_clifford(complex_irrep(d))
    for key, value in report.items():
        assert value == 0.0, (d, key, value)


def test_complex_low_dim_frozen():
    rep1 = complex_irrep(1)
    assert np.array_equal(rep1.generators[0], np.array([[1.0 + 0j]]))

    rep2 = complex_irrep(2)
    assert np.array_equal(rep2.generators[0], SX)
    assert np.array_equal(rep2.generators[1], SY)

    rep3 = complex_irrep(3)
    assert np.array_equal(rep3.generators[0], SX)
    assert np.array_equal(rep3.generators[1], SY)
    assert np.array_equal(rep3.generators[2], SZ)


@pytest.mark.parametrize('d', range(1, 9))
def test_complex_irreducible(d):
    rep = complex_irrep(d)
    assert commutant_dimension(rep.generators) == 1


@pytest.mark.parametrize('d', range(1, 9))
def test_complex_grading_presence(d):
    rep = complex_irrep(d)
    if d % 2 == 0:
        assert rep.grading is not None
        S, conj = rep.grading
        assert not conj
        # volume element candidate: diagonal +1/-1 split
        assert np.array_equal(S @ S, np.eye(rep.dim))
    else:
        assert rep.grading is None
        with pytest.raises(UnsupportedClass):
            rep.apply_grading(np.eye(rep.dim))


@pytest.mark.parametrize('sig', REAL_SIGNATURES)
def test_real_residuals_exactly_zero(sig):
    report = verify_clifford(real_rep(*sig))
    # every real table entry carries a grading
    assert 'grading_odd' in report
    for key, value in report.items():
        assert value == 0.0, (sig, key, value)


@pytest.mark.parametrize('sig', REAL_SIGNATURES)
def test_real_dims_and_signs(sig):
    p, q = sig
    rep = real_rep(p, q)
    assert rep.dim == REAL_DIMS[sig]
    assert rep.signs == [1] * p + [-1] * q
    assert len(rep.generators) == p + q


def test_real_frozen_entries():
    assert np.array_equal(real_rep(0, 1).generators[0], np.array([[1j]]))
    E1, E2 = real_rep(0, 2).generators
    assert np.array_equal(E1, np.array([[0, 1], [-1, 0]], dtype=complex))
    assert np.array_equal(E2, np.array([[0, 1j], [1j, 0]]))
    E1, = real_rep(1, 0).generators
    assert np.array_equal(E1, SZ)


def test_real_unsupported_signature():
    with pytest.raises(UnsupportedClass):
        real_rep(2, 0)
    with pytest.raises(UnsupportedClass):
        real_rep(0, 7)


@pytest.mark.parametrize('sig', REAL_SIGNATURES)
def test_grading_fixes_quadratic_part(sig):
    rep = real_rep(*sig)
    gens = rep.generators
    for i in range(len(gens)):
        for j in range(len(gens)):
            word = gens[i] @ gens[j]
            assert np.array_equal(rep.apply_grading(word), word), (sig, i, j)


def test_quaternion_multiplication_table():
    qi = quaternion_matrix(0, 1, 0, 0)
    qj = quaternion_matrix(0, 0, 1, 0)
    qk = quaternion_matrix(0, 0, 0, 1)
    one = quaternion_matrix(1, 0, 0, 0)
    assert np.array_equal(one, np.eye(2))
    assert np.array_equal(qi @ qj, qk)
    assert np.array_equal(qj @ qk, qi)
    assert np.array_equal(qk @ qi, qj)
    for q in (qi, qj, qk):
        assert np.array_equal(q @ q, -np.eye(2))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(min_value=-2, max_value=2), min_size=6,
                max_size=6))
def test_negative_definite_quadratic_form(coeffs):
    # for Cl_{0,6} a real combination c = sum t_i E_i squares to
    # -(sum t_i^2) times the identity
    rep = real_rep(0, 6)
    c = sum(t * g for t, g in zip(coeffs, rep.generators))
    target = -sum(t * t for t in coeffs) * np.eye(rep.dim)
    assert np.linalg.norm(c @ c - target, 2) < 1e-12


def test_rep_repr_and_reuse():
    rep = complex_irrep(4)
    assert 'complex' in repr(rep)
    # generators must be independent copies, not views of each other
    gens = rep.generators
    before = gens[0].copy()
    gens[1][0, 0] += 1.0
    assert np.array_equal(gens[0], before)


def test_custom_rep_roundtrip():
    # CliffordRep accepts hand-built data; verify flags a broken pair
    bad = CliffordRep('real', (0, 2),
                      [np.array([[0, 1], [-1, 0]]), np.eye(2)],
                      [-1, -1], None)
    report = verify_clifford(bad)
    assert report['anticommutation'] > 1.0
