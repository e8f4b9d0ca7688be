"""Clifford algebra representations with exact matrix entries.

Two families are provided: the irreducible complex representation in
dimension 2^{floor(d/2)} (built by the standard doubling recursion), and
explicit representations of the eight small real Clifford algebras that
the classification machinery needs.  Every generator entry lies in
{0, +1, -1, +i, -i}, so all algebraic residuals checked by
``verify_clifford`` are exactly zero in floating point.

A grading, when one exists on the representation, is stored as a pair
(S, conj): the automorphism acts as M -> S M S^{-1}, preceded by
entrywise complex conjugation when conj is True.  Gradings negate every
generator and fix the even part.
"""

import numpy as np

from .errors import UnsupportedClass

__all__ = ['CliffordRep', 'complex_irrep', 'real_rep', 'verify_clifford',
           'quaternion_matrix']

_I2 = np.eye(2, dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_J2 = np.array([[0, 1], [-1, 0]], dtype=complex)  # = i*sigma_y, real


class CliffordRep:
    """A represented Clifford algebra.

    Attributes
    ----------
    kind : 'complex' or 'real'
    signature : int (complex: d) or tuple (real: (p, q))
    generators : list of square complex ndarrays
    signs : list of +1/-1, the squares of the generators
    grading : None or (S, conj) pair, see module docstring
    """

    def __init__(self, kind, signature, generators, signs, grading):
        self.kind = kind
        self.signature = signature
        self.generators = [np.asarray(g, dtype=complex) for g in generators]
        self.signs = list(signs)
        self.grading = grading
        self.dim = self.generators[0].shape[0]

    def apply_grading(self, M):
        # every tabulated S is unitary with exact entries, so S* is the
        # exact inverse and the conjugation below is free of rounding
        if self.grading is None:
            raise UnsupportedClass(
                'this representation carries no grading automorphism')
        S, conj = self.grading
        M = np.conj(M) if conj else M
        return S @ M @ S.conj().T

    def __repr__(self):
        return 'CliffordRep(kind={!r}, signature={}, dim={})'.format(
            self.kind, self.signature, self.dim)


def complex_irrep(d):
    """Irreducible complex Clifford representation on 2^{floor(d/2)}.

    The recursion is pinned: d=1 gives [1]; the step to d+1 (d odd to
    even) doubles via off-diagonal blocks and appends [[0,-i],[i,0]]
    in block form; the step to the next odd dimension appends the
    diagonal chirality.  For even d every generator is block
    off-diagonal and the last one is [[0,-i 1],[i 1, 0]].

    No grading is attached for odd d: on a single irreducible summand
    no automorphism can negate all generators (the volume element is
    central there), so the grading only exists on the doubled algebra.
    """
    if d < 1:
        raise ValueError('d must be >= 1')
    gens = [np.array([[1.0 + 0j]])]
    dim = 1
    while len(gens) < d:
        if len(gens) % 2 == 1:
            # odd -> even: double the space
            new = []
            zero = np.zeros((dim, dim), dtype=complex)
            for g in gens:
                new.append(np.block([[zero, g], [g, zero]]))
            eye = np.eye(dim, dtype=complex)
            new.append(np.block([[zero, -1j * eye], [1j * eye, zero]]))
            gens = new
            dim *= 2
        else:
            # even -> odd: append the chirality
            half = dim // 2
            chi = np.zeros((dim, dim), dtype=complex)
            chi[:half, :half] = np.eye(half)
            chi[half:, half:] = -np.eye(half)
            gens.append(chi)
    if d % 2 == 0:
        half = gens[0].shape[0] // 2
        S = np.zeros((2 * half, 2 * half), dtype=complex)
        S[:half, :half] = np.eye(half)
        S[half:, half:] = -np.eye(half)
        grading = (S, False)
    else:
        grading = None
    return CliffordRep('complex', d, gens, [1] * d, grading)


def quaternion_matrix(z0, z1, z2, z3):
    """The 2x2 complex image of the quaternion z0 + i z1 + j z2 + k z3."""
    a = z0 + 1j * z1
    b = z2 + 1j * z3
    return np.array([[a, b], [-np.conj(b), np.conj(a)]])


def _block_offdiag(B):
    n = B.shape[0]
    zero = np.zeros((n, n), dtype=complex)
    return np.block([[zero, B], [np.conj(B), zero]])


def _real_rep_1_0():
    E1 = np.array([[1, 0], [0, -1]], dtype=complex)
    return [E1], [1], (_SX.copy(), False)  # grading swaps the summands


def _real_rep_0_1():
    return [np.array([[1j]])], [-1], (np.array([[1.0 + 0j]]), True)


def _real_rep_1_1():
    E1 = _SX.copy()
    E2 = np.array([[0, -1], [1, 0]], dtype=complex)
    return [E1, E2], [1, -1], (_SZ.copy(), False)


def _real_rep_0_2():
    E1 = _J2.copy()
    E2 = np.array([[0, 1j], [1j, 0]])
    return [E1, E2], [-1, -1], (_SZ.copy(), False)


def _real_rep_0_3():
    qi = quaternion_matrix(0, 1, 0, 0)
    qj = quaternion_matrix(0, 0, 1, 0)
    qk = quaternion_matrix(0, 0, 0, 1)
    swap = np.kron(_SX, _I2)

    def two(q):
        out = np.zeros((4, 4), dtype=complex)
        out[:2, :2] = q
        out[2:, 2:] = -q
        return out
    return ([two(qi), two(qj), two(qk)], [-1, -1, -1], (swap, False))


def _real_rep_0_4():
    qi = quaternion_matrix(0, 1, 0, 0)
    qj = quaternion_matrix(0, 0, 1, 0)
    qk = quaternion_matrix(0, 0, 0, 1)
    zero = np.zeros((2, 2), dtype=complex)
    E1 = np.block([[zero, _I2], [-_I2, zero]])
    E2 = np.block([[zero, qi], [qi, zero]])
    E3 = np.block([[zero, qj], [qj, zero]])
    E4 = np.block([[zero, qk], [qk, zero]])
    grading = (np.kron(_SZ, _I2), False)
    return [E1, E2, E3, E4], [-1] * 4, grading


def _real_rep_0_5():
    zero = np.zeros((2, 2), dtype=complex)

    def diagpair(a, b):
        out = np.zeros((4, 4), dtype=complex)
        out[:2, :2] = a
        out[2:, 2:] = b
        return out
    E1 = diagpair(1j * _SX, 1j * _SX)
    E2 = diagpair(1j * _SY, -1j * _SY)
    E3 = diagpair(1j * _SZ, 1j * _SZ)
    E4 = np.block([[zero, _J2], [_J2, zero]])
    E5 = np.block([[zero, 1j * _J2], [-1j * _J2, zero]])
    omega = np.block([[zero, -_I2], [_I2, zero]])
    return [E1, E2, E3, E4, E5], [-1] * 5, (omega, True)


def _real_rep_0_6():
    blocks = [
        np.kron(_J2, _I2),
        np.kron(_SX, _J2),
        np.kron(_SZ, _J2),
        1j * np.kron(_I2, _J2),
        1j * np.kron(_J2, _SX),
        1j * np.kron(_J2, _SZ),
        ]
    gens = [_block_offdiag(B) for B in blocks]
    S = np.zeros((8, 8), dtype=complex)
    S[:4, :4] = np.eye(4)
    S[4:, 4:] = -np.eye(4)
    return gens, [-1] * 6, (S, False)


_REAL_BUILDERS = {
    (1, 0): _real_rep_1_0,
    (0, 1): _real_rep_0_1,
    (1, 1): _real_rep_1_1,
    (0, 2): _real_rep_0_2,
    (0, 3): _real_rep_0_3,
    (0, 4): _real_rep_0_4,
    (0, 5): _real_rep_0_5,
    (0, 6): _real_rep_0_6,
    }


def real_rep(p, q):
    """Explicit representation of the real Clifford algebra Cl_{p,q}.

    The first ``p`` generators square to +1 (self-adjoint), the last
    ``q`` square to -1 (anti-self-adjoint).  Only the eight signatures
    the classification needs are provided: (1,0), (0,1), (1,1), (0,2),
    (0,3), (0,4), (0,5), (0,6).  Quaternionic entries are stored via
    their 2x2 complex embedding (see ``quaternion_matrix``).
    """
    try:
        builder = _REAL_BUILDERS[(int(p), int(q))]
    except KeyError:
        raise UnsupportedClass(
            'real Clifford signature ({}, {}) not tabulated'.format(p, q))
    gens, signs, grading = builder()
    return CliffordRep('real', (int(p), int(q)), gens, signs, grading)


def verify_clifford(rep):
    """Exact residual report for a Clifford representation.

    Returns a dict with the maximal deviations from: pairwise
    anticommutation {E_i, E_j} = 2 s_i delta_ij, adjointness
    (E* = s E), and, when a grading is present, oddness of the
    generators, involutivity, and unitality of the grading map.
    """
    gens, signs = rep.generators, rep.signs
    n = rep.dim
    eye = np.eye(n, dtype=complex)
    r_anti = 0.0
    for i, gi in enumerate(gens):
        for j, gj in enumerate(gens):
            target = 2.0 * signs[i] * eye if i == j else 0.0
            r = np.linalg.norm(gi @ gj + gj @ gi - target, 2)
            r_anti = max(r_anti, r)
    r_adj = max(np.linalg.norm(g.conj().T - s * g, 2)
                for g, s in zip(gens, signs))
    report = {'anticommutation': r_anti, 'adjointness': r_adj}
    if rep.grading is not None:
        r_odd = max(np.linalg.norm(rep.apply_grading(g) + g, 2)
                    for g in gens)
        r_inv = max(np.linalg.norm(
            rep.apply_grading(rep.apply_grading(g)) - g, 2) for g in gens)
        report['grading_odd'] = r_odd
        report['grading_involutive'] = r_inv
        report['grading_unital'] = np.linalg.norm(
            rep.apply_grading(eye) - eye, 2)
    return report
