"""The tenfold way: symmetry classes, canonical operators, residual checks.

The ten classes are keyed by the presence and squares of a time-reversal
operator (antiunitary, commutes with H), a particle-hole operator
(antiunitary, anticommutes with H) and their product, the chiral grading
(unitary, anticommutes with H).  All three act on the internal fiber only
and are extended site-diagonally over the lattice, so they commute with
every position projection by construction.

Antiunitary operators are stored as (matrix, conjugation-flag) pairs and
composed through one set of rules (:class:`AntiUnitary`).  The canonical
normal forms provided by :func:`canonical_symmetry_ops` have entries in
{0, +1, -1}, so their algebra (squares, (anti)commutation with the
grading) holds exactly in floating point.

For the eight real classes, membership in the corresponding canonical
operator space is measured by :func:`symmetry_space_membership` as a
single residual norm: realness for AI/BDI, particle-hole flip of a
projection for D, an antisymmetry relation for DIII, quaternionic
commutation for AII/CII, and the symplectic analogues for C/CI.
"""

import numpy as np

from .errors import FiberParity, NotChiral, NotFlat, UnsupportedClass
from .operators import OperatorMatrix, entries_of

__all__ = [
    'AZClass', 'AZ_CLASSES', 'az_class', 'AntiUnitary', 'SymmetryOps',
    'ConstraintReport', 'MembershipReport', 'canonical_symmetry_ops',
    'check_constraints', 'chiral_offdiag', 'chiral_embed',
    'symmetry_space_membership', 'quaternion_structure',
    ]


class AZClass:
    """One row of the tenfold classification.

    Attributes
    ----------
    label : str
    theta_sq, xi_sq : int
        Square of the time-reversal / particle-hole operator (+1 or -1),
        or 0 when the class lacks that structure.
    chiral : bool
        Whether the class carries the chiral grading.
    relation : 'commute', 'anticommute' or None
        How time-reversal composes with the grading when both exist.
    groups : tuple of 8 str
        Classifying group per space dimension d = 1..8, each one of
        '0', 'Z', 'Z2'.
    clifford_pq : (p, q) or None
        Real Clifford signature realizing the class (real classes only).
    """

    def __init__(self, label, theta_sq, xi_sq, chiral, relation, groups,
                 clifford_pq):
        self.label = label
        self.theta_sq = theta_sq
        self.xi_sq = xi_sq
        self.chiral = bool(chiral)
        self.relation = relation
        self.groups = tuple(groups)
        self.clifford_pq = clifford_pq

    @property
    def is_complex(self):
        return self.theta_sq == 0 and self.xi_sq == 0 and \
            self.label in ('A', 'AIII')

    @property
    def is_real(self):
        return not self.is_complex

    def group(self, d):
        """Classifying group in space dimension d (period 8)."""
        if d < 1:
            raise ValueError('dimension must be >= 1')
        return self.groups[(d - 1) % 8]

    def __repr__(self):
        return 'AZClass({})'.format(self.label)


def _row(label, theta_sq, xi_sq, chiral, relation, groups, pq):
    return label, AZClass(label, theta_sq, xi_sq, chiral, relation,
                          groups.split(), pq)


AZ_CLASSES = dict([
    _row('A',    0,  0, False, None,          '0 Z 0 Z 0 Z 0 Z',     None),
    _row('AIII', 0,  0, True,  None,          'Z 0 Z 0 Z 0 Z 0',     None),
    _row('AI',   1,  0, False, None,          '0 0 0 Z 0 Z2 Z2 Z',   (1, 0)),
    _row('BDI',  1,  1, True,  'commute',     'Z 0 0 0 Z 0 Z2 Z2',   (1, 1)),
    _row('D',    0,  1, False, None,          'Z2 Z 0 0 0 Z 0 Z2',   (0, 1)),
    _row('DIII', -1, 1, True,  'anticommute', 'Z2 Z2 Z 0 0 0 Z 0',   (0, 2)),
    _row('AII',  -1, 0, False, None,          '0 Z2 Z2 Z 0 0 0 Z',   (0, 3)),
    _row('CII',  -1, -1, True, 'commute',     'Z 0 Z2 Z2 Z 0 0 0',   (0, 4)),
    _row('C',    0,  -1, False, None,         '0 Z 0 Z2 Z2 Z 0 0',   (0, 5)),
    _row('CI',   1,  -1, True, 'anticommute', '0 0 Z 0 Z2 Z2 Z 0',   (0, 6)),
    ])


def az_class(cls):
    """Normalize a class label or AZClass instance to an AZClass."""
    if isinstance(cls, AZClass):
        return cls
    try:
        return AZ_CLASSES[cls]
    except KeyError:
        raise UnsupportedClass('unknown symmetry class {!r}'.format(cls))


class AntiUnitary:
    """Operator v -> U conj(v) (conj=True) or v -> U v (conj=False).

    Composition, inversion and the sandwich action S M S^{-1} are
    implemented once for both kinds, so the flag bookkeeping lives in a
    single place.  U must be unitary; this is assumed, not checked.
    """

    def __init__(self, unitary, conj=True):
        self.unitary = np.asarray(unitary, dtype=complex)
        self.conj = bool(conj)

    @property
    def dim(self):
        return self.unitary.shape[0]

    def __matmul__(self, other):
        if not isinstance(other, AntiUnitary):
            return NotImplemented
        right = np.conj(other.unitary) if self.conj else other.unitary
        return AntiUnitary(self.unitary @ right, self.conj != other.conj)

    def inverse(self):
        # for S = U C the inverse is C U^* = (U^T) C
        if self.conj:
            return AntiUnitary(self.unitary.T, True)
        return AntiUnitary(self.unitary.conj().T, False)

    def apply(self, v):
        """Action on a vector (or on the columns of a matrix)."""
        v = np.asarray(v, dtype=complex)
        return self.unitary @ (np.conj(v) if self.conj else v)

    def sandwich(self, M):
        """S M S^{-1}, equal to U conj(M) U^* for a conjugating S."""
        M = entries_of(M)
        body = np.conj(M) if self.conj else M
        return self.unitary @ body @ self.unitary.conj().T

    def square(self):
        """Matrix of S^2 (a linear operator either way)."""
        return (self @ self).unitary

    def square_sign(self):
        """+1 or -1 when S^2 = +/- identity exactly; ValueError else."""
        sq = self.square()
        eye = np.eye(self.dim)
        if np.array_equal(sq, eye):
            return 1
        if np.array_equal(sq, -eye):
            return -1
        raise ValueError('square is not exactly +/- identity')

    def expand(self, nsites):
        """Site-diagonal extension over nsites lattice sites."""
        return AntiUnitary(np.kron(np.eye(nsites), self.unitary), self.conj)

    def __repr__(self):
        return 'AntiUnitary(dim={}, conj={})'.format(self.dim, self.conj)


def quaternion_structure(n):
    """The canonical antiunitary-squared=-1 matrix part on C^n.

    Returns the block matrix [[0, -1], [1, 0]] over the two fiber
    halves; composed with conjugation it squares to -identity.  n must
    be even.
    """
    if n % 2:
        raise FiberParity('a quaternionic structure needs an even '
                          'dimension, got {}'.format(n))
    m = n // 2
    J = np.zeros((n, n), dtype=complex)
    J[:m, m:] = -np.eye(m)
    J[m:, :m] = np.eye(m)
    return J


def _chiral_grading(n):
    if n % 2:
        raise FiberParity('chiral classes need an even fiber, '
                          'got {}'.format(n))
    w = n // 2
    return np.diag(np.concatenate([np.ones(w), -np.ones(w)])).astype(complex)


def _swap_blocks(n):
    # sigma_x over the two fiber halves
    m = n // 2
    S = np.zeros((n, n), dtype=complex)
    S[:m, m:] = np.eye(m)
    S[m:, :m] = np.eye(m)
    return S


class SymmetryOps:
    """Fiber-level symmetry operators for one class.

    theta / xi are AntiUnitary instances (or None when absent), pi is a
    plain matrix (or None).  All act on the N-dimensional fiber; use
    ``expand`` / the ``*_full`` helpers for the lattice extension.
    """

    def __init__(self, cls, fiber, theta, xi, pi, nsites=None):
        self.cls = cls
        self.fiber = fiber
        self.theta = theta
        self.xi = xi
        self.pi = pi
        self.nsites = nsites

    def pi_full(self):
        if self.pi is None:
            return None
        return np.kron(np.eye(self.nsites), self.pi)

    def theta_full(self):
        if self.theta is None:
            return None
        return self.theta.expand(self.nsites)

    def xi_full(self):
        if self.xi is None:
            return None
        return self.xi.expand(self.nsites)

    def __repr__(self):
        have = [n for n, v in [('theta', self.theta), ('xi', self.xi),
                               ('pi', self.pi)] if v is not None]
        return 'SymmetryOps({}, fiber={}, ops={})'.format(
            self.cls.label, self.fiber, '+'.join(have) or 'none')


def canonical_symmetry_ops(cls, lattice=None, N=None):
    """Normal-form symmetry operators for a class on fiber C^N.

    The matrix parts have entries in {0, +1, -1}:

    * AI and D use plain conjugation;
    * AII and C conjugate through the quaternionic pairing of the two
      fiber halves (N even);
    * chiral classes put the grading as +1 on the first half of the
      fiber and -1 on the second, with time-reversal equal to
      conjugation (BDI), the quaternionic pairing across the halves
      (DIII), the plain swap of the halves (CI), or the quaternionic
      pairing within each half (CII, N divisible by 4).

    The particle-hole operator of the chiral classes is derived as
    Xi = Theta^{-1} Pi, so Pi = Theta Xi holds by construction.
    """
    cls = az_class(cls)
    if N is None:
        if lattice is None:
            raise ValueError('need a lattice or an explicit fiber N')
        N = lattice.N
    nsites = lattice.nsites if lattice is not None else 1

    theta = xi = pi = None
    if cls.chiral:
        pi = _chiral_grading(N)
    if cls.label == 'AI':
        theta = AntiUnitary(np.eye(N))
    elif cls.label == 'AII':
        theta = AntiUnitary(quaternion_structure(N))
    elif cls.label == 'D':
        xi = AntiUnitary(np.eye(N))
    elif cls.label == 'C':
        xi = AntiUnitary(quaternion_structure(N))
    elif cls.label == 'BDI':
        theta = AntiUnitary(np.eye(N))
    elif cls.label == 'DIII':
        theta = AntiUnitary(quaternion_structure(N))
    elif cls.label == 'CI':
        theta = AntiUnitary(_swap_blocks(N))
    elif cls.label == 'CII':
        if N % 4:
            raise FiberParity('class CII needs a fiber divisible by 4, '
                              'got {}'.format(N))
        half = quaternion_structure(N // 2)
        theta = AntiUnitary(np.kron(np.eye(2), half))

    if theta is not None and pi is not None:
        xi = theta.inverse() @ AntiUnitary(pi, conj=False)
    return SymmetryOps(cls, N, theta, xi, pi, nsites=nsites)


def _sitewise_left(u, M, nsites, fiber):
    # (1 tensor u) M without forming the kron
    out = np.matmul(u, M.reshape(nsites, fiber, nsites * fiber))
    return out.reshape(nsites * fiber, nsites * fiber)


def _sitewise_right(M, u, nsites, fiber):
    # M (1 tensor u)
    out = np.matmul(M.reshape(nsites * fiber, nsites, fiber), u)
    return out.reshape(nsites * fiber, nsites * fiber)


def _sitewise_sandwich(op, M, nsites, fiber):
    """S M S^{-1} for a fiber-level op extended site-diagonally."""
    if isinstance(op, AntiUnitary):
        u = op.unitary
        body = np.conj(M) if op.conj else M
    else:
        u = np.asarray(op, dtype=complex)
        body = M
    out = _sitewise_left(u, body, nsites, fiber)
    return _sitewise_right(out, u.conj().T, nsites, fiber)


def _norm(M):
    return float(np.linalg.norm(M, 2))


class ConstraintReport:
    """Symmetry residuals of one operator against one class."""

    def __init__(self, label, residuals, tol):
        self.label = label
        self.residuals = dict(residuals)
        self.tol = float(tol)

    @property
    def max_residual(self):
        return max(self.residuals.values(), default=0.0)

    @property
    def holds(self):
        return all(r <= self.tol for r in self.residuals.values())

    def __repr__(self):
        body = ', '.join('{}={:.2e}'.format(k, v)
                         for k, v in self.residuals.items())
        return 'ConstraintReport({}, {}, holds={})'.format(
            self.label, body or 'no constraints', self.holds)


def check_constraints(H, cls, ops=None, tol=1e-10):
    """Residual norms of the class constraints on H.

    Computes ||[H, Theta]||, ||{H, Xi}|| and ||{H, Pi}|| for whichever
    operators the class carries, through the equivalent unitarily
    invariant form ||H -/+ S H S^{-1}||.  Class A yields an empty
    report that always holds.  When ops is omitted the canonical
    operators for H's fiber are used.
    """
    cls = az_class(cls)
    if ops is None:
        fiber = H.fiber if isinstance(H, OperatorMatrix) else None
        ops = canonical_symmetry_ops(cls, N=fiber if fiber is not None
                                     else entries_of(H).shape[0])
    H = entries_of(H)
    fiber = ops.fiber
    if H.shape[0] % fiber:
        raise ValueError('operator dimension {} is not a multiple of the '
                         'fiber {}'.format(H.shape[0], fiber))
    nsites = H.shape[0] // fiber

    residuals = {}
    if ops.theta is not None:
        flipped = _sitewise_sandwich(ops.theta, H, nsites, fiber)
        residuals['theta_commutator'] = _norm(H - flipped)
    if ops.xi is not None:
        flipped = _sitewise_sandwich(ops.xi, H, nsites, fiber)
        residuals['xi_anticommutator'] = _norm(H + flipped)
    if ops.pi is not None:
        flipped = _sitewise_sandwich(ops.pi, H, nsites, fiber)
        residuals['pi_anticommutator'] = _norm(H + flipped)
    return ConstraintReport(cls.label, residuals, tol)


def _diagonal_grading_masks(pi, dim):
    """Positive/negative index masks of a diagonal +/-1 grading.

    Accepts either the fiber-level grading (replicated over sites) or
    the full-dimension one.  Off-diagonal or non-sign entries are
    rejected: the extraction convention is pinned to gradings that are
    diagonal in the working basis.
    """
    pi = np.asarray(pi)
    diag = np.diagonal(pi)
    if np.abs(pi - np.diag(diag)).max() > 0 or \
            np.abs(np.abs(diag) - 1).max() > 0:
        raise NotChiral('the grading must be a diagonal +/-1 matrix in the '
                        'working basis')
    n = pi.shape[0]
    if dim % n:
        raise ValueError('grading dimension {} does not divide {}'.format(
            n, dim))
    full = np.tile(np.real(diag), dim // n)
    pos = full > 0
    if pos.sum() * 2 != dim:
        raise NotChiral('the grading must balance the two chiralities')
    return pos, ~pos


def chiral_offdiag(H, pi, tol=1e-8):
    """Off-diagonal unitary of a flattened chiral operator.

    For a self-adjoint unitary H anticommuting with the grading pi, the
    two diagonal blocks vanish and H is determined by its block mapping
    the positive chirality into the negative one; that block is
    returned (an OperatorMatrix on the half fiber when H carries a
    lattice).  Raises NotFlat / NotChiral when the preconditions fail
    at tolerance tol.
    """
    lattice = H.lattice if isinstance(H, OperatorMatrix) else None
    M = entries_of(H)
    dim = M.shape[0]
    herm = np.abs(M - M.conj().T).max()
    flat = _norm(M @ M - np.eye(dim))
    if herm > tol or flat > tol:
        raise NotFlat('not a self-adjoint unitary: hermiticity defect '
                      '{:.2e}, flatness defect {:.2e}'.format(herm, flat))
    pos, neg = _diagonal_grading_masks(pi, dim)
    signs = np.where(pos, 1.0, -1.0)
    anti = _norm(M + signs[:, None] * M * signs[None, :])
    if anti > tol:
        raise NotChiral('grading anticommutator norm {:.2e} exceeds '
                        '{:.2e}'.format(anti, tol))
    U = M[np.ix_(np.flatnonzero(neg), np.flatnonzero(pos))]
    if lattice is not None:
        fiber = H.fiber // 2
        return OperatorMatrix(U, lattice=lattice, fiber=fiber)
    return U


def chiral_embed(U, pi=None):
    """Inverse of chiral_offdiag: H = [[0, U*], [U, 0]] per the grading.

    With the default pi the fiber doubles and the first half carries
    positive chirality.  chiral_offdiag(chiral_embed(U), pi) returns U
    exactly (the construction only moves entries around).
    """
    lattice = U.lattice if isinstance(U, OperatorMatrix) else None
    M = entries_of(U)
    n = M.shape[0]
    if pi is None:
        if lattice is not None:
            pi = _chiral_grading(2 * U.fiber)
        else:
            pi = _chiral_grading(2 * n)
    pos, neg = _diagonal_grading_masks(pi, 2 * n)
    H = np.zeros((2 * n, 2 * n), dtype=complex)
    H[np.ix_(np.flatnonzero(neg), np.flatnonzero(pos))] = M
    H[np.ix_(np.flatnonzero(pos), np.flatnonzero(neg))] = M.conj().T
    if lattice is not None:
        return OperatorMatrix(H, lattice=lattice, fiber=2 * U.fiber)
    return H


class MembershipReport:
    """Distance of an operator from one canonical real symmetry space."""

    def __init__(self, label, residual, condition):
        self.label = label
        self.residual = float(residual)
        self.condition = condition

    def ok(self, tol=1e-10):
        return self.residual <= tol

    def __repr__(self):
        return 'MembershipReport({}, residual={:.3e}, {!r})'.format(
            self.label, self.residual, self.condition)


def _membership_pairing(X, fiber):
    """Site-extended quaternionic pairing matching X's layout."""
    dim = X.shape[0]
    if fiber is None:
        fiber = dim
    if dim % fiber:
        raise ValueError('fiber {} does not divide dimension {}'.format(
            fiber, dim))
    return np.kron(np.eye(dim // fiber), quaternion_structure(fiber))


def symmetry_space_membership(X, cls):
    """Residual of the canonical-space relation for a real class.

    The relation tested depends on the class: for AI/BDI realness
    conj(X) = X; for D the projection flip conj(P) = 1 - P; for DIII
    the antisymmetry X* = -conj(X); for AII/CII commutation with the
    quaternionic pairing J; for C the symplectic projection flip
    J conj(P) J = -(1 - P); for CI the relation J conj(X) J = X*.
    Classes A and AIII carry no real structure and are rejected.
    """
    cls = az_class(cls)
    fiber = X.fiber if isinstance(X, OperatorMatrix) else None
    X = entries_of(X)
    dim = X.shape[0]
    label = cls.label

    if label in ('A', 'AIII'):
        raise UnsupportedClass('classes A and AIII have no real-structure '
                               'membership residual')
    if label in ('AI', 'BDI'):
        return MembershipReport(label, _norm(np.conj(X) - X),
                                'conj(X) = X')
    if label == 'D':
        return MembershipReport(label,
                                _norm(np.conj(X) - (np.eye(dim) - X)),
                                'conj(P) = 1 - P')
    if label == 'DIII':
        return MembershipReport(label, _norm(X.conj().T + np.conj(X)),
                                'X* = -conj(X)')
    J = _membership_pairing(X, fiber)
    if label in ('AII', 'CII'):
        res = _norm(J @ np.conj(X) @ J.conj().T - X)
        return MembershipReport(label, res, 'J conj(X) J* = X')
    if label == 'C':
        res = _norm(J @ np.conj(X) @ J + (np.eye(dim) - X))
        return MembershipReport(label, res, 'J conj(P) J = -(1 - P)')
    if label == 'CI':
        res = _norm(J @ np.conj(X) @ J - X.conj().T)
        return MembershipReport(label, res, 'J conj(X) J = X*')
    raise UnsupportedClass('unknown symmetry class {!r}'.format(label))
