"""Dense operator calculus on a truncated lattice with internal fiber.

Everything is a dense complex matrix indexed site-major: row
site_idx * fiber + fiber_idx.  The ``OperatorMatrix`` wrapper carries
the lattice reference and fiber size so geometric restrictions know
which rows belong to which site; most algebra below also accepts bare
ndarrays and then skips the geometry.

Functional calculus goes through full eigendecompositions (Hermitian)
or the Schur-based matrix square root (general case).  Dimensions stay
desk-scale, so dense is the simplest correct choice.

Tolerances are centralized here: TAU_GAP for spectral gaps, TAU_INV
for invertibility, TAU_BRANCH for distance to the branch cut of the
holomorphic square root, RESIDUAL_TOL for generic pass/fail residuals.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.linalg

from .errors import BranchCutHit, GapClosed, NotInvertible
from .lattice import lattice_from_json

__all__ = [
    'OperatorMatrix', 'SpectralGapReport', 'TAU_GAP', 'TAU_INV',
    'TAU_BRANCH', 'RESIDUAL_TOL', 'entries_of', 'wrap_like', 'block',
    'compressed_block', 'block_norm', 'spectral_gap', 'sign_flatten',
    'fermi_projection', 'upper_projection', 'holo_inv_sqrt',
    'polar_unitary', 'conjugate', 'direct_sum', 'tensor_fiber',
    'to_snapshot', 'from_snapshot',
    ]

TAU_GAP = 1e-6
TAU_INV = 1e-8
TAU_BRANCH = 1e-9
RESIDUAL_TOL = 1e-10


class OperatorMatrix:
    """Square complex matrix tied to a lattice and fiber dimension.

    Parameters
    ----------
    entries : (n, n) array_like
    lattice : Lattice, optional
        Site geometry; required for geometric restrictions.
    fiber : int, optional
        Fiber dimension per site.  Defaults to lattice.N, but may
        differ after ``tensor_fiber`` / ``direct_sum``; the invariant
        is n == lattice.nsites * fiber.
    """

    def __init__(self, entries, lattice=None, fiber=None):
        self.entries = np.asarray(entries, dtype=complex)
        if self.entries.ndim != 2 or \
                self.entries.shape[0] != self.entries.shape[1]:
            raise ValueError('entries must be a square matrix')
        self.lattice = lattice
        if fiber is None and lattice is not None:
            fiber = lattice.N
        self.fiber = fiber
        if lattice is not None and \
                lattice.nsites * self.fiber != self.entries.shape[0]:
            raise ValueError('dimension {} does not match {} sites with '
                             'fiber {}'.format(self.entries.shape[0],
                                               lattice.nsites, self.fiber))
        self._hermitian = None

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def hermitian(self):
        """Cached self-adjointness flag (max-entry deviation <= 1e-12)."""
        if self._hermitian is None:
            dev = np.abs(self.entries - self.entries.conj().T).max()
            self._hermitian = bool(dev <= 1e-12)
        return self._hermitian

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.entries.astype(dtype)
        return self.entries

    def __repr__(self):
        return 'OperatorMatrix(dim={}, fiber={}, hermitian={})'.format(
            self.dim, self.fiber, self.hermitian)


class SpectralGapReport:
    """Gap of a Hermitian matrix around zero.

    gap is the smallest |eigenvalue|; window is the pair
    (largest negative eigenvalue, smallest positive eigenvalue), with
    None on a side whose sign does not occur.
    """

    def __init__(self, gap, window):
        self.gap = float(gap)
        self.window = window

    def __repr__(self):
        return 'SpectralGapReport(gap={:.3e}, window={})'.format(
            self.gap, self.window)


def entries_of(A):
    """Dense complex ndarray of an OperatorMatrix or array_like."""
    if isinstance(A, OperatorMatrix):
        return A.entries
    return np.asarray(A, dtype=complex)


def wrap_like(A, entries):
    """Re-wrap entries with A's lattice/fiber when A was wrapped."""
    if isinstance(A, OperatorMatrix):
        return OperatorMatrix(entries, lattice=A.lattice, fiber=A.fiber)
    return np.asarray(entries, dtype=complex)


def _geometry(A, lattice=None, fiber=None):
    if isinstance(A, OperatorMatrix):
        lattice = lattice if lattice is not None else A.lattice
        fiber = fiber if fiber is not None else A.fiber
    if lattice is None:
        raise ValueError('a lattice is required for geometric restriction')
    if fiber is None:
        fiber = lattice.N
    return lattice, fiber


def _site_row_mask(lattice, fiber, sites):
    sites = np.asarray(sites)
    if sites.dtype == bool:
        mask = sites
    else:
        mask = np.zeros(lattice.nsites, dtype=bool)
        mask[sites.astype(int)] = True
    return lattice.expand_mask(mask, fiber)


def block(A, F, G, lattice=None, fiber=None):
    """Two-sided restriction Lambda_F A Lambda_G, full-size output.

    F and G are site subsets (index arrays or boolean site masks); the
    projections act as the identity on the fiber.
    """
    lattice, fiber = _geometry(A, lattice, fiber)
    E = entries_of(A)
    rmask = _site_row_mask(lattice, fiber, F)
    cmask = _site_row_mask(lattice, fiber, G)
    out = np.zeros_like(E)
    out[np.ix_(rmask, cmask)] = E[np.ix_(rmask, cmask)]
    return wrap_like(A, out)


def compressed_block(A, F, G, lattice=None, fiber=None):
    """Rectangular submatrix of Lambda_F A Lambda_G (zero rows dropped)."""
    lattice, fiber = _geometry(A, lattice, fiber)
    E = entries_of(A)
    rmask = _site_row_mask(lattice, fiber, F)
    cmask = _site_row_mask(lattice, fiber, G)
    return E[np.ix_(rmask, cmask)]


def block_norm(A, F, G, lattice=None, fiber=None):
    """Operator norm of the F-row, G-column block of A."""
    sub = compressed_block(A, F, G, lattice, fiber)
    if sub.size == 0:
        return 0.0
    return float(np.linalg.norm(sub, 2))


def _check_hermitian(A, who):
    E = entries_of(A)
    dev = np.abs(E - E.conj().T).max() if E.size else 0.0
    if dev > 1e-10:
        raise ValueError('{} expects a Hermitian matrix, deviation {:.2e}'
                         .format(who, dev))
    return E


def spectral_gap(H):
    """Spectral gap report of a Hermitian matrix at zero energy."""
    E = _check_hermitian(H, 'spectral_gap')
    w = np.linalg.eigvalsh(E)
    gap = float(np.abs(w).min()) if w.size else np.inf
    neg = w[w < 0]
    pos = w[w > 0]
    window = (float(neg.max()) if neg.size else None,
              float(pos.min()) if pos.size else None)
    return SpectralGapReport(gap, window)


def sign_flatten(H, tau_gap=TAU_GAP):
    """Spectral flattening H -> sgn(H).

    The result is a self-adjoint unitary commuting with H.  Raises
    GapClosed when an eigenvalue sits closer to zero than tau_gap;
    callers that can tolerate kernels must handle them explicitly
    (see chiral_flat_unitary in the invariants module).
    """
    E = _check_hermitian(H, 'sign_flatten')
    w, V = np.linalg.eigh(E)
    gap = np.abs(w).min() if w.size else np.inf
    if gap < tau_gap:
        raise GapClosed('eigenvalue at {:.3e} is inside the gap tolerance '
                        '{:.1e}'.format(gap, tau_gap))
    S = (V * np.sign(w)) @ V.conj().T
    S = 0.5 * (S + S.conj().T)
    return wrap_like(H, S)


def fermi_projection(H, tau_gap=TAU_GAP):
    """Spectral projection onto energies below zero, (1 - sgn H)/2."""
    S = entries_of(sign_flatten(H, tau_gap))
    P = 0.5 * (np.eye(S.shape[0]) - S)
    return wrap_like(H, P)


def upper_projection(H, tau_gap=TAU_GAP):
    """Spectral projection onto energies above zero, (1 + sgn H)/2."""
    S = entries_of(sign_flatten(H, tau_gap))
    P = 0.5 * (np.eye(S.shape[0]) + S)
    return wrap_like(H, P)


def holo_inv_sqrt(B, tau_branch=TAU_BRANCH):
    """Principal-branch B^{-1/2} for spectrum away from (-inf, 0].

    The distance of every eigenvalue to the closed negative real axis
    must exceed tau_branch, otherwise BranchCutHit is raised.  Uses the
    Schur-form matrix square root, so B need not be diagonalizable.
    """
    E = entries_of(B)
    ev = scipy.linalg.eigvals(E)
    dist = np.where(ev.real <= 0, np.abs(ev.imag), np.abs(ev))
    if dist.size and dist.min() < tau_branch:
        bad = ev[np.argmin(dist)]
        raise BranchCutHit('eigenvalue {:.6g} lies within {:.1e} of the '
                           'branch cut (-inf, 0]'.format(bad, tau_branch))
    root = scipy.linalg.sqrtm(E)
    return wrap_like(B, np.linalg.inv(root))


def polar_unitary(A, tau_inv=TAU_INV):
    """Unitary polar factor A |A|^{-1} of an invertible matrix."""
    E = entries_of(A)
    u, s, vh = np.linalg.svd(E)
    if s.size and s.min() < tau_inv:
        raise NotInvertible('smallest singular value {:.3e} below {:.1e}'
                            .format(float(s.min()), tau_inv))
    return wrap_like(A, u @ vh)


def conjugate(A):
    """Entrywise complex conjugation in the position/standard basis."""
    return wrap_like(A, np.conj(entries_of(A)))


def direct_sum(A, B):
    """Fiberwise direct sum of two operators on the same lattice.

    Row ordering stays site-major: at each site the first fiber block
    comes from A, the next from B.  For bare matrices without a
    lattice this degenerates to the ordinary block diagonal.
    """
    wrapped = isinstance(A, OperatorMatrix) and isinstance(B, OperatorMatrix)
    if isinstance(A, OperatorMatrix) != isinstance(B, OperatorMatrix):
        raise ValueError('cannot mix wrapped and bare operands')
    EA, EB = entries_of(A), entries_of(B)
    if not wrapped or A.lattice is None or B.lattice is None:
        return scipy.linalg.block_diag(EA, EB)
    if A.lattice is not B.lattice and \
            not np.array_equal(A.lattice.sites, B.lattice.sites):
        raise ValueError('lattice mismatch in direct_sum')
    lat = A.lattice
    NA, NB = A.fiber, B.fiber
    N = NA + NB
    base = np.arange(lat.nsites)[:, None] * N
    idxA = (base + np.arange(NA)).ravel()
    idxB = (base + NA + np.arange(NB)).ravel()
    out = np.zeros((lat.nsites * N, lat.nsites * N), dtype=complex)
    out[np.ix_(idxA, idxA)] = EA
    out[np.ix_(idxB, idxB)] = EB
    return OperatorMatrix(out, lattice=lat, fiber=N)


def tensor_fiber(A, m):
    """A tensor the identity on an m-dimensional auxiliary fiber.

    Index ordering is (site, internal, tensor-copy), which for a
    site-major matrix is exactly the Kronecker product with 1_m.
    """
    E = entries_of(A)
    out = np.kron(E, np.eye(m))
    if isinstance(A, OperatorMatrix):
        fiber = None if A.fiber is None else A.fiber * m
        return OperatorMatrix(out, lattice=A.lattice, fiber=fiber)
    return out


def to_snapshot(A, extra=None):
    """JSON-serializable dict of an operator: [re, im] row-major."""
    E = entries_of(A)
    payload = {
        're': E.real.tolist(),
        'im': E.imag.tolist(),
        }
    if isinstance(A, OperatorMatrix):
        payload['fiber'] = A.fiber
        if A.lattice is not None:
            payload['lattice'] = json.loads(A.lattice.to_json())
    if extra:
        payload.update(extra)
    return payload


def from_snapshot(payload):
    """Inverse of ``to_snapshot``."""
    if isinstance(payload, str):
        payload = json.loads(payload)
    E = np.array(payload['re'], dtype=float) \
        + 1j * np.array(payload['im'], dtype=float)
    if 'lattice' in payload:
        lat, _ = lattice_from_json(payload['lattice'])
        return OperatorMatrix(E, lattice=lat, fiber=payload.get('fiber'))
    return E
