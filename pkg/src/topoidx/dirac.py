"""Position-direction operators, Dirac phase/projection, locality checks.

The unit position operators are the diagonal multiplication operators
by the components of x/|x| (origin sent to e_1).  Combined with a
Clifford representation on an auxiliary fiber they give the flat Dirac
operator, its phase (even dimension) and projection (odd dimension).

Compactness has no finite-volume meaning, so every "compact" statement
is operationalized as shell decay: the quantity is re-evaluated with
both legs restricted to sites |x| >= r for a list of inner radii, and
a certification requires monotone decay below a threshold at the
largest radius.  Cross-cone block norms use exactly disjoint closed
dyadic cubes on the sphere.
"""

from __future__ import annotations

import numpy as np

from .clifford import complex_irrep
from .errors import EvenDimension, InvalidCosets, OddDimension
from .lattice import Lattice, cone_sites, dyadic_cubes, unit_direction
from .operators import (OperatorMatrix, block_norm, compressed_block,
                        entries_of)

__all__ = [
    'THETA_LOC', 'THETA_NT', 'LocalityProfile', 'LocalityBoundReport',
    'BulkReport', 'RedimerizationMap', 'unit_position_ops', 'rho_eval',
    'flat_dirac', 'dirac_phase', 'dirac_projection', 'laughlin_flux',
    'locality_profile', 'is_exponentially_local', 'is_weakly_local',
    'dirac_commutator_norm', 'redimerize', 'bulk_nontriviality',
    ]

THETA_LOC = 1e-3
THETA_NT = 1e-3


def _geometry(A, lattice, fiber):
    if isinstance(A, OperatorMatrix):
        lattice = lattice if lattice is not None else A.lattice
        fiber = fiber if fiber is not None else A.fiber
    if lattice is None:
        raise ValueError('a lattice is required')
    if fiber is None:
        fiber = lattice.N
    return lattice, fiber


def unit_position_ops(lattice, fiber=None):
    """The d diagonal operators with entries (x/|x|)_j, fiber-expanded."""
    if fiber is None:
        fiber = lattice.N
    ops = []
    for j in range(lattice.d):
        diag = np.repeat(lattice.directions[:, j], fiber)
        ops.append(OperatorMatrix(np.diag(diag.astype(complex)),
                                  lattice=lattice, fiber=fiber))
    return ops


def rho_eval(lattice, f, fiber=None):
    """Diagonal multiplication operator by f evaluated at x/|x|."""
    if fiber is None:
        fiber = lattice.N
    vals = np.array([f(u) for u in lattice.directions], dtype=complex)
    return OperatorMatrix(np.diag(np.repeat(vals, fiber)),
                          lattice=lattice, fiber=fiber)


def _position_clifford_sum(lattice, N, gens):
    aux = gens[0].shape[0]
    eyeN = np.eye(N, dtype=complex)
    out = np.zeros((lattice.nsites * N * aux,) * 2, dtype=complex)
    for j, G in enumerate(gens):
        out += np.kron(np.diag(lattice.directions[:, j].astype(complex)),
                       np.kron(eyeN, G))
    return out


def flat_dirac(lattice, N=1, rep=None):
    """Flat Dirac operator: sum_j X_j/|X| tensor 1_N tensor Gamma_j."""
    if rep is None:
        rep = complex_irrep(lattice.d)
    W = _position_clifford_sum(lattice, N, rep.generators)
    return OperatorMatrix(W, lattice=lattice, fiber=N * rep.dim)


def dirac_phase(lattice, N=1, rep=None):
    """Unitary Dirac phase in even dimension.

    L = sum_{j<d} X_j/|X| tensor 1_N tensor Gamma_j
        + i X_d/|X| tensor 1_N tensor 1,
    with Gamma the irreducible complex Clifford family on d-1
    generators.  For d = 2 this is the scalar flux insertion
    x_1/|x| + i x_2/|x|.
    """
    d = lattice.d
    if d % 2 != 0:
        raise OddDimension('the Dirac phase needs even dimension, got '
                           'd={}'.format(d))
    if rep is None:
        rep = complex_irrep(d - 1)
    aux = rep.dim
    L = _position_clifford_sum(lattice, N, rep.generators)
    L = L + 1j * np.kron(np.diag(lattice.directions[:, d - 1]
                                 .astype(complex)),
                         np.eye(N * aux))
    return OperatorMatrix(L, lattice=lattice, fiber=N * aux)


def laughlin_flux(lattice, N=1):
    """The d = 2 Dirac phase, a.k.a. the flux insertion operator."""
    if lattice.d != 2:
        raise ValueError('flux insertion is the d=2 case')
    return dirac_phase(lattice, N=N)


def dirac_projection(lattice, N=1, rep=None):
    """Orthogonal Dirac projection in odd dimension.

    Half of (flat Dirac + 1); for d = 1 this is the indicator of the
    non-negative half line, origin included by the direction
    convention at zero.
    """
    d = lattice.d
    if d % 2 != 1:
        raise EvenDimension('the Dirac projection needs odd dimension, '
                            'got d={}'.format(d))
    if rep is None:
        rep = complex_irrep(d)
    W = _position_clifford_sum(lattice, N, rep.generators)
    L = 0.5 * (W + np.eye(W.shape[0]))
    return OperatorMatrix(L, lattice=lattice, fiber=N * rep.dim)


class LocalityProfile:
    """Shell-restricted cross-cone block norms of one operator.

    For every exactly disjoint pair of generation-g dyadic cubes and
    every inner radius r, the norm of the block of A between the two
    cube cones with both legs cut to |x| >= r.  ``values`` is the max
    over pairs per radius; ``commutator_values`` tracks the
    shell-restricted norms of [A, X_j/|X|] the same way.
    """

    def __init__(self, generation, radii, values, pair_corners,
                 pair_values, commutator_values):
        self.generation = generation
        self.radii = list(radii)
        self.values = np.asarray(values, dtype=float)
        self.pair_corners = pair_corners
        self.pair_values = np.asarray(pair_values, dtype=float)
        self.commutator_values = np.asarray(commutator_values, dtype=float)

    def certified(self, theta=THETA_LOC):
        """Monotone decay over >= 3 radii ending below theta."""
        if len(self.radii) < 3:
            return False
        drops = np.diff(self.values)
        return bool(np.all(drops <= 1e-12) and self.values[-1] <= theta)

    def csv_rows(self):
        header = ['radius', 'max'] + [
            '{}|{}'.format(f, g) for f, g in self.pair_corners]
        rows = [header]
        for i, r in enumerate(self.radii):
            rows.append([r, self.values[i]]
                        + list(self.pair_values[:, i]))
        return rows

    def json_summary(self, theta=THETA_LOC):
        return {
            'generation': self.generation,
            'radii': self.radii,
            'values': self.values.tolist(),
            'commutator_values': self.commutator_values.tolist(),
            'certified': self.certified(theta),
            'theta': theta,
            }


def _disjoint_cube_pairs(d, generation):
    cubes = dyadic_cubes(d, generation)
    pairs = []
    for i in range(len(cubes)):
        for j in range(i + 1, len(cubes)):
            if cubes[i].disjoint_from(cubes[j]):
                pairs.append((cubes[i], cubes[j]))
    return pairs


def locality_profile(A, radii, generation=1, lattice=None, fiber=None):
    """Spherical-locality surrogate of A over dyadic cube cones."""
    lattice, fiber = _geometry(A, lattice, fiber)
    E = entries_of(A)
    pairs = _disjoint_cube_pairs(lattice.d, generation)
    cone_masks = {}

    def mask_of(cube):
        if cube not in cone_masks:
            m = np.zeros(lattice.nsites, dtype=bool)
            m[cone_sites(cube, lattice)] = True
            cone_masks[cube] = m
        return cone_masks[cube]

    radii = sorted(radii)
    pair_values = np.zeros((len(pairs), len(radii)))
    for pi, (F, G) in enumerate(pairs):
        mF, mG = mask_of(F), mask_of(G)
        for ri, r in enumerate(radii):
            shell = lattice.shell_mask(r)
            # both orientations: locality constrains F->G and G->F
            pair_values[pi, ri] = max(
                block_norm(E, mF & shell, mG & shell, lattice=lattice,
                           fiber=fiber),
                block_norm(E, mG & shell, mF & shell, lattice=lattice,
                           fiber=fiber))
    values = pair_values.max(axis=0) if pairs else np.zeros(len(radii))

    xs = unit_position_ops(lattice, fiber)
    comms = [E @ X.entries - X.entries @ E for X in xs]
    comm_values = np.zeros(len(radii))
    for ri, r in enumerate(radii):
        shell = lattice.shell_mask(r)
        comm_values[ri] = max(
            block_norm(C, shell, shell, lattice=lattice, fiber=fiber)
            for C in comms)

    corners = [(F.corner, G.corner) for F, G in pairs]
    return LocalityProfile(generation, radii, values, corners,
                           pair_values, comm_values)


class LocalityBoundReport:
    """Outcome of a pointwise site-pair bound check."""

    def __init__(self, ok, max_violation, witness, bound):
        self.ok = bool(ok)
        self.max_violation = float(max_violation)
        self.witness = witness  # (x, y) site pair of the extremal block
        self.bound = bound

    def __bool__(self):
        return self.ok

    def __repr__(self):
        return ('LocalityBoundReport(ok={}, max_violation={:.3e}, '
                'witness={})'.format(self.ok, self.max_violation,
                                     self.witness))


def _site_block_norms(E, lattice, fiber):
    ns = lattice.nsites
    T = E.reshape(ns, fiber, ns, fiber)
    out = np.empty((ns, ns))
    chunk = max(1, int(4e6 / max(1, ns * fiber * fiber)))
    for start in range(0, ns, chunk):
        blk = np.ascontiguousarray(
            T[start:start + chunk].transpose(0, 2, 1, 3))
        out[start:start + chunk] = np.linalg.svd(
            blk, compute_uv=False)[..., 0]
    return out


def _pair_bound_check(A, lattice, fiber, bound_fn, name):
    E = entries_of(A)
    norms = _site_block_norms(E, lattice, fiber)
    diffs = lattice.sites[:, None, :] - lattice.sites[None, :, :]
    dist = np.sqrt((diffs.astype(float) ** 2).sum(axis=2))
    bound = bound_fn(dist, lattice.norms[:, None])
    violation = norms - bound
    i, j = np.unravel_index(np.argmax(violation), violation.shape)
    worst = float(violation[i, j])
    witness = (tuple(int(c) for c in lattice.sites[i]),
               tuple(int(c) for c in lattice.sites[j]))
    return LocalityBoundReport(worst <= 1e-12, worst, witness, name)


def is_exponentially_local(A, C, mu, lattice=None, fiber=None):
    """Check |A_xy| <= C exp(-mu |x-y|) on every site pair."""
    lattice, fiber = _geometry(A, lattice, fiber)
    return _pair_bound_check(
        A, lattice, fiber,
        lambda dist, xnorm: C * np.exp(-mu * dist),
        'C exp(-mu r), C={}, mu={}'.format(C, mu))


def is_weakly_local(A, nu, mu, C_mu, lattice=None, fiber=None):
    """Check |A_xy| <= C_mu (1+|x-y|)^(-mu) (1+|x|)^nu pointwise."""
    lattice, fiber = _geometry(A, lattice, fiber)
    return _pair_bound_check(
        A, lattice, fiber,
        lambda dist, xnorm: C_mu * (1.0 + dist) ** (-mu)
        * (1.0 + xnorm) ** nu,
        '(1+r)^-mu growth nu, C={}, mu={}, nu={}'.format(C_mu, mu, nu))


def dirac_commutator_norm(A, lattice=None, fiber=None, radii=None,
                          rep=None):
    """Norm of [A tensor 1_aux, flat Dirac], optionally per shell."""
    lattice, fiber = _geometry(A, lattice, fiber)
    if rep is None:
        rep = complex_irrep(lattice.d)
    W = flat_dirac(lattice, N=fiber, rep=rep).entries
    Aext = np.kron(entries_of(A), np.eye(rep.dim))
    Cm = Aext @ W - W @ Aext
    if radii is None:
        return float(np.linalg.norm(Cm, 2))
    out = np.zeros(len(radii))
    for i, r in enumerate(sorted(radii)):
        shell = lattice.shell_mask(r)
        out[i] = block_norm(Cm, shell, shell, lattice=lattice,
                            fiber=fiber * rep.dim)
    return out


class RedimerizationMap:
    """Unitary regrouping x = Mq + r onto a coarser lattice.

    The fine basis vector at site x with internal index n is sent to
    the coarse site q, coset slot r, internal index n; coarse rows are
    ordered (site, coset, internal).  At finite volume the map is an
    isometry into the coarse space (not onto: boundary cosets are
    unevenly populated), so norms are preserved and unrealized rows
    stay zero.
    """

    def __init__(self, M, reps, fine, fiber):
        M = np.asarray(M, dtype=np.int64)
        d = fine.d
        if M.shape != (d, d):
            raise InvalidCosets('M must be {}x{}'.format(d, d))
        det = int(round(float(np.linalg.det(M.astype(float)))))
        if det == 0:
            raise InvalidCosets('M is singular')
        nprime = abs(det)
        reps = [tuple(int(c) for c in r) for r in reps]
        if len(set(reps)) != len(reps) or len(reps) != nprime:
            raise InvalidCosets('need |det M| = {} distinct '
                                'representatives, got {}'
                                .format(nprime, len(reps)))
        Minv = np.linalg.inv(M.astype(float))
        for i in range(len(reps)):
            for j in range(i + 1, len(reps)):
                diff = np.array(reps[i]) - np.array(reps[j])
                q = np.round(Minv @ diff).astype(np.int64)
                if np.array_equal(M @ q, diff):
                    raise InvalidCosets(
                        'representatives {} and {} are equivalent mod M'
                        .format(reps[i], reps[j]))
        self.M = M
        self.reps = reps
        self.fine = fine
        self.fiber = fiber
        self.nprime = nprime

        ridx = np.empty(fine.nsites, dtype=int)
        qpts = np.empty((fine.nsites, d), dtype=np.int64)
        for si, x in enumerate(fine.sites):
            for k, r in enumerate(reps):
                q = np.round(Minv @ (x - np.array(r))).astype(np.int64)
                if np.array_equal(M @ q + np.array(r), x):
                    ridx[si] = k
                    qpts[si] = q
                    break
            else:
                raise InvalidCosets('site {} matches no representative'
                                    .format(tuple(x)))
        coarse_sites = np.array(
            sorted({tuple(int(c) for c in q) for q in qpts}),
            dtype=np.int64)
        coarse_R = float(np.sqrt((coarse_sites.astype(float) ** 2)
                                 .sum(axis=1)).max())
        self.coarse = Lattice(d, coarse_R, nprime * fiber,
                              sites=coarse_sites)
        qindex = np.array([self.coarse.site_index(q) for q in qpts])
        self.qindex = qindex
        # direction of the embedded block position Mq (not of q itself):
        # this is the diagonal the coarse unit position pulls back to
        self.embedded_directions = np.array(
            [unit_direction(M @ q) for q in coarse_sites])
        base = (qindex * nprime + ridx) * fiber
        rows = (base[:, None] + np.arange(fiber)).ravel()
        cols = np.arange(fine.nsites * fiber)
        U = np.zeros((self.coarse.dim, fine.nsites * fiber))
        U[rows, cols] = 1.0
        self.unitary = U

    def apply(self, A):
        out = self.unitary @ entries_of(A) @ self.unitary.T
        return OperatorMatrix(out, lattice=self.coarse,
                              fiber=self.nprime * self.fiber)

    def defect_shell_norms(self, radii):
        """Shell norms of X_j/|X| minus the pulled-back coarse version.

        The coarse comparison operator multiplies by (Mq)_j / |Mq|,
        the direction of the embedded block position.  The defect is
        diagonal, so the restricted norm is the largest absolute entry
        over sites |x| >= r; it is bounded by 2 max|r| / |Mq| and so
        decays like 1/r.
        """
        pulled = self.embedded_directions[self.qindex]  # (nfine, d)
        defect = np.abs(self.fine.directions - pulled)
        out = np.zeros((self.fine.d, len(radii)))
        for i, r in enumerate(sorted(radii)):
            sel = self.fine.shell_mask(r)
            if sel.any():
                out[:, i] = defect[sel].max(axis=0)
        return out


def redimerize(A, M, reps, lattice=None, fiber=None):
    """Conjugate A by the regrouping isometry; returns (coarse A, map)."""
    lattice, fiber = _geometry(A, lattice, fiber)
    rmap = RedimerizationMap(M, reps, lattice, fiber)
    return rmap.apply(A), rmap


class BulkReport:
    """Per-cube shell masses of a projection and its complement.

    A projection is bulk non-trivial when every cone keeps mass in
    both P and 1-P arbitrarily far out; at finite volume that is
    checked as: for every generation-g cube and every listed radius,
    the largest singular value of the shell-restricted compression
    stays >= theta on both sides.
    """

    def __init__(self, generation, radii, corners, p_values, q_values,
                 theta):
        self.generation = generation
        self.radii = list(radii)
        self.corners = corners
        self.p_values = np.asarray(p_values, dtype=float)
        self.q_values = np.asarray(q_values, dtype=float)
        self.theta = theta
        self.failures = []
        for ci, corner in enumerate(corners):
            for ri, r in enumerate(self.radii):
                if self.p_values[ci, ri] < theta:
                    self.failures.append((corner, r, 'P',
                                          float(self.p_values[ci, ri])))
                if self.q_values[ci, ri] < theta:
                    self.failures.append((corner, r, 'complement',
                                          float(self.q_values[ci, ri])))
        self.nontrivial = not self.failures

    def csv_rows(self):
        rows = [['cube', 'radius', 'P_mass', 'complement_mass']]
        for ci, corner in enumerate(self.corners):
            for ri, r in enumerate(self.radii):
                rows.append([str(corner), r, self.p_values[ci, ri],
                             self.q_values[ci, ri]])
        return rows

    def json_summary(self):
        return {
            'generation': self.generation,
            'radii': self.radii,
            'theta': self.theta,
            'nontrivial': self.nontrivial,
            'failures': [
                {'cube': str(c), 'radius': r, 'side': side, 'value': v}
                for c, r, side, v in self.failures],
            }


def bulk_nontriviality(P, radii, generation=1, theta=THETA_NT,
                       lattice=None, fiber=None):
    """Shell-mass check of P and 1-P over every generation-g cone."""
    lattice, fiber = _geometry(P, lattice, fiber)
    E = entries_of(P)
    n = E.shape[0]
    res = max(np.linalg.norm(E @ E - E, 2),
              np.linalg.norm(E - E.conj().T, 2))
    if res > 1e-8:
        raise ValueError('bulk_nontriviality expects a projection, '
                         'residual {:.2e}'.format(res))
    Q = np.eye(n) - E
    cubes = dyadic_cubes(lattice.d, generation)
    radii = sorted(radii)
    p_values = np.zeros((len(cubes), len(radii)))
    q_values = np.zeros_like(p_values)
    for ci, cube in enumerate(cubes):
        cone = np.zeros(lattice.nsites, dtype=bool)
        cone[cone_sites(cube, lattice)] = True
        for ri, r in enumerate(radii):
            sel = cone & lattice.shell_mask(r)
            sub_p = compressed_block(E, sel, sel, lattice=lattice,
                                     fiber=fiber)
            sub_q = compressed_block(Q, sel, sel, lattice=lattice,
                                     fiber=fiber)
            if sub_p.size:
                p_values[ci, ri] = np.linalg.norm(sub_p, 2)
                q_values[ci, ri] = np.linalg.norm(sub_q, 2)
    corners = [cube.corner for cube in cubes]
    return BulkReport(generation, radii, corners, p_values, q_values,
                      theta)
