"""Real-space strong invariants as relative indices of projections.

On a finite ball every compression of the form P U P + (1 - P) has
index zero by rank counting, so the infinite-volume Fredholm index is
estimated instead through the relative index of the projection pair
(P, U P U*): a spatially windowed trace of an odd power of their
difference,

    raw = tr(X_w (P - Q)^(2n+1) X_w),        Q = U P U*,

with X_w the indicator of an interior ball.  The window is not an
optimization, it is what makes the number nonzero: writing
B = 1 - P - Q one has BD = -DB and B^2 = 1 - D^2 for D = P - Q, so
the spectrum of D is symmetric about zero except at +-1 and every
full trace of an odd power equals rank P - rank Q, which vanishes
whenever Q is a unitary conjugate of P.  At finite volume the +1/-1
eigenvectors that carry the index localize at the Dirac point while
their rank-compensating partners localize at the truncation boundary;
the window keeps the former and drops the latter, and the windowed
trace stabilizes near the integer as the radius grows.  Default power
3: the linear windowed trace is far noisier against partially caught
mid-spectrum pairs, the cubic one suppresses them as |lambda|^3.

Two pairings are derived from it.  In odd dimension the flat Dirac
projection pairs with a unitary (the phase of a flattened chiral
Hamiltonian); in even dimension the Dirac phase unitary pairs with a
spectral projection.  The overall signs are pinned by two calibration
runs against the momentum oracles and kept as named constants:
the two-band chain with pure inter-cell hopping maps to +1, and the
m = 1 Chern model maps to -1.

Real-class Z2 invariants are not computed here: no finite-volume
formula is part of this package's contract, and symmetry-space
membership residuals are the implemented real-class observable.
"""

import numpy as np

from .dirac import dirac_phase, dirac_projection
from .errors import EvenDimension, NotChiral, NotConverged, OddDimension
from .operators import (
    OperatorMatrix,
    _geometry,
    compressed_block,
    entries_of,
)
from .symmetry import _diagonal_grading_masks, _chiral_grading

__all__ = [
    'THETA_INT', 'EVEN_INDEX_SIGN', 'ODD_INDEX_SIGN', 'IndexReport',
    'relative_index', 'even_index', 'odd_index', 'index_convergence',
    'chiral_flat_unitary',
    ]

THETA_INT = 0.05

# Calibration constants (see the decisions ledger for the runs that
# pinned them).  even: the m = 1 Chern model must give -1, matching
# the Berry flux oracle; the windowed trace with Q = L P L* gives +1
# there, hence the flip.  odd: the pure inter-cell chain must give +1
# at the negative-to-positive block convention of chiral_offdiag.
EVEN_INDEX_SIGN = -1
ODD_INDEX_SIGN = -1

# outer-shell mass above this is treated as an index leak: a near
# finite-rank difference must have most of its weight well inside the
# truncation for the trace to mean anything
_DECAY_CEILING = 0.5


class IndexReport:
    """Rounded index value with its certification data.

    value is the nearest integer to the signed raw trace, residual the
    rounding distance, power the odd trace power used, and table the
    (radius, raw trace) pairs that entered the computation.
    """

    def __init__(self, value, raw, power, table=None):
        self.value = int(value)
        self.raw = float(raw)
        self.residual = abs(self.raw - self.value)
        self.power = int(power)
        self.table = [(float(r), float(t)) for r, t in (table or [])]
        self.window = None

    def certified(self, theta=THETA_INT):
        return self.residual <= theta

    def json_summary(self):
        return {
            'value': self.value,
            'raw': self.raw,
            'residual': self.residual,
            'power': self.power,
            'table': [[r, t] for r, t in self.table],
            }

    def csv_rows(self):
        rows = [['radius', 'raw_trace']]
        for r, t in self.table:
            rows.append([r, t])
        return rows

    def __repr__(self):
        return ('IndexReport(value={}, raw={:+.6f}, power={})'
                .format(self.value, self.raw, self.power))


def _projection_defect(E):
    idem = E @ E - E
    herm = E - E.conj().T
    # Frobenius dominates the spectral norm, so a tiny value certifies
    # the pass without a dense SVD; the exact norm only runs near the
    # threshold
    quick = max(np.linalg.norm(idem), np.linalg.norm(herm))
    if quick <= 1e-8:
        return quick
    return max(np.linalg.norm(idem, 2), np.linalg.norm(herm, 2))


def _shell_decay(D, lattice, fiber):
    """Norms of D on interior annuli f*R <= |x| < 0.85*R.

    The outermost ring is excluded on purpose: a truncated gapped
    model parks its boundary modes there, and those are exactly the
    truncation artifacts the radius-convergence scan exists to
    average out.  What must decay is the difference in the trusted
    interior.
    """
    cap = lattice.shell_mask(lattice.R * 0.85)
    vals = []
    for frac in (0.25, 0.45, 0.65):
        sel = lattice.shell_mask(lattice.R * frac) & ~cap
        sub = compressed_block(D, sel, sel, lattice=lattice, fiber=fiber)
        if sub.size:
            # D is Hermitian and the compression index sets are equal,
            # so the spectral norm is the largest |eigenvalue|
            vals.append(float(np.abs(np.linalg.eigvalsh(sub)).max()))
        else:
            vals.append(0.0)
    return vals


def _windowed_odd_trace(D, power, rows):
    """diag of D^power summed over the window rows, via one pass."""
    if power == 3:
        squared = D @ D
    else:
        squared = np.linalg.matrix_power(D, power - 1)
    diag = np.einsum('ij,ji->i', squared[rows], D[:, rows])
    return float(np.sum(diag).real)


def relative_index(P, Q, n=1, window=None, theta=THETA_INT, certify=True,
                   lattice=None, fiber=None):
    """Relative index of a projection pair from a windowed odd trace.

    Both arguments must be projections within 1e-8 and their
    difference must decay over interior annuli (the finite-volume
    surrogate of compactness; without it the trace is dominated by
    delocalized differences and certification is refused).

    window is the radius of the interior ball the trace is restricted
    to, default half the truncation radius; see the module docstring
    for why the unwindowed trace is identically rank P - rank Q and
    therefore useless here.

    With certify=True (the default) a rounding residual above theta
    raises NotConverged carrying the partial report; certify=False
    returns the report regardless, which is what convergence scans
    over several radii want.
    """
    if n < 1:
        raise ValueError('the trace power 2n+1 needs n >= 1; the linear '
                         'windowed trace is too noisy to certify')
    lattice, fiber = _geometry(P, lattice, fiber)
    Ep, Eq = entries_of(P), entries_of(Q)
    if Ep.shape != Eq.shape:
        raise ValueError('projection shapes differ: {} vs {}'.format(
            Ep.shape, Eq.shape))
    for name, E in (('P', Ep), ('Q', Eq)):
        defect = _projection_defect(E)
        if defect > 1e-8:
            raise ValueError('{} is not a projection: defect {:.2e}'
                             .format(name, defect))
    D = Ep - Eq
    shells = _shell_decay(D, lattice, fiber)
    if shells[0] > 1e-12:
        growing = any(b > a + 1e-12 for a, b in zip(shells, shells[1:]))
        if growing or shells[-1] > _DECAY_CEILING:
            raise NotConverged(
                'projection difference does not decay over the interior '
                'annuli (norms {}); the pair is not compact enough to '
                'pair at this radius'.format(
                    ', '.join('{:.3f}'.format(v) for v in shells)))
    w = 0.5 * lattice.R if window is None else float(window)
    rows = lattice.expand_mask(lattice.ball_mask(w), fiber)
    if rows.shape[0] != Ep.shape[0]:
        raise ValueError('window mask length {} does not match dimension '
                         '{}'.format(rows.shape[0], Ep.shape[0]))
    power = 2 * n + 1
    raw = _windowed_odd_trace(D, power, rows)
    report = IndexReport(np.rint(raw), raw, power,
                         table=[(lattice.R, raw)])
    report.window = w
    if certify and report.residual > theta:
        raise NotConverged(
            'windowed trace {:+.4f} is {:.3f} away from an integer '
            '(theta={})'.format(raw, report.residual, theta),
            report=report)
    return report


def _tensor_aux(E, aux):
    """Expand a (site, N) operator by an auxiliary fiber, kept slowest
    to fastest as (site, N, auxiliary)."""
    if aux == 1:
        return E
    return np.kron(E, np.eye(aux))


def _signed(report, sign, radius, theta, certify):
    raw = sign * report.raw
    out = IndexReport(np.rint(raw), raw, report.power,
                      table=[(radius, raw)])
    out.window = report.window
    if certify and out.residual > theta:
        raise NotConverged(
            'windowed trace {:+.4f} is {:.3f} away from an integer '
            '(theta={})'.format(raw, out.residual, theta), report=out)
    return out


def even_index(P, n=1, window=None, theta=THETA_INT, certify=True,
               lattice=None, fiber=None):
    """Pairing of a projection with the Dirac phase in even dimension.

    Computes the relative index of (P tensor 1, L (P tensor 1) L*)
    with L the unitary Dirac phase, sign-calibrated so the m = 1
    Chern model lands on -1.  The shell-decay precondition on the
    difference doubles as the [P, X/|X|] decay requirement.
    """
    lattice, fiber = _geometry(P, lattice, fiber)
    if lattice.d % 2:
        raise OddDimension('the even pairing needs even dimension, got '
                           'd={}'.format(lattice.d))
    L = dirac_phase(lattice, N=fiber)
    aux = L.fiber // fiber
    Ep = _tensor_aux(entries_of(P), aux)
    El = entries_of(L)
    Q = El @ Ep @ El.conj().T
    base = relative_index(Ep, Q, n=n, window=window, theta=theta,
                          certify=False, lattice=lattice, fiber=L.fiber)
    return _signed(base, EVEN_INDEX_SIGN, lattice.R, theta, certify)


def odd_index(U, n=1, window=None, theta=THETA_INT, certify=True,
              lattice=None, fiber=None):
    """Pairing of a unitary with the Dirac projection in odd dimension.

    Computes the relative index of (Lambda, U' Lambda U'*) with
    Lambda the flat Dirac projection and U' = U tensor 1, sign
    calibrated so the pure inter-cell two-band chain lands on +1.

    U is typically unitary, but the kernel-omitting partial isometry
    of chiral_flat_unitary is accepted as well: when its defect
    directions are localized away from the Dirac step the conjugated
    Lambda is still an exact projection, and the projection check
    inside relative_index is the arbiter.
    """
    lattice, fiber = _geometry(U, lattice, fiber)
    if lattice.d % 2 == 0:
        raise EvenDimension('the odd pairing needs even dimension, got '
                            'd={}'.format(lattice.d))
    Lam = dirac_projection(lattice, N=fiber)
    aux = Lam.fiber // fiber
    Eu = _tensor_aux(entries_of(U), aux)
    El = entries_of(Lam)
    Q = Eu @ El @ Eu.conj().T
    base = relative_index(El, Q, n=n, window=window, theta=theta,
                          certify=False, lattice=lattice, fiber=Lam.fiber)
    return _signed(base, ODD_INDEX_SIGN, lattice.R, theta, certify)


def chiral_flat_unitary(H, pi=None, kernel_tol=1e-12,
                        lattice=None, fiber=None):
    """Off-diagonal part of the kernel-omitting spectral sign.

    For a gapped chiral H this is chiral_offdiag(sign_flatten(H)).
    At an exactly dimerized point the open boundary carries exact zero
    modes, sign_flatten legitimately refuses, and the honest flat
    object is the spectral sign with the kernel sent to zero: a
    partial isometry between the chirality halves that simply omits
    the kernel directions.  Completing it to a unitary instead would
    fabricate a matrix element wrapping the truncation and cancel the
    index, so no completion is attempted.

    kernel_tol is deliberately much smaller than the spectral gap
    tolerance: an end-mode pair split by a tiny but nonzero amount
    carries definite signs and must contribute them, or the omitted
    directions (whose exponential tails cross the Dirac step) would
    spoil the conjugated projection downstream.  Only numerically
    exact zeros, whose sign is meaningless, are omitted.
    """
    lattice, fiber = _geometry(H, lattice, fiber)
    E = entries_of(H)
    herm = np.abs(E - E.conj().T).max()
    if herm > 1e-10:
        raise ValueError('chiral_flat_unitary expects a Hermitian '
                         'operator, defect {:.2e}'.format(herm))
    if pi is None:
        pi = _chiral_grading(fiber)
    pos, neg = _diagonal_grading_masks(pi, E.shape[0])
    signs = np.where(pos, 1.0, -1.0)
    anti = np.linalg.norm(E + signs[:, None] * E * signs[None, :], 2)
    if anti > 1e-10:
        raise NotChiral('grading anticommutator norm {:.2e}'.format(anti))
    w, V = np.linalg.eigh(E)
    s = np.sign(w)
    s[np.abs(w) <= kernel_tol] = 0.0
    S = (V * s) @ V.conj().T
    B = S[np.ix_(np.flatnonzero(neg), np.flatnonzero(pos))]
    if isinstance(H, OperatorMatrix) and H.lattice is not None:
        return OperatorMatrix(B, lattice=lattice, fiber=fiber // 2)
    return B


def index_convergence(run, radii, theta=THETA_INT):
    """Stabilization scan of an index over nested truncations.

    run(radius) must return an IndexReport (even_index / odd_index
    composed over a model builder).  Inner NotConverged errors that
    carry a partial report are treated as data points: only the full
    scan decides.  Certification requires every successive raw-trace
    change below theta/2 and the final rounding residual below theta;
    otherwise NotConverged carries the assembled table, so a too-small
    radius budget can never come back as a silent integer.
    """
    radii = sorted(float(R) for R in radii)
    if len(radii) < 2:
        raise ValueError('a convergence scan needs at least two radii')
    reports = []
    for R in radii:
        try:
            rep = run(R)
        except NotConverged as err:
            if err.report is None:
                raise
            rep = err.report
        reports.append(rep)
    table = [(R, rep.raw) for R, rep in zip(radii, reports)]
    last = reports[-1]
    combined = IndexReport(last.value, last.raw, last.power, table=table)
    deltas = [abs(b.raw - a.raw) for a, b in zip(reports, reports[1:])]
    if any(dl >= theta / 2 for dl in deltas):
        raise NotConverged(
            'raw trace not stabilized: successive changes {} against '
            'theta/2 = {}'.format(
                ', '.join('{:.4f}'.format(dl) for dl in deltas),
                theta / 2), report=combined)
    if combined.residual > theta:
        raise NotConverged(
            'stabilized raw trace {:+.4f} is {:.3f} away from an '
            'integer'.format(combined.raw, combined.residual),
            report=combined)
    return combined
