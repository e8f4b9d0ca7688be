"""Constructive deformations between canonical operator representatives.

Every public operation either emits a discretized operator path together
with a PathReport certifying sampled admissibility (gap or invertibility,
symmetry residuals, cross-cone locality), or performs one of the finite
constructions the paths are assembled from: decoupling across commuting
projection pairs, island extraction for weakly coupled centers, greedy
real partial isometries between spherically spread site sets, and the
rank-one repair calculus for the odd real class built on dimer pairs.

Paths live on finite grids.  Certification samples the grid and refines
it where the certified gap jumps by more than ten percent between
neighbors; the verdict is recomputable from the stored snapshots alone.
"""

import numpy as np
import scipy.linalg

from .dirac import THETA_LOC, _disjoint_cube_pairs, locality_profile
from .errors import (
    BranchCutHit,
    CollinearityFailure,
    GapClosed,
    InsufficientVolume,
    IsometryMismatch,
    MatchingFailed,
    NotConverged,
    NotDimerClosed,
    PreconditionBound,
    SingularPath,
    SplitFailed,
)
from .lattice import ProperSet, cone_sites, dimer_partition, dyadic_cubes, \
    split_proper
from .operators import (
    TAU_GAP,
    TAU_INV,
    TAU_BRANCH,
    OperatorMatrix,
    _geometry,
    block_norm,
    entries_of,
    sign_flatten,
    spectral_gap,
    wrap_like,
)

__all__ = [
    'GRID_POINTS', 'TAU_SYM',
    'Path', 'PathReport', 'DecouplingResult', 'IslandFamily',
    'certify_path', 'flatten_path', 'rotation_path', 'decouple',
    'localized_centers', 'proper_isometry', 'pinning',
    'compress_matrix_homotopy', 'dimer_operator', 'diii_symmetrize',
    'diii_rank_one_repair', 'diii_pinning', 'dimer_isometry',
    'e_to_minus_e_path',
]

GRID_POINTS = 33
TAU_SYM = 1e-8

# refinement: insert midpoints while adjacent certified gaps differ by
# more than this relative jump, up to a bounded number of passes
_REFINE_JUMP = 0.10
_REFINE_PASSES = 3


class Path:
    """An operator-valued path with its sampling grid.

    ``fn`` maps a float parameter to a square ndarray; ``grid`` holds
    the certified sample parameters.  ``kind`` selects the gap notion:
    'hermitian' uses the spectral gap at zero, 'invertible' and
    'unitary' use the smallest singular value.
    """

    def __init__(self, fn, grid, kind, lattice=None, fiber=None):
        self.fn = fn
        self.grid = np.asarray(sorted(float(t) for t in grid))
        if self.grid.size < 2:
            raise ValueError('a path needs at least two grid points')
        self.kind = kind
        self.lattice = lattice
        self.fiber = fiber

    def __call__(self, t):
        return self.fn(float(t))

    def snapshots(self):
        return [(float(t), self.fn(float(t))) for t in self.grid]


class PathReport:
    """Sampled admissibility certificate for one path."""

    def __init__(self, kind, grid, gaps, residuals, locality,
                 gap_tol, sym_tol=TAU_SYM, theta_loc=THETA_LOC,
                 locality_radius=None):
        self.kind = kind
        self.grid = [float(t) for t in grid]
        self.gaps = [float(g) for g in gaps]
        self.residuals = {k: [float(v) for v in vs]
                          for k, vs in residuals.items()}
        self.locality = [float(v) for v in locality]
        self.gap_tol = float(gap_tol)
        self.sym_tol = float(sym_tol)
        self.theta_loc = float(theta_loc)
        self.locality_radius = locality_radius

    @property
    def min_gap(self):
        return min(self.gaps)

    @property
    def max_residual(self):
        if not self.residuals:
            return 0.0
        return max(max(vs) for vs in self.residuals.values())

    @property
    def max_locality(self):
        return max(self.locality) if self.locality else 0.0

    @property
    def verdict(self):
        return bool(self.min_gap >= self.gap_tol
                    and self.max_residual <= self.sym_tol
                    and self.max_locality <= self.theta_loc)

    def json_summary(self):
        return {
            'kind': self.kind,
            'grid': self.grid,
            'min_gap': self.min_gap,
            'gap_tol': self.gap_tol,
            'residuals': {k: max(vs) for k, vs in self.residuals.items()},
            'locality_max': self.max_locality,
            'locality_radius': self.locality_radius,
            'verdict': self.verdict,
            }

    def csv_rows(self):
        names = sorted(self.residuals)
        rows = [['t', 'gap'] + names + ['locality']]
        for i, t in enumerate(self.grid):
            rows.append([t, self.gaps[i]]
                        + [self.residuals[k][i] for k in names]
                        + [self.locality[i]])
        return rows

    def __repr__(self):
        return ('PathReport({}, {} points, min_gap={:.3e}, verdict={})'
                .format(self.kind, len(self.grid), self.min_gap,
                        self.verdict))


def _point_gap(M, kind):
    if kind == 'hermitian':
        w = np.linalg.eigvalsh(M)
        return float(np.abs(w).min())
    s = np.linalg.svd(M, compute_uv=False)
    return float(s.min())


def _locality_value(M, lattice, fiber, radius, generation=1):
    """Max cross-cone block norm, legs cut to radius <= |x| <= 0.85 R.

    The outer cap keeps the rim out of the certificate: open-boundary
    edge modes live there and are extended along the rim, so they break
    spherical locality for reasons that have nothing to do with the
    deformation being certified.  Interior windows are how every other
    finite-volume quantity in the package is read.
    """
    pairs = _disjoint_cube_pairs(lattice.d, generation)
    shell = lattice.shell_mask(radius) & lattice.ball_mask(0.85 * lattice.R)
    best = 0.0
    for F, G in pairs:
        mF = np.zeros(lattice.nsites, dtype=bool)
        mF[cone_sites(F, lattice)] = True
        mG = np.zeros(lattice.nsites, dtype=bool)
        mG[cone_sites(G, lattice)] = True
        best = max(best,
                   block_norm(M, mF & shell, mG & shell,
                              lattice=lattice, fiber=fiber),
                   block_norm(M, mG & shell, mF & shell,
                              lattice=lattice, fiber=fiber))
    return best


def certify_path(path, constraints=None, locality_radius=None,
                 gap_tol=None, refine=True):
    """Sample a path and certify gap, residuals, and locality.

    ``constraints`` maps residual names to callables matrix -> float.
    When the path carries a lattice, the cross-cone locality value is
    recorded at ``locality_radius`` (default half the truncation
    radius).  Grid points are inserted wherever the certified gap jumps
    by more than ten percent between neighbors; the refined grid is
    written back onto the path so report and snapshots stay aligned.
    """
    constraints = dict(constraints or {})
    if gap_tol is None:
        gap_tol = TAU_GAP if path.kind == 'hermitian' else TAU_INV
    measure_loc = path.lattice is not None
    if measure_loc and locality_radius is None:
        locality_radius = path.lattice.R / 2.0

    def row(t):
        M = path.fn(float(t))
        gap = _point_gap(M, path.kind)
        res = {k: float(f(M)) for k, f in constraints.items()}
        loc = (_locality_value(M, path.lattice, path.fiber,
                               locality_radius) if measure_loc else 0.0)
        return gap, res, loc

    ts = [float(t) for t in path.grid]
    rows = {t: row(t) for t in ts}
    if refine:
        for _ in range(_REFINE_PASSES):
            new = []
            for a, b in zip(ts, ts[1:]):
                ga, gb = rows[a][0], rows[b][0]
                scale = max(abs(ga), abs(gb), 1e-12)
                if abs(gb - ga) > _REFINE_JUMP * scale:
                    new.append(0.5 * (a + b))
            if not new:
                break
            for t in new[:16]:
                rows[t] = row(t)
            ts = sorted(rows)
    path.grid = np.asarray(ts)
    gaps = [rows[t][0] for t in ts]
    residuals = {k: [rows[t][1][k] for t in ts] for k in constraints}
    locality = [rows[t][2] for t in ts]
    return PathReport(path.kind, ts, gaps, residuals, locality,
                      gap_tol=gap_tol,
                      locality_radius=locality_radius)


def _theta_grid(grid):
    if grid is None:
        return np.linspace(0.0, np.pi / 2.0, GRID_POINTS)
    return np.asarray(grid, dtype=float)


def _unit_grid(grid):
    if grid is None:
        return np.linspace(0.0, 1.0, GRID_POINTS)
    return np.asarray(grid, dtype=float)


def flatten_path(H, grid=None, constraints=None):
    """Straight-line deformation of a gapped Hermitian H to sgn(H).

    Returns (Path, PathReport).  The path is H_t = (1-t) H + t sgn(H);
    its gap never drops below min(1, gap(H)), so certification can only
    fail if the input itself is not gapped.  Optional ``constraints``
    (name -> callable) are evaluated at every grid point; symmetry
    residuals of H are constant along the path because the sign
    function commutes with any operator H commutes or anticommutes
    with.
    """
    lattice = getattr(H, 'lattice', None)
    fiber = getattr(H, 'fiber', None)
    E = entries_of(H)
    gap = spectral_gap(E).gap
    if gap < TAU_GAP:
        raise GapClosed('flatten_path needs a gapped input; spectral gap '
                        '{:.2e} < {:.0e}'.format(gap, TAU_GAP))
    S = entries_of(sign_flatten(E))

    def fn(t):
        return (1.0 - t) * E + t * S

    path = Path(fn, _unit_grid(grid), 'hermitian', lattice, fiber)
    report = certify_path(path, constraints=constraints)
    if report.min_gap < TAU_GAP:
        i = int(np.argmin(report.gaps))
        raise GapClosed('gap {:.2e} at t={:.4f} along the flattening '
                        'path'.format(report.min_gap, report.grid[i]))
    return path, report


def _rotation(Pm, Qm, Vm, theta):
    n = Pm.shape[0]
    rest = np.eye(n) - Pm - Qm
    return (rest + np.cos(theta) * (Pm + Qm)
            + np.sin(theta) * (Vm - Vm.conj().T))


def rotation_path(P, Q, V, grid=None):
    """Unitary rotations sweeping im P onto im Q through the isometry V.

    Requires V*V = P, VV* = Q, and P orthogonal to Q; raises
    IsometryMismatch otherwise.  The grid parameter is the rotation
    angle on [0, pi/2]: at angle 0 the rotation is the identity, at
    pi/2 it conjugates P into Q.  Returns (Path, PathReport) with the
    unitarity residual tracked per grid point.
    """
    lattice = getattr(P, 'lattice', None)
    fiber = getattr(P, 'fiber', None)
    Pm, Qm, Vm = entries_of(P), entries_of(Q), entries_of(V)
    checks = (
        ('V*V = P', np.abs(Vm.conj().T @ Vm - Pm).max()),
        ('VV* = Q', np.abs(Vm @ Vm.conj().T - Qm).max()),
        ('PQ = 0', np.abs(Pm @ Qm).max()),
        )
    for name, dev in checks:
        if dev > 1e-10:
            raise IsometryMismatch('{} fails with deviation {:.2e}'
                                   .format(name, dev))

    def fn(theta):
        return _rotation(Pm, Qm, Vm, theta)

    path = Path(fn, _theta_grid(grid), 'unitary', lattice, fiber)
    unitarity = lambda M: float(
        np.abs(M @ M.conj().T - np.eye(M.shape[0])).max())
    report = certify_path(path, constraints={'unitarity': unitarity})
    return path, report


class DecouplingResult:
    """Outcome of switching off the interactions P_k A Q_k."""

    def __init__(self, B, achieved, certificates):
        self.B = B
        self.achieved = float(achieved)     # ||A - B||
        self.certificates = [(int(k), float(v)) for k, v in certificates]

    @property
    def max_certificate(self):
        return max((v for _, v in self.certificates), default=0.0)

    def __repr__(self):
        return ('DecouplingResult(pairs={}, achieved={:.3e}, '
                'max_zero={:.3e})'.format(len(self.certificates),
                                          self.achieved,
                                          self.max_certificate))


def decouple(A, pairs, eps):
    """Remove every interaction P_k A Q_k at a controlled cost.

    ``pairs`` is a sequence of (P_k, Q_k) projection pairs; the P's
    must commute among themselves and so must the Q's.  The norm
    schedule ||P_k A Q_k|| <= eps / 2^(2k-1) is enforced up front
    (PreconditionBound).  The correction is accumulated through the
    recursion

        S_1 = P_1 A Q_1,   S_{n+1} = S_n + P_{n+1} A Q_{n+1}
                                          - P_{n+1} S_n Q_{n+1}

    which reproduces the inclusion-exclusion series without walking
    its exponentially many terms.  B = A - S then satisfies
    P_k B Q_k = 0 for every k, exactly, and ||A - B|| <= eps.
    """
    E = entries_of(A)
    Ps = [entries_of(p) for p, _ in pairs]
    Qs = [entries_of(q) for _, q in pairs]
    for fam, name in ((Ps, 'P'), (Qs, 'Q')):
        for i in range(len(fam)):
            for j in range(i + 1, len(fam)):
                dev = np.abs(fam[i] @ fam[j] - fam[j] @ fam[i]).max()
                if dev > 1e-12:
                    raise ValueError('{} family is not pairwise '
                                     'commutative: [{}]x[{}] deviates by '
                                     '{:.2e}'.format(name, i, j, dev))
    norms = [float(np.linalg.norm(P @ E @ Q, 2)) for P, Q in zip(Ps, Qs)]
    for k, nk in enumerate(norms, start=1):
        bound = eps / 2.0 ** (2 * k - 1)
        if nk > bound:
            raise PreconditionBound(
                'pair {} has ||P A Q|| = {:.3e} above the schedule '
                '{:.3e} = eps/2^{}'.format(k, nk, bound, 2 * k - 1))
    S = np.zeros_like(E)
    for P, Q in zip(Ps, Qs):
        S = S + P @ E @ Q - P @ S @ Q
    B = E - S
    certificates = [
        (k, float(np.linalg.norm(P @ B @ Q, 2)))
        for k, (P, Q) in enumerate(zip(Ps, Qs), start=1)]
    achieved = float(np.linalg.norm(S, 2))
    wrapped = wrap_like(A, B) if isinstance(A, OperatorMatrix) else B
    return DecouplingResult(wrapped, achieved, certificates)


class IslandFamily:
    """Weakly coupled centers with their support islands and shells.

    ``centers[k]`` couples to the outside of the annulus
    (radii[k-1], radii[k]] by at most ``couplings[k]``, targeted at
    ``eps_targets[k] = eps / 2^(k+1)``; after decoupling, the island
    ``islands[k]`` (site indices) carries the full support of the
    column at the center and sits inside its annulus.
    """

    def __init__(self, centers, islands, radii, eps, eps_targets,
                 couplings, deformation, generation=1):
        self.centers = [int(c) for c in centers]
        self.islands = [sorted(int(i) for i in isl) for isl in islands]
        self.radii = [float(r) for r in radii]
        self.eps = float(eps)
        self.eps_targets = [float(e) for e in eps_targets]
        self.couplings = [float(c) for c in couplings]
        self.deformation = float(deformation)   # ||A - B||
        self.generation = generation

    def __len__(self):
        return len(self.centers)

    @property
    def overhead(self):
        """C in ||A - B|| <= C eps."""
        return self.deformation / self.eps if self.eps else 0.0

    def disjoint(self):
        seen = set()
        for isl in self.islands:
            s = set(isl)
            if s & seen:
                return False
            seen |= s
        return True

    def contained(self, lattice):
        """Every island inside its own annulus (r_{k-1}, r_k]."""
        lo = 0.0
        for isl, hi in zip(self.islands, self.radii):
            norms = lattice.norms[isl]
            if norms.size and (norms.min() <= lo - 1e-9
                               or norms.max() > hi + 1e-9):
                return False
            lo = hi
        return True

    def cone_separation_counts(self, lattice):
        """Islands meeting both cones, per disjoint cube pair."""
        pairs = _disjoint_cube_pairs(lattice.d, self.generation)
        out = {}
        for F, G in pairs:
            inF = set(cone_sites(F, lattice))
            inG = set(cone_sites(G, lattice))
            count = sum(1 for isl in self.islands
                        if (set(isl) & inF) and (set(isl) & inG))
            out[(F.corner, G.corner)] = count
        return out

    def json_summary(self):
        return {
            'centers': self.centers,
            'islands': self.islands,
            'radii': self.radii,
            'eps': self.eps,
            'eps_targets': self.eps_targets,
            'couplings': self.couplings,
            'deformation': self.deformation,
            'overhead': self.overhead,
            }


def _column_coupling(E, lattice, fiber, site, keep_mask):
    """Norm of the column block at one site, rows cut to ~keep_mask."""
    rows = lattice.expand_mask(~keep_mask, fiber)
    cols = np.zeros(lattice.nsites, dtype=bool)
    cols[site] = True
    sub = E[np.ix_(rows, lattice.expand_mask(cols, fiber))]
    if sub.size == 0:
        return 0.0
    if fiber == 1:
        return float(np.linalg.norm(sub[:, 0]))
    return float(np.linalg.norm(sub, 2))


def localized_centers(A, eps, lattice=None, fiber=None, n_islands=None,
                      generation=1, partner=None):
    """Extract weakly coupled centers in disjoint annuli and decouple.

    Centers are chosen cycling through the direction cones of the
    generation-``generation`` dyadic cubes, so the selection meets every
    direction repeatedly.  For the k-th center the annulus radius is
    grown until the out-of-annulus coupling of its column drops below
    eps / 2^k; the scan then moves outward.  The decoupling stage zeros
    the couplings exactly, which pins the support of the column at each
    center inside its own annulus.

    ``partner`` (optional dict site -> site) restricts centers to keys
    of the map and drags the partner site into the same annulus and
    island; the odd real class uses this to keep dimer pairs together.

    Returns (B, IslandFamily).  Raises InsufficientVolume when fewer
    than ``n_islands`` (or none at all) fit inside the truncation.
    """
    lattice, fiber = _geometry(A, lattice, fiber)
    E = entries_of(A)
    profile = locality_profile(E, [lattice.R / 4.0, lattice.R / 2.0,
                                   3.0 * lattice.R / 4.0],
                               generation=generation,
                               lattice=lattice, fiber=fiber)
    if not profile.certified():
        raise PreconditionBound(
            'operator is not spherically-local at scale: cross-cone '
            'values {} at radii {}'.format(
                np.round(profile.values, 6).tolist(), profile.radii))
    cubes = dyadic_cubes(lattice.d, generation)
    per_cone = []
    for cube in cubes:
        members = cone_sites(cube, lattice)
        members.sort(key=lambda i: (lattice.norms[i], tuple(
            lattice.sites[i])))
        per_cone.append(members)
    shell_norms = np.unique(lattice.norms)

    centers, radii, couplings, targets = [], [], [], []
    r_prev = 0.0
    k = 1
    while n_islands is None or len(centers) < n_islands:
        cube_members = per_cone[(k - 1) % len(cubes)]
        target = eps / 2.0 ** k
        found = None
        for x in cube_members:
            nx = lattice.norms[x]
            if nx <= r_prev + 1e-9:
                continue
            lo = nx
            if partner is not None:
                y = partner.get(x)
                if y is None or lattice.norms[y] <= r_prev + 1e-9:
                    continue
                lo = max(lo, lattice.norms[y])
            for r in shell_norms[shell_norms >= lo - 1e-9]:
                annulus = lattice.ball_mask(r) & ~lattice.ball_mask(r_prev)
                c = _column_coupling(E, lattice, fiber, x, annulus)
                if c <= target:
                    found = (x, float(r), c)
                    break
            if found:
                break
        if not found:
            break
        x, r, c = found
        centers.append(x)
        radii.append(r)
        couplings.append(c)
        targets.append(target)
        r_prev = r
        k += 1
    if not centers or (n_islands is not None and len(centers) < n_islands):
        raise InsufficientVolume(
            'only {} island(s) fit inside R={} for eps={} (requested '
            '{})'.format(len(centers), lattice.R, eps,
                         n_islands if n_islands is not None else '>=1'))

    pair_mats = []
    r_prev = 0.0
    for x, r in zip(centers, radii):
        annulus = lattice.ball_mask(r) & ~lattice.ball_mask(r_prev)
        Pk = np.diag(lattice.expand_mask(~annulus, fiber).astype(float))
        Qk = np.diag(lattice.expand_mask(
            np.arange(lattice.nsites) == x, fiber).astype(float))
        pair_mats.append((Pk, Qk))
        r_prev = r
    eps_dec = max(c * 2.0 ** (2 * k - 1)
                  for k, c in enumerate(couplings, start=1))
    result = decouple(E, pair_mats, eps_dec * (1 + 1e-9) + 1e-300)
    B = result.B

    islands = []
    for x in centers:
        col = B[:, lattice.expand_mask(
            np.arange(lattice.nsites) == x, fiber)]
        site_rows = np.abs(col).reshape(
            lattice.nsites, fiber, -1).max(axis=(1, 2))
        isl = set(np.nonzero(site_rows > 1e-12)[0].tolist())
        isl.add(x)
        if partner is not None:
            isl.add(partner[x])
        islands.append(isl)
    family = IslandFamily(centers, islands, radii, eps, targets,
                          couplings, deformation=result.achieved,
                          generation=generation)
    wrapped = wrap_like(A, B) if isinstance(A, OperatorMatrix) \
        else B
    return wrapped, family


def _greedy_match(domain, targets, lattice):
    """Pair each domain site with the nearest-direction unused target.

    Ties break toward the smaller norm difference, then the smaller
    target index, so the matching is deterministic.  Stops when targets
    run out; returns the pairs in domain order.
    """
    free = list(targets)
    pairs = []
    for x in domain:
        if not free:
            break
        ux = lattice.directions[x]
        nx = lattice.norms[x]
        best = min(free, key=lambda y: (
            1.0 - float(ux @ lattice.directions[y]),
            abs(lattice.norms[y] - nx), y))
        free.remove(best)
        pairs.append((x, best))
    return pairs


def proper_isometry(F, lattice, require_full=False):
    """Real partial isometry carrying the site enumeration onto F.

    ``F`` is a ProperSet (or plain site-index collection).  Each lattice
    site, visited in enumeration order, grabs the unused F-site nearest
    in direction (then in norm).  The result V has VV* exactly the
    indicator of F and V*V exactly the indicator of the matched domain;
    on an infinite lattice the matched domain would be everything, here
    the surplus |lattice| - |F| sites stay unmatched, a boundary
    effect.  With ``require_full`` the surplus raises MatchingFailed.

    The returned operator carries ``matched`` (list of (domain, target)
    site pairs), ``unmatched_sites``, and ``cross_cone_counts`` (matched
    pairs whose endpoints lie in disjoint direction cones -- the finite
    tail that would be finite-rank in infinite volume).
    """
    sites = sorted(F.site_indices) if isinstance(F, ProperSet) \
        else sorted(int(i) for i in F)
    domain = list(range(lattice.nsites))
    pairs = _greedy_match(domain, sites, lattice)
    matched_domain = {x for x, _ in pairs}
    unmatched = [x for x in domain if x not in matched_domain]
    if require_full and unmatched:
        raise MatchingFailed('{} domain sites have no target left: '
                             '{}'.format(len(unmatched), unmatched[:8]))
    V = np.zeros((lattice.nsites, lattice.nsites))
    for x, y in pairs:
        V[y, x] = 1.0
    out = OperatorMatrix(V, lattice, fiber=1)
    out.matched = pairs
    out.unmatched_sites = unmatched
    counts = {}
    for Fc, Gc in _disjoint_cube_pairs(lattice.d, 1):
        inF = set(cone_sites(Fc, lattice))
        inG = set(cone_sites(Gc, lattice))
        n = sum(1 for x, y in pairs
                if (x in inF and y in inG) or (x in inG and y in inF))
        counts[(Fc.corner, Gc.corner)] = n
    out.cross_cone_counts = counts
    return out


def _proper_record(site_indices, lattice, generation=1):
    """ProperSet record with honest per-cone counts, no m_min gate."""
    chosen = set(int(i) for i in site_indices)
    counts, co = {}, {}
    for cube in dyadic_cubes(lattice.d, generation):
        members = cone_sites(cube, lattice)
        inside = sum(1 for i in members if i in chosen)
        counts[cube.corner] = inside
        co[cube.corner] = len(members) - inside
    return ProperSet(chosen, generation, counts, co)


def _unitary_power_factory(W):
    """t -> W^t through the spectral angles of the unitary W."""
    T, Z = scipy.linalg.schur(np.asarray(W, dtype=complex),
                              output='complex')
    angles = np.angle(np.diag(T))

    def power(t):
        return (Z * np.exp(1j * t * angles)) @ Z.conj().T
    return power


def _island_frames(lattice, fiber, islands):
    """Expanded index arrays for each island's span."""
    frames = []
    for isl in islands:
        mask = np.zeros(lattice.nsites, dtype=bool)
        mask[list(isl)] = True
        frames.append(np.nonzero(lattice.expand_mask(mask, fiber))[0])
    return frames


def pinning(U, eps, lattice=None, fiber=None, grid=None, n_islands=None):
    """Deform a local unitary until it is the identity on island centers.

    Stages: localized_centers perturbs U to an invertible G whose
    columns at the chosen centers live on disjoint islands; a per-island
    invertible V_k (unitary completion over the island span, scaled)
    maps G delta_x to delta_x; the triangular splitting

        VG = (P + P_perp VG P_perp)(1 + P VG P_perp)

    contracts the nilpotent leg by a straight line (explicit inverse
    1 - t P VG P_perp), and a polar retraction lands on a unitary W
    that is exactly the identity on the center sites.  The emitted path
    runs U -> G -> VG -> split -> W through invertibles; the report
    tracks the minimum singular value and SingularPath is raised if it
    ever falls below the invertibility tolerance.

    Returns (W, P, PathReport) where P is the ProperSet of sites AWAY
    from the centers: W = PWP + P_perp with the perp block exactly the
    identity on the centers.
    """
    lattice, fiber = _geometry(U, lattice, fiber)
    if fiber != 1:
        raise ValueError('pinning acts on the scalar fiber')
    E = entries_of(U)
    dev = np.abs(E @ E.conj().T - np.eye(E.shape[0])).max()
    if dev > 1e-8:
        raise ValueError('pinning expects a unitary; defect {:.2e}'
                         .format(dev))
    if n_islands is None:
        n_islands = 2 * len(dyadic_cubes(lattice.d, 1))
    G, family = localized_centers(E, eps, lattice=lattice, fiber=fiber,
                                  n_islands=n_islands)
    sv_min = float(np.linalg.svd(G, compute_uv=False).min())
    if sv_min < TAU_INV:
        raise SingularPath('decoupled operator is singular (min sv '
                           '{:.2e}); reduce eps'.format(sv_min))

    frames = _island_frames(lattice, fiber, family.islands)
    n = E.shape[0]
    center_rows = lattice.expand_mask(
        np.isin(np.arange(lattice.nsites), family.centers), fiber)

    # per-island factors: V_k = (perm to center) Q* / ||g||, reached
    # from the identity by a unitary power times a scale ramp
    island_powers = []
    for x, frame in zip(family.centers, frames):
        g = G[frame, x]
        s = float(np.linalg.norm(g))
        local_x = int(np.nonzero(frame == x)[0][0])
        m = frame.size
        basis = np.eye(m, dtype=complex)
        basis[:, 0] = g / s
        Q, _ = np.linalg.qr(basis)
        phase = Q[:, 0].conj() @ (g / s)
        Q[:, 0] = Q[:, 0] * phase
        W0 = Q.conj().T         # unitary, W0 g = s e_0
        perm = np.eye(m, dtype=complex)
        if local_x != 0:
            perm[[0, local_x]] = perm[[local_x, 0]]
        Wk = perm @ W0
        island_powers.append((frame, _unitary_power_factory(Wk), s))

    def V_of(t):
        V = np.eye(n, dtype=complex)
        for frame, power, s in island_powers:
            V[np.ix_(frame, frame)] = power(t) * s ** (-t)
        return V

    Vfull = V_of(1.0)
    VG = Vfull @ G
    P_corner = VG.copy()
    P_corner[~center_rows, :] = 0.0
    P_corner[:, center_rows] = 0.0       # P VG P_perp block
    N = VG - P_corner                    # P + P_perp VG P_perp
    # polar retraction of the perp block: N = W |N|
    H = N.conj().T @ N
    w, Z = np.linalg.eigh(H)
    w = np.maximum(w, 1e-300)

    def root(p):
        return (Z * w ** p) @ Z.conj().T

    Wend = N @ root(-0.5)

    def fn(t):
        if t <= 0.25:
            s = 4.0 * t
            return (1.0 - s) * E + s * G
        if t <= 0.5:
            s = 4.0 * (t - 0.25)
            return V_of(s) @ G
        if t <= 0.75:
            s = 4.0 * (t - 0.5)
            return N + (1.0 - s) * P_corner
        s = 4.0 * (t - 0.75)
        return Wend @ root(0.5 * (1.0 - s))

    path = Path(fn, _unit_grid(grid), 'invertible', lattice, fiber)
    report = certify_path(path)
    if report.min_gap < TAU_INV:
        i = int(np.argmin(report.gaps))
        raise SingularPath('min singular value {:.2e} at t={:.4f}'
                           .format(report.min_gap, report.grid[i]))
    eye = np.eye(n)
    report.pinned_defect = float(max(
        np.abs((Wend - eye)[center_rows][:, center_rows]).max(),
        np.abs(Wend[center_rows][:, ~center_rows]).max(),
        np.abs(Wend[~center_rows][:, center_rows]).max()))
    away = [i for i in range(lattice.nsites) if i not in family.centers]
    P_set = _proper_record(away, lattice)
    W = OperatorMatrix(Wend, lattice, fiber)
    W.islands = family
    return W, P_set, report


def compress_matrix_homotopy(path, P, lattice, fiber=1):
    """Compress a matrix-algebra unitary path back to the base space.

    ``path`` evaluates to unitaries on the (n+1)-fold amplification of
    the base space; ``P`` is the ProperSet whose sites carry the first
    summand.  The complement of P is split into n+1 spherically spread
    parts (SplitFailed propagates), each equipped with a greedy real
    partial isometry; the row operator V = [P + V_0, V_1, ..., V_n]
    then conjugates the path down to the base space.

    At finite volume the paper-exact identity V*V = 1_{n+1} cannot
    hold (the parts are smaller than the whole); instead VV* = 1 holds
    exactly, V*V is an exact 0/1 projection (identity on the matched
    domain), and the unmatched fraction is reported on the returned
    PathReport as ``assembly``.
    """
    dim = lattice.nsites * fiber
    sample = path.fn(float(path.grid[0]))
    folds = sample.shape[0] // dim
    if sample.shape[0] != folds * dim or folds < 2:
        raise ValueError('path dimension {} is not a multiple >= 2 of '
                         'the base dimension {}'.format(
                             sample.shape[0], dim))
    n = folds - 1
    p_sites = set(P.site_indices) if isinstance(P, ProperSet) \
        else set(int(i) for i in P)
    complement = [i for i in range(lattice.nsites) if i not in p_sites]
    parts = [sorted(complement)]
    while len(parts) < n + 1:
        parts.sort(key=len, reverse=True)
        big = parts.pop(0)
        f1, f2 = split_proper(big, lattice)
        parts += [f1, f2]
    parts.sort(key=lambda p: (len(p), p))
    q0, rest = parts[0], parts[1:]

    if fiber != 1:
        raise ValueError('compression is defined on the scalar fiber')
    blocks = []
    matchings = []
    pairs0 = _greedy_match(sorted(complement), q0, lattice)
    V0 = np.zeros((dim, dim))
    for x, y in pairs0:
        V0[y, x] = 1.0
    Lam_p = np.zeros((dim, dim))
    for i in p_sites:
        Lam_p[i, i] = 1.0
    blocks.append(Lam_p + V0)
    matchings.append(sorted((i, i) for i in p_sites) + pairs0)
    for part in rest:
        pairs_k = _greedy_match(list(range(lattice.nsites)), part,
                                lattice)
        Vk = np.zeros((dim, dim))
        for x, y in pairs_k:
            Vk[y, x] = 1.0
        blocks.append(Vk)
        matchings.append(pairs_k)
    V = np.hstack(blocks)

    gram = V @ V.T
    dom = V.T @ V
    vv_defect = float(np.abs(gram - np.eye(dim)).max())
    proj_defect = float(max(np.abs(dom @ dom - dom).max(),
                            np.abs(dom - dom.T).max()))
    if vv_defect > 1e-10:
        raise SplitFailed('assembled row operator is not co-isometric: '
                          'defect {:.2e}'.format(vv_defect))
    unmatched = 1.0 - float(np.trace(dom)) / dom.shape[0]

    def fn(t):
        return V @ path.fn(float(t)) @ V.T

    out = Path(fn, path.grid.copy(), 'unitary', lattice, fiber)
    unitarity = lambda M: float(
        np.abs(M @ M.conj().T - np.eye(M.shape[0])).max())
    report = certify_path(out, constraints={'unitarity': unitarity})
    report.assembly = {
        'co_isometry_defect': vv_defect,
        'domain_projection_defect': proj_defect,
        'unmatched_fraction': unmatched,
        }
    report.block_matchings = matchings
    return out, report


def dimer_operator(partition, lattice, fiber=1):
    """The canonical antisymmetric pairing of a dimer partition.

    E maps delta_x -> delta_y and delta_y -> -delta_x on each pair and
    is the identity on the partition's leftover sites (flagged on the
    result as ``leftovers``): the leftover block is the finite-volume
    remainder where E fails the odd real relation E^2 = -1.
    """
    if fiber != 1:
        raise ValueError('the dimer operator acts on the scalar fiber')
    E = np.eye(lattice.nsites)
    for x, y in partition.pairs:
        E[x, x] = E[y, y] = 0.0
        E[y, x] = 1.0
        E[x, y] = -1.0
    out = OperatorMatrix(E, lattice, fiber=1)
    out.leftovers = list(partition.leftovers)
    return out


def _retract_odd_real(E, tau_branch=TAU_BRANCH):
    """Psi(E) = E (-conj(E) E)^(-1/2) through the principal root."""
    B = -np.conj(E) @ E
    vals = np.linalg.eigvals(B)
    dist = np.where(vals.real <= 0, np.abs(vals.imag), np.abs(vals))
    if dist.min() <= tau_branch:
        bad = vals[int(np.argmin(dist))]
        raise BranchCutHit('spectrum of -conj(A)A touches the branch '
                           'cut at {:.3e}{:+.3e}j'.format(bad.real,
                                                          bad.imag))
    S = scipy.linalg.sqrtm(B)
    return np.linalg.solve(S.T, E.T).T


def diii_symmetrize(A, lattice=None, fiber=None, tau_branch=TAU_BRANCH):
    """Retract an invertible onto the odd real slice A^{-1} = -conj(A).

    Computes Psi(A) = A (-conj(A) A)^(-1/2) through the principal
    square root; BranchCutHit is raised when the spectrum of
    -conj(A) A approaches the cut (-inf, 0].  Inputs that already
    satisfy the relation are returned unchanged (exact fixed point).
    """
    E = entries_of(A)
    eye = np.eye(E.shape[0])
    defect = np.abs(-np.conj(E) @ E - eye).max()
    if defect <= 1e-12:
        return A
    Psi = _retract_odd_real(E, tau_branch)
    res = np.abs(-np.conj(Psi) @ Psi - eye).max()
    if res > 1e-9:
        raise NotConverged('symmetrization residual {:.2e} above 1e-9'
                           .format(res))
    return wrap_like(A, Psi) if isinstance(A, OperatorMatrix) else Psi


def diii_rank_one_repair(G, centers, islands, lattice=None, fiber=None,
                         norm_bound=None):
    """Restore the odd real relation at each center by rank-one terms.

    For every center x the defect vector r_x = (G conj(G) + 1) delta_x
    is cancelled by K_x = -(1/||eta_x||^2) r_x (eta_x)^* with
    eta_x the off-site part of conj(G) delta_x.  The non-collinearity
    bound ||eta_x|| >= 1/(2 ||A||) guards the construction
    (CollinearityFailure names the violating center).  Because the
    islands are disjoint the eta's are pairwise orthogonal and the
    total perturbation norm stays controlled.

    Returns T = G + sum_x K_x with -T conj(T) delta_x = delta_x at
    every center, verified to 1e-10.
    """
    lattice, fiber = _geometry(G, lattice, fiber)
    if fiber != 1:
        raise ValueError('the rank-one repair acts on the scalar fiber')
    E = entries_of(G)
    nrm = float(norm_bound) if norm_bound is not None \
        else float(np.linalg.norm(E, 2))
    Gc = np.conj(E)
    defect = E @ Gc + np.eye(E.shape[0])
    K = np.zeros_like(E)
    eta_norms = []
    for x, isl in zip(centers, islands):
        eta = Gc[:, x].copy()
        eta[x] = 0.0
        ne = float(np.linalg.norm(eta))
        if ne < 1.0 / (2.0 * nrm):
            raise CollinearityFailure(
                'center {} has ||eta|| = {:.3e} below the bound '
                '{:.3e} = 1/(2||A||)'.format(int(x), ne,
                                             1.0 / (2.0 * nrm)))
        outside = np.ones(E.shape[0], dtype=bool)
        outside[list(isl)] = False
        leak = float(np.abs(eta[outside]).max()) if outside.any() else 0.0
        if leak > 1e-12:
            raise ValueError('column at center {} leaks {:.2e} outside '
                             'its island; repair terms would overlap'
                             .format(int(x), leak))
        eta_norms.append(ne)
        r = defect[:, x]
        K -= np.outer(r, np.conj(eta)) / ne ** 2
    T = E + K
    Tc = np.conj(T)
    repair = []
    eye_cols = np.eye(E.shape[0])
    for x in centers:
        repair.append(float(np.abs(-(T @ Tc[:, x]) - eye_cols[:, x])
                            .max()))
    worst = max(repair) if repair else 0.0
    if worst > 1e-10:
        raise NotConverged('local relation defect {:.2e} above 1e-10 '
                           'after repair'.format(worst))
    out = wrap_like(G, T) if isinstance(G, OperatorMatrix) \
        else T
    if isinstance(out, OperatorMatrix):
        out.repair_defects = repair
        out.eta_norms = eta_norms
    return out


def diii_pinning(X, eps, lattice=None, fiber=None, grid=None,
                 n_islands=None):
    """Pin an odd real invertible to the dimer operator on island pairs.

    Pipeline: localized centers restricted to canonical dimer pairs
    (partner sites ride along in the same annulus), rank-one repair of
    the local relation, a per-island pinning congruence V T conj(V)^-1
    sending the center columns to the dimer action, symmetrization, and
    the triangular elimination of the off-diagonal block at parameter
    one half.  The emitted path stays inside the odd real slice: the
    membership residual is tracked per grid point.

    Returns (S, P, PathReport) with S = PSP + P_perp E P_perp exactly
    block diagonal, where P is the ProperSet of sites away from the
    chosen dimers and E is the canonical dimer operator there.
    """
    lattice, fiber = _geometry(X, lattice, fiber)
    if fiber != 1:
        raise ValueError('the odd real pinning acts on the scalar fiber')
    M = entries_of(X)
    eye = np.eye(M.shape[0])
    membership = float(np.abs(-np.conj(M) @ M - eye).max())
    if membership > TAU_SYM:
        raise ValueError('input is not in the odd real slice: residual '
                         '{:.2e}'.format(membership))
    partition = dimer_partition(lattice)
    partner = {x: y for x, y in partition.pairs}
    if n_islands is None:
        n_islands = len(dyadic_cubes(lattice.d, 1))
    G, family = localized_centers(M, eps, lattice=lattice, fiber=fiber,
                                  n_islands=n_islands, partner=partner)
    Gm = entries_of(G)
    T = diii_rank_one_repair(Gm, family.centers, family.islands,
                             lattice=lattice, fiber=fiber,
                             norm_bound=float(np.linalg.norm(M, 2)))

    frames = _island_frames(lattice, fiber, family.islands)
    n = M.shape[0]
    Vfull = np.eye(n, dtype=complex)
    island_factors = []
    for x, frame in zip(family.centers, frames):
        y = partner[x]
        lx = int(np.nonzero(frame == x)[0][0])
        ly = int(np.nonzero(frame == y)[0][0])
        m = frame.size
        u = T[frame, x]
        ex = np.eye(m, dtype=complex)[:, lx]
        ey = np.eye(m, dtype=complex)[:, ly]
        basis = _frame_with(ex, u)
        images = _frame_with(ex, ey)
        Vk = images @ np.linalg.inv(basis)
        Vfull[np.ix_(frame, frame)] = Vk
        # polar factors: V_k^s = U^s H^s stays invertible for all s,
        # unlike the straight line from the identity to V_k
        w, Z = np.linalg.eigh(Vk.conj().T @ Vk)
        w = np.maximum(w, 1e-300)
        Hk = (Z * np.sqrt(w)) @ Z.conj().T
        Uk = Vk @ np.linalg.inv(Hk)
        upow = _unitary_power_factory(Uk)

        def hpow(s, Z=Z, w=w):
            return (Z * w ** (0.5 * s)) @ Z.conj().T
        island_factors.append((frame, upow, hpow))

    def V_of(s):
        V = np.eye(n, dtype=complex)
        for frame, upow, hpow in island_factors:
            V[np.ix_(frame, frame)] = upow(s) @ hpow(s)
        return V

    PsiT = entries_of(diii_symmetrize(T, lattice=lattice, fiber=fiber))

    def congruate(V, A):
        return V @ A @ np.linalg.inv(np.conj(V))

    S = congruate(Vfull, PsiT)
    dimer_sites = sorted(
        set(family.centers) | {partner[x] for x in family.centers})
    p_rows = lattice.expand_mask(
        np.isin(np.arange(lattice.nsites), dimer_sites), fiber)
    Xblk = S[np.ix_(p_rows, ~p_rows)]
    Bblk = S[np.ix_(~p_rows, ~p_rows)]
    corner = np.zeros_like(S)
    corner[np.ix_(p_rows, ~p_rows)] = Xblk @ np.conj(Bblk)

    def eliminate(t):
        W = eye + t * corner
        Winvbar = eye - t * np.conj(corner)    # nilpotent corner
        return W @ S @ Winvbar

    S_half = eliminate(0.5)
    off = float(np.abs(S_half[np.ix_(p_rows, ~p_rows)]).max())
    Ecan = entries_of(dimer_operator(partition, lattice))
    S_out = np.zeros_like(S_half)
    S_out[np.ix_(~p_rows, ~p_rows)] = S_half[np.ix_(~p_rows, ~p_rows)]
    S_out[np.ix_(p_rows, p_rows)] = Ecan[np.ix_(p_rows, p_rows)]

    def fn(t):
        if t <= 0.25:
            s = 4.0 * t
            return _retract_odd_real((1.0 - s) * M + s * T)
        if t <= 0.5:
            s = 4.0 * (t - 0.25)
            return congruate(V_of(s), PsiT)
        if t <= 0.75:
            s = 4.0 * (t - 0.5)
            return eliminate(0.5 * s)
        s = 4.0 * (t - 0.75)
        return (1.0 - s) * S_half + s * S_out

    path = Path(fn, _unit_grid(grid), 'invertible', lattice, fiber)
    member = lambda A: float(
        np.abs(-np.conj(A) @ A - np.eye(A.shape[0])).max())
    report = certify_path(path, constraints={'membership': member})
    if report.min_gap < TAU_INV:
        i = int(np.argmin(report.gaps))
        raise SingularPath('min singular value {:.2e} at t={:.4f}'
                           .format(report.min_gap, report.grid[i]))
    report.off_diagonal = off
    report.snap_defect = float(np.abs(S_half - S_out).max())
    away = [i for i in range(lattice.nsites) if i not in dimer_sites]
    P_set = _proper_record(away, lattice)
    out = OperatorMatrix(S_out, lattice, fiber)
    out.islands = family
    out.dimer_sites = dimer_sites
    return out, P_set, report


def _frame_with(first, second):
    """Invertible matrix whose first two columns are the given vectors,
    completed deterministically by QR."""
    m = first.size
    seed = np.eye(m, dtype=complex)
    cols = [first, second]
    span = np.column_stack(cols)
    Q, _ = np.linalg.qr(span)
    for j in range(m):
        v = seed[:, j] - Q @ (Q.conj().T @ seed[:, j])
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v = v / nv
            cols.append(v)
            Q = np.column_stack([Q, v])
        if len(cols) == m:
            break
    return np.column_stack(cols)


def dimer_isometry(P, Q, lattice, dimers=None):
    """Real partial isometry between two dimer-closed site sets.

    ``P`` and ``Q`` are sequences of (x, y) site-index pairs; both must
    be pairs of the canonical partition when ``dimers`` is supplied
    (NotDimerClosed otherwise).  Pairs are matched greedily by the
    direction of their first member, and V sends x -> x', y -> y'
    orientation-preservingly, so V commutes with the dimer operator
    exactly.  Unequal pair counts raise MatchingFailed.
    """
    P = [(int(x), int(y)) for x, y in P]
    Q = [(int(x), int(y)) for x, y in Q]
    if dimers is not None:
        legal = set(dimers.pairs)
        for pair in P + Q:
            if pair not in legal:
                raise NotDimerClosed('{} is not a pair of the canonical '
                                     'partition'.format(pair))
    if len(P) != len(Q):
        raise MatchingFailed('pair counts differ: {} vs {}'
                             .format(len(P), len(Q)))
    match = _greedy_match([x for x, _ in P], [x for x, _ in Q], lattice)
    lookup_p = {x: y for x, y in P}
    lookup_q = {x: y for x, y in Q}
    V = np.zeros((lattice.nsites, lattice.nsites))
    for xp, xq in match:
        V[xq, xp] = 1.0
        V[lookup_q[xq], lookup_p[xp]] = 1.0
    return OperatorMatrix(V, lattice, fiber=1)


def e_to_minus_e_path(partition, lattice, grid=None):
    """Per-dimer rotations carrying the dimer operator to its negative.

    On each pair the 2x2 block travels R_t J R_t with J the pair's
    antisymmetric action; leftover sites stay at the identity (flagged
    on the path as ``leftovers``), so the endpoint is -E exactly on the
    paired block and +1 on the remainder.

    The intermediate blocks are orthogonal but not antisymmetric, so
    pointwise they leave the odd real slice itself; they do stay inside
    the doubled space of real, odd, self-adjoint unitaries in which the
    flip is actually used, and that is the membership the report
    certifies: realness and orthogonality per grid point (both zero up
    to rounding), with the antisymmetry defect recorded separately at
    the endpoints only.
    """
    E0 = entries_of(dimer_operator(partition, lattice))
    n = E0.shape[0]

    def fn(theta):
        M = np.eye(n)
        s, c = np.sin(2.0 * theta), np.cos(2.0 * theta)
        for x, y in partition.pairs:
            M[x, x] = M[y, y] = -s
            M[x, y] = -c
            M[y, x] = c
        return M

    path = Path(fn, _theta_grid(grid), 'unitary', lattice, 1)
    path.leftovers = list(partition.leftovers)
    constraints = {
        'realness': lambda M: float(np.abs(M.imag).max()),
        'orthogonality': lambda M: float(
            np.abs(M @ M.T - np.eye(n)).max()),
        }
    report = certify_path(path, constraints=constraints)
    paired = sorted({i for pair in partition.pairs for i in pair})
    sub = np.ix_(paired, paired)
    endpoint = fn(np.pi / 2.0)
    report.endpoint_defect = float(
        np.abs(endpoint[sub] + E0[sub]).max()) if paired else 0.0
    # the paired block is antisymmetric at the endpoints only
    report.antisymmetry_endpoints = [
        float(np.abs(fn(th)[sub] + fn(th)[sub].T).max()) if paired
        else 0.0
        for th in (0.0, np.pi / 2.0)]
    return path, report
