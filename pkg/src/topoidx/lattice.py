"""Truncated lattice geometry.

Everything downstream works on a finite piece of the integer lattice: the
closed Euclidean ball of radius ``R`` (sites with ``|x| = R`` included),
with ``N`` internal degrees of freedom per site.  This module owns the
site enumeration, the unit-direction map, the dyadic-cube discretization
of the unit sphere, direction cones, spherically-spread ("proper") site
sets, and nearest-neighbor dimer partitions.

Conventions fixed here and relied on everywhere else:

* sites are enumerated in lexicographic order of their coordinates;
* the row index of a site/fiber pair is ``site_index * fiber + f``;
* the unit direction of the origin is, by convention, the first
  standard basis vector ``e_1``;
* direction cones never contain the origin.
"""

from __future__ import annotations

import itertools
import json
import math

import numpy as np

from .errors import InsufficientVolume, SplitFailed

__all__ = [
    'Lattice', 'DyadicCube', 'ProperSet', 'DimerPartition',
    'build_lattice', 'lattice_from_json', 'unit_direction', 'dyadic_cubes',
    'cone_sites', 'proper_set', 'split_proper', 'dimer_partition',
    ]


class Lattice:
    """A ball-truncated piece of Z^d with an internal fiber.

    Parameters
    ----------
    d : int
        Space dimension.
    R : float
        Truncation radius.  Sites with Euclidean norm exactly R are kept.
    N : int
        Internal fiber dimension per site.
    sites : ndarray, optional
        Explicit (n, d) integer array of sites.  Used by re-dimerization,
        where the coarse site set is the image of a ball and not itself
        a ball.  When given, ``R`` is only metadata.
    """

    def __init__(self, d, R, N, sites=None):
        if d < 1:
            raise ValueError('dimension must be >= 1')
        if N < 1:
            raise ValueError('fiber dimension must be >= 1')
        self.d = int(d)
        self.R = float(R)
        self.N = int(N)
        if sites is None:
            sites = _ball_sites(self.d, self.R)
        self.sites = np.asarray(sites, dtype=np.int64)
        if self.sites.ndim != 2 or self.sites.shape[1] != self.d:
            raise ValueError('sites must be an (n, d) integer array')
        self.nsites = self.sites.shape[0]
        self.index = {tuple(int(c) for c in x): i
                      for i, x in enumerate(self.sites)}
        self.norms = np.sqrt((self.sites.astype(float) ** 2).sum(axis=1))
        self.directions = np.empty((self.nsites, self.d), dtype=float)
        for i in range(self.nsites):
            self.directions[i] = unit_direction(self.sites[i])

    @property
    def dim(self):
        """Total Hilbert space dimension, sites times fiber."""
        return self.nsites * self.N

    def site_index(self, x):
        return self.index[tuple(int(c) for c in x)]

    def __contains__(self, x):
        return tuple(int(c) for c in x) in self.index

    def shell_mask(self, rmin):
        """Boolean site mask for the outer shell |x| >= rmin."""
        return self.norms >= rmin - 1e-12

    def ball_mask(self, r):
        """Boolean site mask for the inner ball |x| <= r."""
        return self.norms <= r + 1e-12

    def expand_mask(self, site_mask, fiber=None):
        """Repeat a per-site mask across the fiber indices."""
        if fiber is None:
            fiber = self.N
        return np.repeat(np.asarray(site_mask, dtype=bool), fiber)

    def site_projection(self, site_mask, fiber=None):
        """Dense diagonal projection onto the given sites."""
        m = self.expand_mask(site_mask, fiber)
        return np.diag(m.astype(complex))

    def to_json(self, sets=None):
        payload = {
            'd': self.d,
            'R': self.R,
            'N': self.N,
            'sites': [list(map(int, x)) for x in self.sites],
            }
        if sets:
            payload['sets'] = {name: sorted(int(i) for i in idx)
                               for name, idx in sets.items()}
        return json.dumps(payload)

    def __repr__(self):
        return ('Lattice(d={}, R={}, N={}, nsites={})'
                .format(self.d, self.R, self.N, self.nsites))


def _ball_sites(d, R):
    # Lexicographic enumeration of the closed ball; ties |x| = R kept.
    rng = range(-int(math.floor(R)), int(math.floor(R)) + 1)
    out = [x for x in itertools.product(rng, repeat=d)
           if sum(c * c for c in x) <= R * R + 1e-9]
    return np.array(out, dtype=np.int64)


def build_lattice(d, R, N=1):
    """Build the ball-truncated lattice with its site enumeration.

    Parameters
    ----------
    d : int
        Space dimension.
    R : float
        Truncation radius (closed ball).
    N : int
        Internal fiber dimension.

    Returns
    -------
    Lattice
    """
    return Lattice(d, R, N)


def lattice_from_json(payload):
    """Rebuild a Lattice from the string or dict made by ``to_json``.

    Returns (lattice, sets) where sets is the optional name -> sorted
    site-index dict stored alongside the geometry, or None.
    """
    if isinstance(payload, str):
        payload = json.loads(payload)
    sites = np.array(payload['sites'], dtype=np.int64)
    lat = Lattice(payload['d'], payload['R'], payload['N'], sites=sites)
    sets = payload.get('sets')
    if sets is not None:
        sets = {name: np.array(idx, dtype=int) for name, idx in sets.items()}
    return lat, sets


def unit_direction(x):
    """Unit vector x/|x|, with the origin sent to e_1 by convention."""
    x = np.asarray(x, dtype=float)
    n = math.sqrt(float((x * x).sum()))
    if n == 0.0:
        e = np.zeros(x.shape, dtype=float)
        e[0] = 1.0
        return e
    return x / n


class DyadicCube:
    """A closed dyadic box intersected with the unit sphere.

    The box is ``prod_i [j_i / 2^k, (j_i + 1) / 2^k]`` for integer
    corner ``j`` and generation ``k``.  Boxes are closed, so neighboring
    cubes overlap on shared faces.  Membership of a unit vector is a
    plain closed-interval test per axis.
    """

    def __init__(self, d, k, corner):
        self.d = int(d)
        self.k = int(k)
        self.corner = tuple(int(c) for c in corner)
        s = 2.0 ** (-self.k)
        self.lo = np.array(self.corner, dtype=float) * s
        self.hi = self.lo + s

    def contains_direction(self, u):
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lo) and np.all(u <= self.hi))

    def meets_sphere(self):
        # Exact integer test: scale by 2^k, compare min/max squared
        # distance of the integer box against (2^k)^2.
        r2 = 4 ** self.k
        lo2 = 0
        hi2 = 0
        for j in self.corner:
            a, b = j, j + 1
            hi2 += max(a * a, b * b)
            if a <= 0 <= b:
                pass  # box straddles this axis, min contribution 0
            else:
                lo2 += min(a * a, b * b)
        return lo2 <= r2 <= hi2

    def refines(self, other):
        """True if this cube's box is contained in ``other``'s box."""
        if self.d != other.d or self.k < other.k:
            return False
        shift = self.k - other.k
        # floor division keeps the test exact for negative corners too
        return all((j >> shift) == jo
                   for j, jo in zip(self.corner, other.corner))

    def disjoint_from(self, other):
        """True if the two closed boxes do not intersect (exact)."""
        if self.k == other.k:
            return any(a + 1 < b or b + 1 < a
                       for a, b in zip(self.corner, other.corner))
        # compare at the finer generation
        fine, coarse = (self, other) if self.k > other.k else (other, self)
        shift = fine.k - coarse.k
        for jf, jc in zip(fine.corner, coarse.corner):
            a0, a1 = jf, jf + 1
            b0, b1 = jc << shift, (jc + 1) << shift
            if a1 < b0 or b1 < a0:
                return True
        return False

    def __eq__(self, other):
        return (isinstance(other, DyadicCube) and self.d == other.d
                and self.k == other.k and self.corner == other.corner)

    def __hash__(self):
        return hash((self.d, self.k, self.corner))

    def __repr__(self):
        return 'DyadicCube(d={}, k={}, corner={})'.format(
            self.d, self.k, self.corner)


def dyadic_cubes(d, k):
    """All generation-k dyadic cubes that meet the unit sphere.

    The boxes tile ``[-1, 1]^d`` with side ``2^-k``; only the ones whose
    closed box intersects ``S^{d-1}`` are returned.  The intersection
    test is exact (integer arithmetic).

    Returns
    -------
    list of DyadicCube, in lexicographic corner order.
    """
    if k < 0:
        raise ValueError('generation must be >= 0')
    rng = range(-(1 << k), 1 << k)
    out = []
    for corner in itertools.product(rng, repeat=d):
        cube = DyadicCube(d, k, corner)
        if cube.meets_sphere():
            out.append(cube)
    return out


def cone_sites(cube, lattice):
    """Site indices whose unit direction lies in the cube.

    The origin is never a member: cones are direction sets and the
    origin has no direction of its own (its conventional direction e_1
    is used elsewhere, but deliberately not here).
    """
    out = []
    for i in range(lattice.nsites):
        if not lattice.sites[i].any():
            continue
        if cube.contains_direction(lattice.directions[i]):
            out.append(i)
    return out


class ProperSet:
    """A spherically-spread site set with its per-cone certificate."""

    def __init__(self, site_indices, generation, counts, complement_counts):
        self.site_indices = sorted(int(i) for i in site_indices)
        self.generation = generation
        self.counts = counts
        self.complement_counts = complement_counts

    def mask(self, lattice):
        m = np.zeros(lattice.nsites, dtype=bool)
        m[self.site_indices] = True
        return m


def proper_set(lattice, strategy='ray-representatives', generation=1,
               m_min=2):
    """Construct a site set that meets every direction cone repeatedly.

    The finite surrogate for "unbounded in every direction" is a
    per-cube certificate: every generation-``generation`` cube must
    contain at least ``m_min`` sites of the set *and* of its complement
    (origin excluded on both sides).

    Parameters
    ----------
    lattice : Lattice
    strategy : str
        'even-1d'            -- sites with even first coordinate;
        'ray-representatives' -- sites in even integer shells
                                 (floor(|x|) even);
        'diagonal-selection' -- checkerboard over (cube ordinal, shell).
    generation : int
        Dyadic generation of the certifying cubes.
    m_min : int
        Minimal per-cube count for the set and its complement.

    Raises
    ------
    InsufficientVolume
        If some cube cannot certify; the message names the cube.
    """
    cubes = dyadic_cubes(lattice.d, generation)
    chosen = set()
    if strategy == 'even-1d':
        for i in range(lattice.nsites):
            if lattice.sites[i][0] % 2 == 0:
                chosen.add(i)
    elif strategy == 'ray-representatives':
        for i in range(lattice.nsites):
            if int(math.floor(lattice.norms[i])) % 2 == 0:
                chosen.add(i)
    elif strategy == 'diagonal-selection':
        first_cube = _first_cube_map(lattice, cubes)
        for i in range(lattice.nsites):
            c = first_cube[i]
            if c < 0:
                continue
            if (int(math.floor(lattice.norms[i])) + c) % 2 == 0:
                chosen.add(i)
    else:
        raise ValueError('unknown strategy: {!r}'.format(strategy))

    counts, co_counts = {}, {}
    for cube in cubes:
        members = cone_sites(cube, lattice)
        inside = sum(1 for i in members if i in chosen)
        outside = len(members) - inside
        counts[cube.corner] = inside
        co_counts[cube.corner] = outside
        if inside < m_min or outside < m_min:
            raise InsufficientVolume(
                'cube {} at generation {} has counts (set={}, complement={})'
                ' below m_min={}; enlarge R'.format(
                    cube.corner, generation, inside, outside, m_min))
    return ProperSet(chosen, generation, counts, co_counts)


def _first_cube_map(lattice, cubes):
    """For each site, the ordinal of the first cube containing its
    direction (-1 for the origin)."""
    out = np.full(lattice.nsites, -1, dtype=int)
    for i in range(lattice.nsites):
        if not lattice.sites[i].any():
            continue
        for c, cube in enumerate(cubes):
            if cube.contains_direction(lattice.directions[i]):
                out[i] = c
                break
    return out


def split_proper(site_indices, lattice, generation=1, m_min=2):
    """Split a proper set into two disjoint proper halves.

    Sites are visited in lattice enumeration order and dealt round-robin
    into the two halves, with a separate toggle per direction cone, so
    that each cone's members alternate between the halves.  The origin,
    which belongs to no cone, is attributed to the cone containing its
    conventional direction e_1.

    Raises
    ------
    SplitFailed
        If some cone holds fewer than two sites of the input set, in
        which case no split can leave both halves proper.
    """
    members = sorted(int(i) for i in site_indices)
    cubes = dyadic_cubes(lattice.d, generation)
    e1 = np.zeros(lattice.d)
    e1[0] = 1.0

    def cone_of(i):
        u = lattice.directions[i] if lattice.sites[i].any() else e1
        for c, cube in enumerate(cubes):
            if cube.contains_direction(u):
                return c
        raise AssertionError('dyadic cubes failed to cover a direction')

    per_cone = {}
    for i in members:
        per_cone.setdefault(cone_of(i), []).append(i)
    bad = {c: len(v) for c, v in per_cone.items() if len(v) < 2}
    if len(per_cone) < len(cubes):
        missing = len(cubes) - len(per_cone)
        raise SplitFailed('input set misses {} cone(s) entirely at '
                          'generation {}'.format(missing, generation))
    if bad:
        raise SplitFailed('cones with a single member cannot be split: '
                          '{}'.format(bad))

    toggle = {}
    f1, f2 = [], []
    for i in members:  # members are already in enumeration order
        c = cone_of(i)
        t = toggle.get(c, 0)
        (f1 if t == 0 else f2).append(i)
        toggle[c] = 1 - t
    want = m_min // 2
    for c, v in per_cone.items():
        n1 = sum(1 for i in v if i in set(f1))
        n2 = len(v) - n1
        if n1 < max(1, want) or n2 < max(1, want):
            raise SplitFailed('cone {} split unevenly ({} vs {})'
                              .format(c, n1, n2))
    return f1, f2


class DimerPartition:
    """Nearest-neighbor pairing of sites, with unpaired leftovers."""

    def __init__(self, pairs, leftovers):
        self.pairs = [(int(a), int(b)) for a, b in pairs]
        self.leftovers = [int(a) for a in leftovers]

    def __len__(self):
        return len(self.pairs)


def dimer_partition(lattice, site_indices=None):
    """Greedy nearest-neighbor dimer pairing along the enumeration.

    Visits sites in lattice enumeration order; each still-unpaired site
    grabs its ``x + e_j`` neighbor for the first axis j that has an
    unpaired neighbor inside the set.  Whatever remains single is a
    leftover (a finite-volume remainder, unavoidable on a symmetric
    ball, whose site count is odd).
    """
    if site_indices is None:
        site_indices = range(lattice.nsites)
    members = sorted(int(i) for i in site_indices)
    member_set = set(members)
    used = set()
    pairs = []
    for i in members:
        if i in used:
            continue
        x = lattice.sites[i]
        for j in range(lattice.d):
            y = x.copy()
            y[j] += 1
            ty = tuple(int(c) for c in y)
            if ty in lattice.index:
                iy = lattice.index[ty]
                if iy in member_set and iy not in used and iy != i:
                    pairs.append((i, iy))
                    used.add(i)
                    used.add(iy)
                    break
    leftovers = [i for i in members if i not in used]
    return DimerPartition(pairs, leftovers)
