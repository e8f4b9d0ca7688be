"""Lattice geometry tests.

The derived expectations here were frozen from independent brute-force
oracles (written first, kept below as the oracle_* helpers) rather than
from the implementation under test.
"""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topoidx.errors import InsufficientVolume, SplitFailed
from topoidx.lattice import (DyadicCube, build_lattice, cone_sites,
                             dimer_partition, dyadic_cubes, proper_set,
                             split_proper, unit_direction)


# ----------------------------------------------------------------- oracles

def oracle_ball_count(d, R):
    """Count ball sites by direct product enumeration."""
    r = int(math.floor(R))
    return sum(1 for x in itertools.product(range(-r, r + 1), repeat=d)
               if sum(c * c for c in x) <= R * R + 1e-9)


def oracle_boxes_meeting_circle(k):
    """Count dyadic boxes of [-1,1]^2 meeting the unit circle, by
    interval arithmetic on floats (independent of the integer test)."""
    n = 0
    step = 2.0 ** (-k)
    for i, j in itertools.product(range(-2 ** k, 2 ** k), repeat=2):
        lo = np.array([i * step, j * step])
        hi = lo + step
        nearest = np.where(lo > 0, lo, np.where(hi < 0, hi, 0.0))
        farthest = np.maximum(np.abs(lo), np.abs(hi))
        if (nearest ** 2).sum() <= 1.0 <= (farthest ** 2).sum():
            n += 1
    return n


# ------------------------------------------------------------ enumeration

def test_ball_counts_match_spec_examples():
    # d=1, R=2: sites -2..2
    lat = build_lattice(1, 2, 1)
    assert lat.nsites == 5
    assert [tuple(x) for x in lat.sites] == [(-2,), (-1,), (0,), (1,), (2,)]
    # d=2, R=1, N=2: cross of 5 sites, dimension 10
    lat = build_lattice(2, 1, 2)
    assert lat.nsites == 5
    assert lat.dim == 10
    # d=3, R=1.2: origin plus 6 unit neighbors and nothing else
    # (radius 1.5 would already include the 12 diagonal sites of norm
    # sqrt(2), for 19 sites total -- checked against the oracle below)
    lat = build_lattice(3, 1.2, 1)
    assert lat.nsites == 7
    assert build_lattice(3, 1.5, 1).nsites == 19


def test_ball_counts_against_oracle():
    for d, R in [(1, 7), (2, 4.5), (2, 5), (3, 2.5)]:
        assert build_lattice(d, R).nsites == oracle_ball_count(d, R)


def test_boundary_ties_included():
    # |(3,4)| = 5 exactly; a radius-5 ball must include it
    lat = build_lattice(2, 5, 1)
    assert (3, 4) in lat
    assert (4, 3) in lat
    assert (5, 0) in lat


def test_enumeration_is_lexicographic_and_invertible():
    lat = build_lattice(2, 2.5, 1)
    rows = [tuple(x) for x in lat.sites]
    assert rows == sorted(rows)
    for i, x in enumerate(rows):
        assert lat.site_index(x) == i


# -------------------------------------------------------------- directions

def test_unit_direction_values():
    assert np.allclose(unit_direction((3, 4)), [0.6, 0.8])
    assert np.allclose(unit_direction((0, 0)), [1.0, 0.0])
    assert np.allclose(unit_direction((0, 0, 0)), [1.0, 0.0, 0.0])
    assert np.allclose(unit_direction((-2, 0)), [-1.0, 0.0])


def test_direction_is_exact_on_axes():
    # axis sites must land exactly on box faces
    u = unit_direction((0, 7))
    assert u[0] == 0.0 and u[1] == 1.0


@given(st.integers(-30, 30), st.integers(-30, 30))
def test_direction_has_unit_norm(a, b):
    if a == 0 and b == 0:
        return
    u = unit_direction((a, b))
    assert abs((u ** 2).sum() - 1.0) < 1e-12


# ------------------------------------------------------------ dyadic cubes

def test_dyadic_cubes_d1():
    cubes = dyadic_cubes(1, 1)
    assert len(cubes) == 2
    corners = sorted(c.corner for c in cubes)
    assert corners == [(-2,), (1,)]


def test_dyadic_cubes_d2_generation1():
    # frozen from oracle_boxes_meeting_circle(1) == 12
    assert oracle_boxes_meeting_circle(1) == 12
    assert len(dyadic_cubes(2, 1)) == 12


@pytest.mark.parametrize('k', [0, 1, 2, 3])
def test_dyadic_cubes_match_oracle_d2(k):
    assert len(dyadic_cubes(2, k)) == oracle_boxes_meeting_circle(k)


def test_dyadic_cubes_cover_all_directions():
    lat = build_lattice(2, 6, 1)
    for k in (1, 2):
        cubes = dyadic_cubes(2, k)
        for i in range(lat.nsites):
            if not lat.sites[i].any():
                continue
            assert any(c.contains_direction(lat.directions[i])
                       for c in cubes)


def test_refinement():
    coarse = dyadic_cubes(2, 1)
    fine = dyadic_cubes(2, 3)
    for f in fine:
        assert any(f.refines(c) for c in coarse)
    # refinement is not symmetric
    assert not coarse[0].refines(fine[0])


def test_closed_boxes_share_faces():
    # direction (0,1) sits on the face between corners (-1,1) and (0,1)
    a = DyadicCube(2, 1, (-1, 1))
    b = DyadicCube(2, 1, (0, 1))
    u = unit_direction((0, 5))
    assert a.contains_direction(u) and b.contains_direction(u)
    assert not a.disjoint_from(b)


def test_disjointness_is_exact():
    a = DyadicCube(2, 1, (1, 0))
    b = DyadicCube(2, 1, (-2, 0))
    assert a.disjoint_from(b)
    c = DyadicCube(2, 2, (3, 0))   # right half of a, finer generation
    assert not c.disjoint_from(a)
    assert c.disjoint_from(b)


# ------------------------------------------------------------------- cones

def test_cone_excludes_origin():
    lat = build_lattice(2, 3, 1)
    origin = lat.site_index((0, 0))
    for cube in dyadic_cubes(2, 1):
        assert origin not in cone_sites(cube, lat)


def test_cone_membership_on_boundary_direction():
    lat = build_lattice(2, 5, 1)
    # (0,5) has direction exactly on the shared face; both right-top
    # cubes containing that face must claim it
    i = lat.site_index((0, 5))
    owning = [c for c in dyadic_cubes(2, 1)
              if i in cone_sites(c, lat)]
    assert len(owning) == 2


# ------------------------------------------------------------- proper sets

def test_even_1d_proper_set():
    lat = build_lattice(1, 20, 1)
    ps = proper_set(lat, 'even-1d', generation=1, m_min=2)
    xs = sorted(int(lat.sites[i][0]) for i in ps.site_indices)
    assert xs == list(range(-20, 21, 2))


def test_shell_strategy_is_proper_in_2d():
    lat = build_lattice(2, 12, 1)
    ps = proper_set(lat, 'ray-representatives', generation=1, m_min=2)
    assert all(v >= 2 for v in ps.counts.values())
    assert all(v >= 2 for v in ps.complement_counts.values())


def test_diagonal_selection_counts_at_g2():
    lat = build_lattice(2, 30, 1)
    ps = proper_set(lat, 'diagonal-selection', generation=2, m_min=3)
    assert all(v >= 3 for v in ps.counts.values())
    assert all(v >= 3 for v in ps.complement_counts.values())


def test_proper_set_fails_on_small_lattice():
    lat = build_lattice(2, 2, 1)
    with pytest.raises(InsufficientVolume) as err:
        proper_set(lat, 'diagonal-selection', generation=2, m_min=3)
    assert 'cube' in str(err.value)


# ------------------------------------------------------------------ splits

def test_split_even_integers_d1():
    # Frozen expectation: round-robin over the two rays sends the
    # multiples of four (and the origin) to one half and the remaining
    # even integers to the other.
    lat = build_lattice(1, 20, 1)
    evens = [i for i in range(lat.nsites) if lat.sites[i][0] % 2 == 0]
    f1, f2 = split_proper(evens, lat, generation=1)
    xs1 = sorted(int(lat.sites[i][0]) for i in f1)
    xs2 = sorted(int(lat.sites[i][0]) for i in f2)
    assert xs1 == [x for x in range(-20, 21, 2) if x % 4 == 0]
    assert xs2 == [x for x in range(-20, 21, 2) if x % 4 == 2]


def test_split_halves_partition_the_input():
    lat = build_lattice(2, 9, 1)
    ps = proper_set(lat, 'ray-representatives', generation=1)
    f1, f2 = split_proper(ps.site_indices, lat, generation=1)
    assert sorted(f1 + f2) == ps.site_indices
    assert not set(f1) & set(f2)


def test_split_fails_on_single_member_cone():
    lat = build_lattice(1, 3, 1)
    # one site per ray: {-2, 2}
    members = [lat.site_index((-2,)), lat.site_index((2,))]
    with pytest.raises(SplitFailed):
        split_proper(members, lat, generation=1)


# ------------------------------------------------------------------ dimers

def test_dimer_partition_d1_example():
    lat = build_lattice(1, 2, 1)
    part = dimer_partition(lat)
    pairs = sorted((tuple(lat.sites[a]), tuple(lat.sites[b]))
                   for a, b in part.pairs)
    assert pairs == [((-2,), (-1,)), ((0,), (1,))]
    assert [tuple(lat.sites[i]) for i in part.leftovers] == [(2,)]


def test_dimer_partition_pairs_are_neighbors():
    lat = build_lattice(2, 4, 1)
    part = dimer_partition(lat)
    for a, b in part.pairs:
        diff = np.abs(lat.sites[a] - lat.sites[b]).sum()
        assert diff == 1
    paired = {i for p in part.pairs for i in p}
    assert len(paired) == 2 * len(part.pairs)
    assert sorted(paired | set(part.leftovers)) == list(range(lat.nsites))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6))
def test_dimer_leftovers_are_odd_on_balls(r):
    # a centered ball has odd site count, so leftovers are odd too
    lat = build_lattice(2, r, 1)
    part = dimer_partition(lat)
    assert len(part.leftovers) % 2 == 1


# -------------------------------------------------------------------- json

def test_json_roundtrip_header():
    import json
    lat = build_lattice(2, 1.5, 2)
    payload = json.loads(lat.to_json(sets={'F': [0, 2]}))
    assert payload['d'] == 2 and payload['N'] == 2
    assert payload['sets']['F'] == [0, 2]
    assert len(payload['sites']) == lat.nsites
