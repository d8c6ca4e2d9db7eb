from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caplab.constructions import BranchingTreeParams, RoomsAndCorridorsParams, branching_tree, rooms_and_corridors
from caplab.geometry import Box, DomainSpec
from caplab.whitney import (
    WhitneyCube,
    WhitneyDecomposition,
    WhitneyError,
    central_cube,
    decompose,
    locate_central,
    verify,
)
from conftest import random_domain, unit_square


def _volume(cubes, n):
    return sum((Fraction(1, 2 ** (c.k * n)) for c in cubes), Fraction(0))


def test_unit_square_passes_verify():
    sq = unit_square()
    dec = decompose(sq, 6)
    assert verify(dec, sq) == []
    assert _volume(dec.cubes, 2) + _volume(dec.residual, 2) == 1


def test_strip_has_no_large_cubes():
    strip = DomainSpec.from_rationals(2, [((0, 0), (1, Fraction(1, 4)))], (Fraction(1, 2), Fraction(1, 8)))
    dec = decompose(strip, 6)
    assert max(c.side for c in dec.cubes) <= Fraction(1, 8)
    assert verify(dec, strip) == []


def test_corridor_cubes_are_small():
    spec = rooms_and_corridors(RoomsAndCorridorsParams(n=2, s=2, a=2, J=1))
    dec = decompose(spec)
    (cor,) = spec.tags["P_1"]
    lo = [Fraction(c, 2**spec.m) for c in cor.lo]
    hi = [Fraction(c, 2**spec.m) for c in cor.hi]
    inner = [c for c in dec.cubes if all(a >= l and b <= h for a, b, l, h in zip(c.lo, c.hi, lo, hi))]
    assert inner
    assert max(c.side for c in inner) <= Fraction(1, 32)


def test_central_cube_contains_center_and_is_deterministic():
    sq = unit_square()
    dec = decompose(sq, 5)
    q0 = central_cube(dec, (0.5, 0.5))
    assert q0.contains_point((Fraction(1, 2), Fraction(1, 2)))
    # the center sits on a shared corner: the tie goes to the smallest lower corner
    hits = [c for c in dec.cubes if c.contains_point((Fraction(1, 2), Fraction(1, 2)))]
    assert len(hits) > 1 and q0 == min(hits, key=lambda c: (c.lo, c.k))
    assert decompose(sq, 5).central_cube == dec.central_cube == q0
    assert locate_central(sq, 5) == q0


def test_central_cube_of_tree_avoids_rooms():
    spec = branching_tree(BranchingTreeParams(n=2, s=2, J=2))
    q0 = locate_central(spec)
    assert all(0 <= a and b <= 1 for a, b in zip(q0.lo, q0.hi))
    s = 2**spec.m
    for name, rooms in spec.tags.items():
        for r in rooms:
            assert not Box(tuple(int(v * s) for v in q0.lo), tuple(int(v * s) for v in q0.hi)).overlaps(r)


def test_seeded_oversized_cube_is_reported_once():
    sq = unit_square()
    dec = decompose(sq, 6)
    cubes = set(dec.cubes)
    for c in sorted(cubes):
        parent = c.parent()
        kids = {WhitneyCube(c.k, tuple((p << 1) + b for p, b in zip(parent.pos, bits))) for bits in np.ndindex(2, 2)}
        if kids <= cubes and all(0 < a and b < 1 for a, b in zip(parent.lo, parent.hi)) and dec.central_cube not in kids:
            break
    bad_cubes = tuple(sorted((cubes - kids) | {parent}))
    bad = WhitneyDecomposition(2, bad_cubes, 0, dec.residual, dec.max_generation)
    report = verify(bad, sq)
    assert [v.kind for v in report] == ["sandwich"]


def test_overlap_and_volume_faults():
    sq = unit_square()
    dec = decompose(sq, 5)
    extra = dec.cubes + (dec.cubes[0].parent(),)
    kinds = {v.kind for v in verify(WhitneyDecomposition(2, extra, 0, dec.residual), sq)}
    assert "overlap" in kinds
    missing = WhitneyDecomposition(2, dec.cubes[1:], 0, dec.residual)
    assert [v.kind for v in verify(missing, sq)] == ["volume"]


def test_tree_verifies():
    spec = branching_tree(BranchingTreeParams(n=2, s=1, J=3))
    assert verify(decompose(spec), spec) == []


def test_neighbours_differ_by_at_most_two_generations():
    sq = unit_square()
    dec = decompose(sq, 7)
    cubes = dec.cubes
    lo = np.array([[float(v) for v in c.lo] for c in cubes])
    hi = np.array([[float(v) for v in c.hi] for c in cubes])
    k = np.array([c.k for c in cubes])
    touch = np.all((lo[:, None] <= hi[None]) & (lo[None] <= hi[:, None]), axis=2)
    assert np.abs(k[:, None] - k[None])[touch].max() <= 2


def test_generation_counts_grow_like_the_boundary():
    dec = decompose(unit_square(), 10)
    counts = dec.generation_counts()
    assert all(v <= 8 * 2**k for k, v in counts.items())
    assert counts[9] > counts[5]


def test_errors():
    sq = unit_square()
    thin = DomainSpec(n=2, m=6, boxes=(Box((0, 0), (64, 2)),), center=(32, 1))
    with pytest.raises(WhitneyError, match="too thin"):
        decompose(thin, 6)
    with pytest.raises(WhitneyError):
        decompose(rooms_and_corridors(RoomsAndCorridorsParams(n=2, s=2, a=2, J=1)), 2)
    assert decompose(sq).max_generation == sq.m + 2


@settings(max_examples=10)
@given(st.integers(0, 2**31 - 1), st.sampled_from([2, 3]))
def test_random_domains_verify(seed, n):
    spec = random_domain(np.random.default_rng(seed), n=n, m=3, nboxes=3)
    dec = decompose(spec)
    assert verify(dec, spec) == []
