from fractions import Fraction

import pytest

from caplab.constructions import (
    BranchingTreeParams,
    ConstructionError,
    RoomsAndCorridorsParams,
    branching_tree,
    leg_count,
    leg_counts,
    room_passage_replacement,
    rooms_and_corridors,
    thinned_count,
)
from caplab.geometry import Box, DomainSpec, connected, rasterize
from caplab.whitney import decompose
from conftest import unit_square


def _size(spec, box):
    return [Fraction(b - a, 2**spec.m) for a, b in zip(box.lo, box.hi)]


def test_rooms_example_n2():
    spec = rooms_and_corridors(RoomsAndCorridorsParams(n=2, s=2, a=2, J=2))
    (r1,), (c1,) = spec.tags["E_1"], spec.tags["P_1"]
    (r2,), (c2,) = spec.tags["E_2"], spec.tags["P_2"]
    assert _size(spec, r1) == [Fraction(1, 4)] * 2
    assert _size(spec, c1) == [Fraction(1, 16), Fraction(1, 4)]
    assert _size(spec, r2) == [Fraction(1, 16)] * 2
    assert _size(spec, c2) == [Fraction(1, 256), Fraction(1, 16)]
    assert connected(rasterize(spec, Fraction(1, 1024)))


def test_rooms_s1_neck_is_uniform():
    spec = rooms_and_corridors(RoomsAndCorridorsParams(n=2, s=1, a=1, J=1))
    (c1,) = spec.tags["P_1"]
    assert _size(spec, c1) == [Fraction(1, 2), Fraction(1, 2)]


def test_rooms_prism_n3():
    spec = rooms_and_corridors(RoomsAndCorridorsParams(n=3, s=2, a=2, J=1))
    (c1,) = spec.tags["P_1"]
    assert _size(spec, c1) == [Fraction(1, 16), Fraction(1, 16), Fraction(1, 4)]


def test_rooms_too_many_generations():
    with pytest.raises(ConstructionError, match="maximal feasible J is 1"):
        rooms_and_corridors(RoomsAndCorridorsParams(n=2, s=2, a=1, J=2))


def test_rooms_reject_non_dyadic_width():
    with pytest.raises(ConstructionError):
        RoomsAndCorridorsParams(n=2, s=Fraction(3, 2), a=1, J=2)


def test_tree_leg_counts():
    assert [leg_count(branching_tree(BranchingTreeParams(n=2, s=2, J=2)), j) for j in (1, 2)] == [4, 12]
    spec = branching_tree(BranchingTreeParams(n=3, s=2, J=2))
    assert leg_count(spec, 2) == 56
    assert all(_size(spec, r) == [Fraction(1, 4)] * 3 for r in spec.tags["E_2"])
    thin = branching_tree(BranchingTreeParams(n=2, s=2, q=1.0, J=3, mode="thinned"))
    assert leg_count(thin, 3) == 8
    assert all(_size(thin, r) == [Fraction(1, 8)] * 2 for r in thin.tags["E_3"])


@pytest.mark.parametrize("n", [2, 3])
def test_leg_count_closed_forms(n):
    for J in range(1, 7):
        p = BranchingTreeParams(n=n, s=1, J=J)
        assert leg_counts(p) == [2**n * (2**n - 1) ** (j - 1) for j in range(1, J + 1)]


def test_thinned_count_brackets_power():
    for q in (0.5, 1.0, 1.3, 1.58):
        for j in range(1, 7):
            k = thinned_count(q, j)
            assert k - 1 <= 2 ** (q * j) <= k


def test_tree_is_connected_at_passage_resolution():
    spec = branching_tree(BranchingTreeParams(n=2, s=2, J=3))
    assert connected(rasterize(spec, Fraction(1, 2**9)))


def test_replacement_on_unit_square():
    base = unit_square()
    dec = decompose(base, 4)
    out = room_passage_replacement(base, 2, dec)
    carved = [c for c in dec.cubes if c != dec.central_cube]
    per_gen = {}
    for c in carved:
        per_gen[c.k + 2] = per_gen.get(c.k + 2, 0) + 1
    for j, count in per_gen.items():
        rooms = out.tags[f"E_{j}"]
        assert len(rooms) == count
        assert all(_size(out, r) == [Fraction(1, 2**j)] * 2 for r in rooms)
        assert all(_size(out, p)[0] == Fraction(1, 4**j) for p in out.tags[f"P_{j}"])
    assert connected(rasterize(out, Fraction(1, 2**out.m)))


def test_replacement_one_room_per_cube():
    base = DomainSpec(n=2, m=2, boxes=(Box((0, 0), (8, 4)),), center=(2, 2))
    dec = decompose(base, 4)
    out = room_passage_replacement(base, 1, dec)
    assert sum(len(v) for k, v in out.tags.items() if k.startswith("E_")) == len(dec.cubes) - 1


def test_replacement_budget():
    base = unit_square()
    with pytest.raises(ConstructionError, match="minimal representable"):
        room_passage_replacement(base, 12, decompose(base, 5))
