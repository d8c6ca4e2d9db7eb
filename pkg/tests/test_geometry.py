from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from caplab.constructions import RoomsAndCorridorsParams, rooms_and_corridors
from caplab.geometry import (
    Box,
    DomainSpec,
    GeometryError,
    boundary_faces,
    connected,
    contains,
    distance_field,
    point_boundary_distance,
    rasterize,
    subtract_boxes,
    union_volume,
)
from conftest import random_domain, unit_square


def test_contains_interior_boundary_and_shared_face():
    sq = unit_square()
    assert contains(sq, (0.5, 0.5))
    assert not contains(sq, (0, 0.5))
    two = DomainSpec.from_rationals(2, [((0, 0), (1, 1)), ((1, 0), (2, 1))], (Fraction(1, 2), Fraction(1, 2)))
    assert contains(two, (1, 0.5))
    assert not contains(two, (2, 0.5))


def test_rasterize_small_cases():
    g = rasterize(unit_square(), Fraction(1, 2))
    assert g.dims == (2, 2) and g.occupancy.all()
    strip = DomainSpec.from_rationals(2, [((0, 0), (1, Fraction(1, 4)))], (Fraction(1, 2), Fraction(1, 8)))
    g = rasterize(strip, Fraction(1, 4))
    assert g.dims == (4, 1) and g.occupancy.all()


def test_corridor_is_two_cells_wide():
    spec = rooms_and_corridors(RoomsAndCorridorsParams(n=2, s=2, a=2, J=1))
    g = rasterize(spec, Fraction(1, 32))
    (cor,) = spec.tags["P_1"]
    lo, hi = spec.to_float(cor)
    mid_row = g.cell_of(((lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2))[1]
    assert g.occupancy[:, mid_row].sum() == 2


def test_rasterize_rejects_bad_mesh():
    sq = DomainSpec.from_rationals(2, [((0, 0), (Fraction(3, 4), 1))], (Fraction(1, 4), Fraction(1, 2)))
    with pytest.raises(GeometryError, match="3/4"):
        rasterize(sq, Fraction(1, 2))
    with pytest.raises(GeometryError):
        rasterize(sq, Fraction(1, 3))


def test_distance_examples():
    sq = unit_square()
    g = rasterize(sq, Fraction(1, 4))
    d = distance_field(sq, g)
    assert d.at((0, 0)) == 0.125
    assert d.at((1, 1)) == 0.375


def test_distance_l_shape_against_sampled_boundary():
    L = DomainSpec.from_rationals(
        2, [((0, 0), (1, 1)), ((1, 0), (2, Fraction(1, 2)))], (Fraction(1, 2), Fraction(1, 2))
    )
    g = rasterize(L, Fraction(1, 4))
    d = distance_field(L, g)
    cell = g.cell_of((1.125, 0.375))
    # sample the boundary polygon densely
    corners = [(0, 0), (2, 0), (2, 0.5), (1, 0.5), (1, 1), (0, 1), (0, 0)]
    t = np.linspace(0, 1, 1_000_000 // 6)
    pts = np.concatenate([np.outer(1 - t, a) + np.outer(t, b) for a, b in zip(corners, corners[1:])])
    brute = np.hypot(pts[:, 0] - 1.125, pts[:, 1] - 0.375).min()
    assert abs(d.at(cell) - brute) < 1e-6
    assert abs(point_boundary_distance(L, (1.125, 0.375)) - brute) < 1e-6


def test_unoccupied_distance_query_rejected():
    L = DomainSpec.from_rationals(2, [((0, 0), (1, 1)), ((1, 0), (2, Fraction(1, 2)))], (Fraction(1, 2), Fraction(1, 2)))
    g = rasterize(L, Fraction(1, 4))
    with pytest.raises(GeometryError):
        distance_field(L, g).at((7, 3))


def test_connected():
    assert connected(rasterize(unit_square(), Fraction(1, 8)))
    gap = DomainSpec.from_rationals(2, [((0, 0), (1, 1)), ((Fraction(5, 4), 0), (2, 1))], (Fraction(1, 2), Fraction(1, 2)))
    assert not connected(rasterize(gap, Fraction(1, 8)))
    rooms = rooms_and_corridors(RoomsAndCorridorsParams(n=2, s=2, a=1, j_start=2, J=3))
    assert connected(rasterize(rooms, Fraction(1, 256)))


def test_boundary_faces_of_abutting_boxes_skip_shared_face():
    two = DomainSpec.from_rationals(2, [((0, 0), (1, 1)), ((1, 0), (2, 1))], (Fraction(1, 2), Fraction(1, 2)))
    faces = boundary_faces(two)
    total = sum(max(b - a for a, b in zip(f.lo, f.hi)) for f in faces)
    assert total == 6 * 2**two.m  # perimeter of the 2 x 1 rectangle


def test_subtract_and_union_volume():
    outer = Box((0, 0), (4, 4))
    inner = Box((1, 1), (3, 3))
    pieces = subtract_boxes([outer], [inner])
    assert union_volume(pieces) == 12
    assert all(not p.overlaps(inner) for p in pieces)


@given(st.integers(0, 2**31 - 1))
def test_raster_invariants(seed):
    rng = np.random.default_rng(seed)
    spec = random_domain(rng, n=2, m=3)
    g = rasterize(spec, Fraction(1, 16))
    d = distance_field(spec, g)
    assert g.occupied_volume() <= float(spec.volume()) + 1e-12
    centers = g.centers()
    assert all(contains(spec, c) for c in centers[:: max(1, len(centers) // 25)])
    v = d.values
    assert np.nanmin(v) > 0
    # 1-Lipschitz across face neighbours
    for ax in range(2):
        a = np.take(v, range(v.shape[ax] - 1), axis=ax)
        b = np.take(v, range(1, v.shape[ax]), axis=ax)
        both = np.isfinite(a) & np.isfinite(b)
        assert np.all(np.abs(a - b)[both] <= g.h + 1e-12)


def test_refinement_does_not_increase_volume_error():
    disk_like = DomainSpec.from_rationals(
        2,
        [((0, 0), (1, 1)), ((1, Fraction(1, 4)), (Fraction(3, 2), Fraction(3, 4)))],
        (Fraction(1, 2), Fraction(1, 2)),
    )
    errs = [abs(rasterize(disk_like, Fraction(1, 2**k)).occupied_volume() - 1.25) for k in range(2, 7)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
