"""Global and windowed capacity solves on constructed domains.

Windowed bound for one leg (room R joined to the rest through passage P):
take the window W = P grown by ``collar`` and the admissible potential

* 0 on R and on everything that reaches the center only through R,
* 1 on the rest of the domain outside W,
* the discrete minimizer inside W.

Its energy is the windowed solve's value, so the value bounds the global
discrete capacity from above.  For a set of several legs the bound is the
sum over legs, valid when the windows are pairwise separated (checked).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .capacity import CapacityError, CapacityResult, Condenser, PotentialField, plate_mask, solve
from .geometry import Box, DomainSpec, box_adjacency, rasterize
from .whitney import WhitneyCube, locate_central


def _generation(name: str) -> int:
    try:
        kind, j = name.split("_")
        assert kind == "E"
        return int(j)
    except (ValueError, AssertionError):
        raise CapacityError(f"expected a tagged set named E_<j>, got {name!r}") from None


def passage_width(spec: DomainSpec, j: int) -> Fraction:
    """Narrowest cross-section among the passages of generation j."""
    boxes = spec.tags.get(f"P_{j}")
    if not boxes:
        raise CapacityError(f"no passages tagged P_{j}")
    w = min(min(b - a for a, b in zip(x.lo, x.hi)) for x in boxes)
    return Fraction(w, 2**spec.m)


def default_h(spec: DomainSpec, j: int, cells: int = 4) -> Fraction:
    """Mesh width resolving the generation-j passages with ``cells`` cells across."""
    w = passage_width(spec, j) / cells
    k = math.ceil(-math.log2(w))
    return Fraction(1, 2**k)


def _mesh_k(h) -> int:
    f = Fraction(h)
    k = f.denominator.bit_length() - 1
    if f.numerator != 1 or f.denominator != 1 << k:
        raise CapacityError(f"h = {h} is not of the form 2^-k")
    return k


def _fit(spec: DomainSpec, k: int) -> DomainSpec:
    return spec if spec.m >= k else spec.rescaled(k)


def global_capacity(spec: DomainSpec, name: str, p: float = 2.0, h=None, delta: float = 0.0, tol=None):
    """Condenser (E = tagged set, F = central Whitney cube) on the whole raster."""
    j = _generation(name)
    h = Fraction(h) if h is not None else default_h(spec, j)
    q0 = locate_central(spec)
    grid = rasterize(spec, h)
    cond = Condenser(grid, plate_mask(spec, grid, name), plate_mask(spec, grid, q0), p, delta)
    if not cond.plate_e.any():
        raise CapacityError(f"{name} covers no cell at h={h}: under-resolved")
    return solve(cond, tol=tol)


@dataclass(frozen=True)
class LegWindow:
    room: Box
    passage: Box
    window: Box
    e_side: tuple[Box, ...]


def leg_windows(spec: DomainSpec, j: int, collar: int | None = None) -> list[LegWindow]:
    """Windows (spec-scale integers) for every leg of generation j.

    ``collar`` defaults to four passage widths.
    """
    rooms = spec.tags.get(f"E_{j}")
    passages = spec.tags.get(f"P_{j}")
    if not rooms:
        raise CapacityError(f"no rooms tagged E_{j}")
    if not passages or len(passages) != len(rooms):
        raise CapacityError(f"P_{j} must list one passage per room of E_{j}")
    boxes = list(spec.boxes)
    where = {b: i for i, b in enumerate(boxes)}
    nbrs = box_adjacency(boxes)
    rows = np.array([i for i, ns in enumerate(nbrs) for _ in ns], dtype=np.int64)
    cols = np.array([k for ns in nbrs for k in ns], dtype=np.int64)
    center = tuple(Fraction(c) for c in spec.center)
    core = next(
        i for i, b in enumerate(boxes) if all(a < c < z for a, c, z in zip(b.lo, center, b.hi))
    ) if any(all(a < c < z for a, c, z in zip(b.lo, center, b.hi)) for b in boxes) else 0
    out = []
    for room, passage in zip(rooms, passages):
        r = where[room]
        keep = (rows != r) & (cols != r)
        graph = sp.coo_matrix((np.ones(int(keep.sum())), (rows[keep], cols[keep])), shape=(len(boxes),) * 2)
        _, label = connected_components(graph, directed=False)
        side = tuple(b for i, b in enumerate(boxes) if i != r and label[i] != label[core])
        c = collar if collar is not None else 4 * min(b - a for a, b in zip(passage.lo, passage.hi))
        window = Box(tuple(a - c for a in passage.lo), tuple(b + c for b in passage.hi))
        out.append(LegWindow(room, passage, window, side))
    _check_separated(out)
    return out


def _check_separated(legs: list[LegWindow]) -> None:
    for i, a in enumerate(legs):
        zero_a = (a.room, *a.e_side)
        for b in legs[i + 1 :]:
            if a.window.touches(b.window):
                raise CapacityError(f"windows around {a.passage} and {b.passage} touch: reduce the collar")
            for z in (b.room, *b.e_side):
                if a.window.touches(z):
                    raise CapacityError(f"window around {a.passage} reaches another leg's room side: reduce the collar")
            for z in zero_a:
                if b.window.touches(z):
                    raise CapacityError(f"window around {b.passage} reaches another leg's room side: reduce the collar")


def leg_condenser(spec: DomainSpec, leg: LegWindow, h, p: float, delta: float, q0: WhitneyCube) -> Condenser:
    k = _mesh_k(h)
    S = _fit(spec, k)
    f = 2 ** (S.m - spec.m)
    cell = 2 ** (S.m - k)
    win = leg.window.scaled(f)
    grown = Box(tuple(a - cell for a in win.lo), tuple(b + cell for b in win.hi))
    grid = rasterize(S, h, window=grown)
    zero = plate_mask(spec, grid, [leg.room, *leg.e_side])
    inside = grid.mask_of_boxes([S.to_float(win)])
    one = grid.occupancy & ~zero & (~inside | plate_mask(spec, grid, q0))
    return Condenser(grid, zero, one, p, delta)


def windowed_capacity(
    spec: DomainSpec,
    name: str,
    p: float = 2.0,
    h=None,
    collar: int | None = None,
    delta: float = 0.0,
    tol=None,
) -> CapacityResult:
    """Certified upper bound for cap_p(E_j, Q0, domain): sum of per-leg window solves."""
    t0 = time.perf_counter()
    j = _generation(name)
    h = Fraction(h) if h is not None else default_h(spec, j)
    q0 = locate_central(spec)
    total, iters, gnorm, conv = 0.0, 0, 0.0, True
    legs = leg_windows(spec, j, collar)
    for leg in legs:
        cond = leg_condenser(spec, leg, h, p, delta, q0)
        if not cond.plate_e.any():
            raise CapacityError(f"room {leg.room} covers no cell at h={h}: under-resolved")
        _, res = solve(cond, tol=tol)
        total += res.value
        iters += res.iterations
        gnorm = max(gnorm, res.grad_norm)
        conv &= res.converged
    return CapacityResult(
        value=total,
        h=float(h),
        p=p,
        delta=delta,
        iterations=iters,
        grad_norm=gnorm,
        wall_time=time.perf_counter() - t0,
        mode="windowed",
        upper_bound=True,
        converged=conv,
        legs=len(legs),
    )


def leg_field(spec: DomainSpec, name: str, index: int = 0, p: float = 2.0, h=None, collar=None, delta=0.0):
    """Potential of one leg's window solve (for inspection and rendering)."""
    j = _generation(name)
    h = Fraction(h) if h is not None else default_h(spec, j)
    leg = leg_windows(spec, j, collar)[index]
    fld, res = solve(leg_condenser(spec, leg, h, p, delta, locate_central(spec)))
    return fld, replace(res, mode="windowed", upper_bound=True)
