"""Lattice s-John constants.

A path is a sequence of face-adjacent occupied cells, each step of length h.
It certifies constant C at s when every visited cell v, reached after
length L, satisfies ``L**s <= C * d(v)``.

Feasibility is decided by breadth-first search with per-cell deadlines
``(C d(v))**(1/s)``: a cell is admitted only if the BFS arrival length meets
its deadline.  Deadlines do not depend on the route, and BFS reaches each
cell at its earliest possible length, so an earlier arrival can always
replay any later arrival's continuation.  Hence the pruned search finds a
path whenever one exists.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .geometry import DistanceField, DomainSpec, GeometryError, VoxelGrid, distance_field, rasterize


class JohnError(GeometryError):
    pass


@numba.njit(cache=True)
def _bfs(occ, strides, d, C, s, start, goal, h, parent):
    """Deadline-pruned BFS over a padded flat grid; returns True if ``goal`` is reached.

    Cell v is admitted at path length L iff ``L**s <= C * d[v]``; L is the
    same for a whole BFS layer, so ``L**s`` is computed once per layer.
    """
    n = occ.shape[0]
    steps = np.full(n, -1, dtype=np.int32)
    queue = np.empty(n, dtype=np.int32)
    head, tail = 0, 0
    steps[start] = 0
    parent[start] = -1
    queue[tail] = start
    tail += 1
    if start == goal:
        return True
    layer, Ls = -1, 0.0
    slack = 1.0 + 1e-12  # keeps exact ties (L^s == C d) admissible under rounding
    while head < tail:
        c = queue[head]
        head += 1
        if steps[c] != layer:
            layer = steps[c]
            Ls = ((layer + 1) * h) ** s
        for k in range(strides.shape[0]):
            for sgn in (-1, 1):
                v = c + sgn * strides[k]
                if occ[v] and steps[v] < 0 and Ls <= C * d[v] * slack:
                    steps[v] = layer + 1
                    parent[v] = c
                    if v == goal:
                        return True
                    queue[tail] = v
                    tail += 1
    return False


class _Lattice:
    """Padded flat copy of a grid for the search kernel."""

    def __init__(self, grid: VoxelGrid, dist: DistanceField):
        occ = np.pad(grid.occupancy, 1, constant_values=False)
        self.shape = occ.shape
        self.occ = occ.ravel()
        if occ.size >= 2**31:
            raise JohnError("grid too large for the search kernel")
        self.strides = np.array([s // occ.itemsize for s in occ.strides], dtype=np.int32)
        d = np.pad(np.nan_to_num(dist.values, nan=0.0), 1)
        self.d = d.ravel()
        self.h = grid.h
        self.dmax = float(self.d.max())

    def flat(self, cell: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(c + 1 for c in cell), self.shape))

    def cell(self, f: int) -> tuple[int, ...]:
        return tuple(int(c) - 1 for c in np.unravel_index(f, self.shape))

    def search(self, start: int, goal: int, C: float, s: float):
        parent = np.empty(self.occ.shape[0], dtype=np.int32)
        ok = _bfs(self.occ, self.strides, self.d, float(C), float(s), start, goal, self.h, parent)
        return ok, parent

    def path(self, parent, start: int, goal: int) -> list[tuple[int, ...]]:
        out = [goal]
        while out[-1] != start:
            out.append(int(parent[out[-1]]))
        return [self.cell(f) for f in reversed(out)]


@dataclass(frozen=True, eq=False)
class JohnQuery:
    grid: VoxelGrid
    dist: DistanceField
    x: tuple[int, ...]
    x0: tuple[int, ...]
    s: float
    C: float

    def __post_init__(self):
        for name in ("x", "x0"):
            cell = tuple(getattr(self, name))
            if not self.grid.occupancy[cell]:
                raise JohnError(f"{name} = {cell} is not an occupied cell")
        if self.s < 1:
            raise JohnError("s must be >= 1")


def feasible(q: JohnQuery, lattice: _Lattice | None = None) -> bool:
    lat = lattice or _Lattice(q.grid, q.dist)
    ok, _ = lat.search(lat.flat(q.x), lat.flat(q.x0), q.C, q.s)
    return bool(ok)


@dataclass(frozen=True)
class PointConstant:
    C: float
    x: tuple[int, ...]
    path: tuple[tuple[int, ...], ...] = field(repr=False, default=())

    @property
    def path_length(self) -> int:
        return max(len(self.path) - 1, 0)


def john_constant_point(
    grid: VoxelGrid,
    dist: DistanceField,
    x: Sequence[int],
    x0: Sequence[int],
    s: float,
    tol: float = 1e-3,
    lattice: _Lattice | None = None,
) -> PointConstant:
    """Smallest C (to relative ``tol``) admitting a lattice path from x to x0."""
    x, x0 = tuple(x), tuple(x0)
    JohnQuery(grid, dist, x, x0, s, 1.0)
    lat = lattice or _Lattice(grid, dist)
    a, b = lat.flat(x), lat.flat(x0)
    if a == b:
        return PointConstant(0.0, x, (x,))
    ok, parent = lat.search(a, b, math.inf, s)
    if not ok:
        raise JohnError(f"x0 {x0} is not reachable from {x}: the grid is disconnected")
    straight = grid.h * math.dist(x, x0)
    lo = straight**s / lat.dmax
    ok, parent = lat.search(a, b, lo, s)
    if ok:
        return PointConstant(lo, x, tuple(lat.path(parent, a, b)))
    hi = 2 * lo
    while True:
        ok, parent = lat.search(a, b, hi, s)
        if ok:
            break
        lo, hi = hi, 2 * hi
    best = parent
    while hi / lo - 1 > tol:
        mid = math.sqrt(lo * hi)
        ok, parent = lat.search(a, b, mid, s)
        if ok:
            hi, best = mid, parent
        else:
            lo = mid
    return PointConstant(hi, x, tuple(lat.path(best, a, b)))


@dataclass(frozen=True)
class JohnEstimate:
    C: float
    s: float
    h: float
    worst: PointConstant
    samples: tuple[PointConstant, ...] = field(repr=False, default=())


def center_cell(spec: DomainSpec, grid: VoxelGrid) -> tuple[int, ...]:
    cell = grid.cell_of(spec.center_point())
    if not grid.occupancy[cell]:
        raise JohnError("the center cell is not occupied")
    return cell


def sample_cells(spec: DomainSpec, grid: VoxelGrid, budget: int) -> list[tuple[int, ...]]:
    """Corner and center cells of every tagged room, plus an even stride through all cells."""
    cells: list[tuple[int, ...]] = []
    for name in sorted(spec.tags):
        if not name.startswith("E_"):
            continue
        for b in spec.tags[name]:
            lo, hi = spec.to_float(b)
            eps = grid.h / 2
            corners = [
                [lo[k] + eps if bit == 0 else hi[k] - eps for k, bit in enumerate(bits)]
                for bits in np.ndindex(*(2,) * spec.n)
            ]
            for pt in corners + [list((lo + hi) / 2)]:
                c = grid.cell_of(pt)
                if grid.occupancy[c]:
                    cells.append(c)
    occ = np.argwhere(grid.occupancy)
    if budget > 0 and len(occ):
        pick = np.unique(np.linspace(0, len(occ) - 1, min(budget, len(occ))).round().astype(int))
        cells += [tuple(int(v) for v in occ[i]) for i in pick]
    seen, out = set(), []
    for c in cells:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def john_constant(
    spec: DomainSpec,
    s: float,
    sample_budget: int = 64,
    h=None,
    tol: float = 1e-3,
    grid: VoxelGrid | None = None,
    dist: DistanceField | None = None,
) -> JohnEstimate:
    """Max of the point constants over the room corners/centers and a lattice sample."""
    if grid is None:
        if h is None:
            raise JohnError("give h or a grid")
        grid = rasterize(spec, h)
    dist = dist or distance_field(spec, grid)
    lat = _Lattice(grid, dist)
    x0 = center_cell(spec, grid)
    results = [john_constant_point(grid, dist, x, x0, s, tol, lat) for x in sample_cells(spec, grid, sample_budget)]
    worst = max(results, key=lambda r: r.C)
    return JohnEstimate(C=worst.C, s=s, h=grid.h, worst=worst, samples=tuple(results))


def path_cost(grid: VoxelGrid, dist: DistanceField, path: Sequence[Sequence[int]], s: float) -> float:
    """max over the path of L^s / d: the constant this particular path certifies."""
    worst = 0.0
    for i, c in enumerate(path):
        worst = max(worst, (i * grid.h) ** s / dist.at(c))
    return worst
