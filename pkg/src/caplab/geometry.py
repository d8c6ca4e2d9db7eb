"""Domains built from axis-aligned dyadic boxes.

All box coordinates of a :class:`DomainSpec` are integers at a common scale
``2**m``: the integer ``c`` stands for the point ``c / 2**m``.  Containment,
adjacency and boundary extraction are therefore exact integer arithmetic.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

MAX_PRECISION = 62


class GeometryError(ValueError):
    """Invalid domain, grid or query."""


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box with integer corners (scale owned by the spec)."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise GeometryError(f"corner dimensions differ: {self.lo} vs {self.hi}")
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise GeometryError(f"box must have positive extent on every axis: {self.lo}..{self.hi}")

    @property
    def n(self) -> int:
        return len(self.lo)

    def volume(self) -> int:
        v = 1
        for a, b in zip(self.lo, self.hi):
            v *= b - a
        return v

    def intersect(self, other: "Box") -> "Box | None":
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a >= b for a, b in zip(lo, hi)):
            return None
        return Box(lo, hi)

    def overlaps(self, other: "Box") -> bool:
        """Interiors intersect."""
        return all(a < d and c < b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def touches(self, other: "Box") -> bool:
        """Closed boxes intersect (possibly only on a face, edge or corner)."""
        return all(a <= d and c <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def shares_face(self, other: "Box") -> bool:
        """Interiors disjoint and the boxes share an (n-1)-dimensional face patch."""
        flat = 0
        for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi):
            if b == c or d == a:
                flat += 1
            elif not (a < d and c < b):
                return False
        return flat == 1

    def contains_box(self, other: "Box") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def scaled(self, factor: int) -> "Box":
        return Box(tuple(c * factor for c in self.lo), tuple(c * factor for c in self.hi))

    def shifted(self, offset: Sequence[int]) -> "Box":
        return Box(tuple(c + o for c, o in zip(self.lo, offset)), tuple(c + o for c, o in zip(self.hi, offset)))


def _subtract(box: Box, cutter: Box) -> list[Box]:
    """``box`` minus the interior of ``cutter`` as disjoint boxes (slab decomposition)."""
    if not box.overlaps(cutter):
        return [box]
    pieces = []
    lo, hi = list(box.lo), list(box.hi)
    for k in range(box.n):
        if lo[k] < cutter.lo[k]:
            piece_hi = list(hi)
            piece_hi[k] = cutter.lo[k]
            pieces.append(Box(tuple(lo), tuple(piece_hi)))
            lo[k] = cutter.lo[k]
        if cutter.hi[k] < hi[k]:
            piece_lo = list(lo)
            piece_lo[k] = cutter.hi[k]
            pieces.append(Box(tuple(piece_lo), tuple(hi)))
            hi[k] = cutter.hi[k]
    return pieces


def subtract_boxes(boxes: Iterable[Box], cutters: Iterable[Box]) -> list[Box]:
    out = list(boxes)
    for cut in cutters:
        nxt = []
        for b in out:
            nxt.extend(_subtract(b, cut))
        out = nxt
    return out


def union_volume(boxes: Sequence[Box]) -> int:
    """Exact volume of a union of boxes (coordinate compression)."""
    if not boxes:
        return 0
    n = boxes[0].n
    breaks = [sorted({c for b in boxes for c in (b.lo[k], b.hi[k])}) for k in range(n)]
    index = [{c: i for i, c in enumerate(br)} for br in breaks]
    covered = np.zeros([len(br) - 1 for br in breaks], dtype=bool)
    for b in boxes:
        covered[tuple(slice(index[k][b.lo[k]], index[k][b.hi[k]]) for k in range(n))] = True
    widths = [np.diff(np.array(br, dtype=object)) for br in breaks]
    total = 0
    for idx in zip(*np.nonzero(covered)):
        v = 1
        for k, i in enumerate(idx):
            v *= int(widths[k][i])
        total += v
    return total


def covered_by(box: Box, boxes: Sequence[Box]) -> bool:
    """True iff the closed ``box`` lies in the closed union of ``boxes``."""
    if any(b.contains_box(box) for b in boxes):
        return True
    return not subtract_boxes([box], [b for b in boxes if b.overlaps(box)])


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(x)


def dyadic_exponent(x) -> int:
    """Smallest m >= 0 with x * 2**m integral; rejects non-dyadic values."""
    f = _as_fraction(x)
    den = f.denominator
    if den & (den - 1):
        raise GeometryError(f"{x} is not a dyadic rational")
    return den.bit_length() - 1


@dataclass(frozen=True)
class DomainSpec:
    """Bounded domain: the interior of a finite union of closed boxes.

    ``boxes``, ``center`` and the boxes in ``tags`` are integer coordinates at
    scale ``2**m``.
    """

    n: int
    m: int
    boxes: tuple[Box, ...]
    center: tuple[int, ...]
    tags: dict[str, tuple[Box, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.n not in (2, 3):
            raise GeometryError(f"dimension must be 2 or 3, got {self.n}")
        if not 0 <= self.m <= MAX_PRECISION:
            raise GeometryError(f"scale exponent {self.m} outside [0, {MAX_PRECISION}]")
        if not self.boxes:
            raise GeometryError("domain needs at least one box")
        for b in self.boxes:
            if b.n != self.n:
                raise GeometryError(f"box {b} has dimension {b.n}, expected {self.n}")
        if len(self.center) != self.n:
            raise GeometryError("center has the wrong dimension")
        if not _contains_scaled(self.boxes, tuple(Fraction(c) for c in self.center)):
            raise GeometryError(f"center {self.center} (scale 2^{self.m}) is not inside the domain")
        members = set(self.boxes)
        for name, tagged in self.tags.items():
            for b in tagged:
                if b.n != self.n:
                    raise GeometryError(f"tag {name}: box dimension mismatch")
                if b not in members and not covered_by(b, self.boxes):
                    raise GeometryError(f"tag {name}: box {b} is not contained in the domain")

    @classmethod
    def from_rationals(cls, n, boxes, center, tags=None) -> "DomainSpec":
        """Build from rational corners ``[(lo, hi), ...]``; picks the minimal scale."""
        tags = tags or {}
        values = [c for lo, hi in boxes for c in (*lo, *hi)] + list(center)
        values += [c for bs in tags.values() for lo, hi in bs for c in (*lo, *hi)]
        m = max(dyadic_exponent(v) for v in values)
        s = 2**m

        def conv(lo, hi):
            return Box(tuple(int(_as_fraction(c) * s) for c in lo), tuple(int(_as_fraction(c) * s) for c in hi))

        return cls(
            n=n,
            m=m,
            boxes=tuple(conv(lo, hi) for lo, hi in boxes),
            center=tuple(int(_as_fraction(c) * s) for c in center),
            tags={k: tuple(conv(lo, hi) for lo, hi in v) for k, v in tags.items()},
        )

    @property
    def unit(self) -> Fraction:
        return Fraction(1, 2**self.m)

    def rescaled(self, m: int) -> "DomainSpec":
        if m < self.m:
            raise GeometryError("can only refine the scale")
        f = 2 ** (m - self.m)
        return DomainSpec(
            n=self.n,
            m=m,
            boxes=tuple(b.scaled(f) for b in self.boxes),
            center=tuple(c * f for c in self.center),
            tags={k: tuple(b.scaled(f) for b in v) for k, v in self.tags.items()},
        )

    def volume(self) -> Fraction:
        return Fraction(union_volume(self.boxes), 2 ** (self.m * self.n))

    def bounding_box(self) -> Box:
        lo = tuple(min(b.lo[k] for b in self.boxes) for k in range(self.n))
        hi = tuple(max(b.hi[k] for b in self.boxes) for k in range(self.n))
        return Box(lo, hi)

    def center_point(self) -> tuple[float, ...]:
        return tuple(c / 2**self.m for c in self.center)

    def to_float(self, box: Box) -> tuple[np.ndarray, np.ndarray]:
        s = 2.0**self.m
        return np.array(box.lo, float) / s, np.array(box.hi, float) / s


def _contains_scaled(boxes: Sequence[Box], x: tuple[Fraction, ...]) -> bool:
    # x is interior to the closed union iff every open orthant at x is covered by one box
    n = len(x)
    for b in boxes:
        if all(lo < c < hi for lo, c, hi in zip(b.lo, x, b.hi)):
            return True
    near = [b for b in boxes if all(lo <= c <= hi for lo, c, hi in zip(b.lo, x, b.hi))]
    if not near:
        return False
    for signs in itertools.product((-1, 1), repeat=n):
        if not any(
            all((lo <= c < hi) if s > 0 else (lo < c <= hi) for lo, c, hi, s in zip(b.lo, x, b.hi, signs))
            for b in near
        ):
            return False
    return True


def contains(spec: DomainSpec, x: Sequence) -> bool:
    """True iff ``x`` (in domain units) lies in the open union of the boxes."""
    if len(x) != spec.n:
        raise GeometryError("point has the wrong dimension")
    s = 2**spec.m
    return _contains_scaled(spec.boxes, tuple(_as_fraction(c) * s for c in x))


# --------------------------------------------------------------------------- grids


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Uniform cell grid; ``occupancy[i]`` is True when cell i's center is in the domain."""

    h: float
    origin: tuple[float, ...]
    occupancy: np.ndarray

    @property
    def n(self) -> int:
        return self.occupancy.ndim

    @property
    def dims(self) -> tuple[int, ...]:
        return self.occupancy.shape

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    def occupied_volume(self) -> float:
        return int(self.occupancy.sum()) * self.cell_volume

    def centers(self, index=None) -> np.ndarray:
        """Coordinates of cell centers; ``index`` is a tuple of index arrays (default: occupied)."""
        if index is None:
            index = np.nonzero(self.occupancy)
        return np.stack([self.origin[k] + (np.asarray(index[k]) + 0.5) * self.h for k in range(self.n)], axis=-1)

    def cell_of(self, x: Sequence[float]) -> tuple[int, ...]:
        """Index of the cell containing ``x`` (faces resolved toward lower index)."""
        idx = []
        for k in range(self.n):
            t = (x[k] - self.origin[k]) / self.h
            i = int(np.ceil(t) - 1) if t == np.floor(t) else int(np.floor(t))
            idx.append(min(max(i, 0), self.dims[k] - 1))
        return tuple(idx)

    def mask_of_boxes(self, boxes: Iterable[tuple[Sequence[float], Sequence[float]]]) -> np.ndarray:
        """Occupied cells whose centers lie strictly inside any of the float boxes."""
        mask = np.zeros(self.dims, dtype=bool)
        for lo, hi in boxes:
            sl = []
            for k in range(self.n):
                a = int(np.floor((lo[k] - self.origin[k]) / self.h - 0.5)) + 1
                b = int(np.ceil((hi[k] - self.origin[k]) / self.h - 0.5))
                sl.append(slice(max(a, 0), max(min(b, self.dims[k]), 0)))
            mask[tuple(sl)] = True
        return mask & self.occupancy

    @classmethod
    def from_boxes(cls, boxes, h: float, origin=None, shape=None) -> "VoxelGrid":
        """Cell-center rasterization of float boxes at any mesh width (no dyadic requirement)."""
        boxes = [(np.asarray(lo, float), np.asarray(hi, float)) for lo, hi in boxes]
        lo = np.min([b[0] for b in boxes], axis=0) if origin is None else np.asarray(origin, float)
        if shape is None:
            hi = np.max([b[1] for b in boxes], axis=0)
            shape = tuple(int(round(v)) for v in (hi - lo) / h)
        grid = cls(h=h, origin=tuple(lo), occupancy=np.ones(shape, dtype=bool))
        return cls(h=h, origin=tuple(lo), occupancy=grid.mask_of_boxes(boxes))


def _mesh_exponent(h) -> int:
    f = _as_fraction(h)
    if f <= 0 or f.numerator != 1 or f.denominator & (f.denominator - 1):
        raise GeometryError(f"mesh width {h} is not of the form 2^-k")
    return f.denominator.bit_length() - 1


def rasterize(spec: DomainSpec, h, window: Box | None = None) -> VoxelGrid:
    """Cell-center rasterization at mesh width ``h = 2**-k``.

    Every box coordinate (of boxes meeting ``window``, if given) must be a
    multiple of ``h`` so that no cell center falls on a box face.
    ``window`` (spec-scale integers) restricts the grid to a sub-box; it is
    snapped outward to the h-lattice.
    """
    k = _mesh_exponent(h)
    if k < spec.m:
        step = 2 ** (spec.m - k)
    else:
        step = 1
    bbox = spec.bounding_box()
    if window is not None:
        lo = tuple(max(a, b) for a, b in zip(bbox.lo, window.lo))
        hi = tuple(min(a, b) for a, b in zip(bbox.hi, window.hi))
        lo = tuple((c // step) * step for c in lo)
        hi = tuple(-((-c) // step) * step for c in hi)
        region = Box(lo, hi)
    else:
        region = bbox
    boxes = [b for b in spec.boxes if b.overlaps(region)]
    for b in boxes:
        for c in (*b.lo, *b.hi):
            if c % step:
                raise GeometryError(
                    f"coordinate {Fraction(c, 2**spec.m)} is not a multiple of h={Fraction(1, 2**k)}"
                )
    # work at scale 2^K with K = max(m, k)
    K = max(spec.m, k)
    f = 2 ** (K - spec.m)
    cell = 2 ** (K - k)
    org = tuple(c * f for c in region.lo)
    dims = tuple((b - a) * f // cell for a, b in zip(region.lo, region.hi))
    occ = np.zeros(dims, dtype=bool)
    for b in boxes:
        sl = []
        for ax in range(spec.n):
            a = (b.lo[ax] * f - org[ax]) // cell
            e = (b.hi[ax] * f - org[ax]) // cell
            sl.append(slice(max(a, 0), max(min(e, dims[ax]), 0)))
        occ[tuple(sl)] = True
    origin = tuple(c / 2**K for c in org)
    return VoxelGrid(h=1.0 / 2**k, origin=origin, occupancy=occ)


def connected(grid: VoxelGrid) -> bool:
    """Occupied cells form a single face-connected component."""
    structure = ndimage.generate_binary_structure(grid.n, 1)
    _, count = ndimage.label(grid.occupancy, structure=structure)
    return count == 1


# ----------------------------------------------------------------- boundary / distance


def boundary_faces(spec: DomainSpec) -> list[Box]:
    """Exposed face patches of the union, as degenerate boxes (lo == hi on the normal axis).

    A face patch of a box is exposed when no box covers the space just beyond
    it; the distance to the union's boundary is the distance to the closure
    of these patches.
    """
    n = spec.n
    out: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    boxes = spec.boxes
    for bi, b in enumerate(boxes):
        for k in range(n):
            lat = [a for a in range(n) if a != k]
            for side in (0, 1):
                c = b.hi[k] if side else b.lo[k]
                blockers = []
                for bj, o in enumerate(boxes):
                    if bj == bi:
                        continue
                    beyond = (o.lo[k] <= c < o.hi[k]) if side else (o.lo[k] < c <= o.hi[k])
                    if not beyond:
                        continue
                    if all(o.lo[a] < b.hi[a] and b.lo[a] < o.hi[a] for a in lat):
                        blockers.append(o)
                face_lo = [b.lo[a] for a in lat]
                face_hi = [b.hi[a] for a in lat]
                if not blockers:
                    rects = [(face_lo, face_hi)]
                else:
                    rects = _uncovered(face_lo, face_hi, [([o.lo[a] for a in lat], [o.hi[a] for a in lat]) for o in blockers])
                for rlo, rhi in rects:
                    lo = list(rlo)
                    hi = list(rhi)
                    lo.insert(k, c)
                    hi.insert(k, c)
                    out.append((tuple(lo), tuple(hi)))
    return [_Face(lo, hi) for lo, hi in sorted(set(out))]


@dataclass(frozen=True)
class _Face:
    lo: tuple[int, ...]
    hi: tuple[int, ...]


def _uncovered(lo, hi, covers):
    """Rectangle [lo, hi] minus open rectangles ``covers``; returns closed rectangles."""
    d = len(lo)
    breaks = []
    for a in range(d):
        pts = {lo[a], hi[a]}
        for clo, chi in covers:
            for v in (clo[a], chi[a]):
                if lo[a] < v < hi[a]:
                    pts.add(v)
        breaks.append(sorted(pts))
    free = np.ones([len(br) - 1 for br in breaks], dtype=bool)
    index = [{v: i for i, v in enumerate(br)} for br in breaks]
    for clo, chi in covers:
        sl = []
        for a in range(d):
            i0 = index[a][max(clo[a], lo[a])]
            i1 = index[a][min(chi[a], hi[a])]
            sl.append(slice(i0, i1))
        free[tuple(sl)] = False
    rects = []
    for idx in zip(*np.nonzero(free)):
        rects.append(([breaks[a][i] for a, i in enumerate(idx)], [breaks[a][i + 1] for a, i in enumerate(idx)]))
    # merge runs along the last lateral axis to keep the patch count small
    if d >= 1 and rects:
        rects.sort(key=lambda r: (r[0][:-1], r[1][:-1], r[0][-1]))
        merged = [rects[0]]
        for r in rects[1:]:
            p = merged[-1]
            if p[0][:-1] == r[0][:-1] and p[1][:-1] == r[1][:-1] and p[1][-1] == r[0][-1]:
                merged[-1] = (p[0], p[1][:-1] + [r[1][-1]])
            else:
                merged.append(r)
        rects = merged
    return rects


def _int_dtype(max_abs: int):
    return np.int64 if max_abs < 2**30 else object


def squared_gaps(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from each point (rows) to each box (rows of lo/hi).

    Works on integer arrays (exact) or floats; shape (len(points), len(lo)).
    """
    out = None
    for k in range(points.shape[1]):
        x = points[:, k][:, None]
        g = np.maximum(np.maximum(lo[None, :, k] - x, x - hi[None, :, k]), 0)
        out = g * g if out is None else out + g * g
    return out


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Exact distance from each occupied cell center to the domain boundary."""

    grid: VoxelGrid
    values: np.ndarray  # same shape as grid; NaN on unoccupied cells

    def at(self, index: Sequence[int]) -> float:
        index = tuple(index)
        if not self.grid.occupancy[index]:
            raise GeometryError(f"cell {index} is not occupied")
        return float(self.values[index])


def distance_field(spec: DomainSpec, grid: VoxelGrid, chunk: int = 4096) -> DistanceField:
    """Analytic distance from every occupied cell center to the union's boundary."""
    k = _mesh_exponent(grid.h)
    K = max(spec.m, k) + 1  # cell centers are odd multiples of h/2
    faces = boundary_faces(spec)
    f = 2 ** (K - spec.m)
    flo = np.array([fc.lo for fc in faces], dtype=np.int64) * f
    fhi = np.array([fc.hi for fc in faces], dtype=np.int64) * f
    idx = np.nonzero(grid.occupancy)
    scale = 2**K
    org = np.array([round(o * scale) for o in grid.origin], dtype=np.int64)
    cell = 2 ** (K - k)
    pts = np.stack([org[a] + (2 * idx[a].astype(np.int64) + 1) * (cell // 2) for a in range(grid.n)], axis=1)
    big = max(int(np.abs(flo).max(initial=0)), int(np.abs(fhi).max(initial=0)), int(np.abs(pts).max(initial=0)))
    out = np.empty(len(pts))
    if big < 2**30:
        for s in range(0, len(pts), chunk):
            d2 = squared_gaps(pts[s : s + chunk], flo, fhi)
            out[s : s + chunk] = np.sqrt(d2.min(axis=1).astype(float))
    else:
        # gaps stay exact; squares in float64 (relative error ~1e-16)
        fl, fh = flo.astype(float), fhi.astype(float)
        for s in range(0, len(pts), chunk):
            d2 = squared_gaps(pts[s : s + chunk].astype(float), fl, fh)
            out[s : s + chunk] = np.sqrt(d2.min(axis=1))
    out /= scale
    values = np.full(grid.dims, np.nan)
    values[idx] = out
    return DistanceField(grid=grid, values=values)


def point_boundary_distance(spec: DomainSpec, x: Sequence[float]) -> float:
    """Distance from a single point to the union's boundary (float)."""
    faces = boundary_faces(spec)
    s = 2.0**spec.m
    lo = np.array([fc.lo for fc in faces], float) / s
    hi = np.array([fc.hi for fc in faces], float) / s
    return float(np.sqrt(squared_gaps(np.asarray([x], float), lo, hi).min()))


def box_adjacency(boxes: Sequence[Box]) -> list[list[int]]:
    """Face-adjacency lists (shared (n-1)-dimensional patch) between boxes."""
    nbrs: list[list[int]] = [[] for _ in boxes]
    order = sorted(range(len(boxes)), key=lambda i: boxes[i].lo[0])
    for p, i in enumerate(order):
        bi = boxes[i]
        for j in order[p + 1 :]:
            bj = boxes[j]
            if bj.lo[0] > bi.hi[0]:
                break
            if bi.shares_face(bj) or bi.overlaps(bj):
                nbrs[i].append(j)
                nbrs[j].append(i)
    return nbrs


def boxes_connected(boxes: Sequence[Box]) -> bool:
    """Exact connectivity of the open union: boxes linked through shared face patches."""
    if not boxes:
        return False
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    nbrs = box_adjacency(boxes)
    rows = [i for i, ns in enumerate(nbrs) for _ in ns]
    cols = [j for ns in nbrs for j in ns]
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(boxes), len(boxes)))
    count, _ = connected_components(graph, directed=False)
    return count == 1
