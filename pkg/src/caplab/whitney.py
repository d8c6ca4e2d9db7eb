"""Dyadic Whitney decomposition of a box-union domain.

A dyadic cube of side ``2**-k`` is kept as soon as its distance to the
boundary is at least its diameter and no ancestor was kept.  The parent
failed that test, so ``dist(Q) < dist(parent) + diam(parent) < 4 diam(Q)``:
every kept cube satisfies ``diam(Q) <= dist(Q, boundary) <= 4 diam(Q)``.

The decomposition of an open set is infinite, so the recursion stops at
``max_generation``; unresolved cells of that generation form the
``residual`` boundary layer.  Cubes plus residual tile the domain exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numba
import numpy as np

from .geometry import DomainSpec, GeometryError, boundary_faces


class WhitneyError(GeometryError):
    pass


@dataclass(frozen=True, order=True)
class WhitneyCube:
    """Closed dyadic cube ``prod [pos_i, pos_i + 1] * 2**-k``."""

    k: int
    pos: tuple[int, ...]

    @property
    def side(self) -> Fraction:
        return Fraction(2) ** (-self.k)

    @property
    def lo(self) -> tuple[Fraction, ...]:
        return tuple(p * self.side for p in self.pos)

    @property
    def hi(self) -> tuple[Fraction, ...]:
        return tuple((p + 1) * self.side for p in self.pos)

    def parent(self) -> "WhitneyCube":
        return WhitneyCube(self.k - 1, tuple(p >> 1 for p in self.pos))

    def contains_point(self, x: Sequence) -> bool:
        return all(a <= Fraction(c) <= b for a, c, b in zip(self.lo, x, self.hi))

    def diameter(self) -> float:
        return math.sqrt(len(self.pos)) * 2.0 ** (-self.k)


@dataclass(frozen=True, eq=False)
class WhitneyDecomposition:
    n: int
    cubes: tuple[WhitneyCube, ...]
    central: int
    residual: tuple[WhitneyCube, ...] = ()
    max_generation: int | None = None

    @property
    def central_cube(self) -> WhitneyCube:
        return self.cubes[self.central]

    def generation_counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for c in self.cubes:
            out[c.k] = out.get(c.k, 0) + 1
        return dict(sorted(out.items()))


class _Geometry:
    """Exact integer view of a spec at scale 2**K."""

    def __init__(self, spec: DomainSpec, K: int):
        if K < spec.m:
            raise WhitneyError("working scale must be at least the spec scale")
        self.K = K
        f = 2 ** (K - spec.m)
        faces = boundary_faces(spec)
        bbox = spec.bounding_box()
        big = max(abs(c) for c in (*bbox.lo, *bbox.hi)) * f * 4
        self.dtype = np.int64 if big < 2**30 else object
        self.flo = np.array([fc.lo for fc in faces], dtype=object) * f
        self.fhi = np.array([fc.hi for fc in faces], dtype=object) * f
        self.blo = np.array([b.lo for b in spec.boxes], dtype=object) * f
        self.bhi = np.array([b.hi for b in spec.boxes], dtype=object) * f
        self.flo, self.fhi, self.blo, self.bhi = (a.astype(self.dtype) for a in (self.flo, self.fhi, self.blo, self.bhi))

    def cube_bounds(self, k: int, pos: np.ndarray):
        width = 2 ** (self.K - k)
        lo = pos.astype(self.dtype) * width
        return lo, lo + width

    def overlaps_domain(self, lo, hi, chunk=2048) -> np.ndarray:
        if self.dtype is not object:
            return _overlap_kernel(lo, hi, self.blo, self.bhi)
        out = np.zeros(len(lo), dtype=bool)
        for s in range(0, len(lo), chunk):
            a, b = lo[s : s + chunk, None, :], hi[s : s + chunk, None, :]
            hit = np.all((a < self.bhi[None]) & (self.blo[None] < b), axis=2)
            out[s : s + chunk] = hit.any(axis=1)
        return out

    def dist2(self, lo, hi, chunk=1024) -> np.ndarray:
        """Exact squared distance from each closed cube to the boundary."""
        if self.dtype is not object:
            return _dist2_kernel(lo, hi, self.flo, self.fhi)
        out = np.empty(len(lo), dtype=self.dtype)
        n = lo.shape[1]
        for s in range(0, len(lo), chunk):
            a, b = lo[s : s + chunk], hi[s : s + chunk]
            tot = None
            for k in range(n):
                g = np.maximum(np.maximum(self.flo[None, :, k] - b[:, None, k], a[:, None, k] - self.fhi[None, :, k]), 0)
                tot = g * g if tot is None else tot + g * g
            out[s : s + chunk] = tot.min(axis=1)
        return out


@numba.njit(cache=True, parallel=True)
def _dist2_kernel(lo, hi, flo, fhi):
    out = np.empty(lo.shape[0], dtype=np.int64)
    for i in numba.prange(lo.shape[0]):
        best = np.int64(-1)
        for f in range(flo.shape[0]):
            t = np.int64(0)
            for k in range(lo.shape[1]):
                g = max(flo[f, k] - hi[i, k], lo[i, k] - fhi[f, k], 0)
                t += g * g
                if best >= 0 and t >= best:
                    break
            if best < 0 or t < best:
                best = t
        out[i] = best
    return out


@numba.njit(cache=True, parallel=True)
def _overlap_kernel(lo, hi, blo, bhi):
    out = np.zeros(lo.shape[0], dtype=np.bool_)
    for i in numba.prange(lo.shape[0]):
        for b in range(blo.shape[0]):
            hit = True
            for k in range(lo.shape[1]):
                if not (lo[i, k] < bhi[b, k] and blo[b, k] < hi[i, k]):
                    hit = False
                    break
            if hit:
                out[i] = True
                break
    return out


def _roots(spec: DomainSpec) -> tuple[int, np.ndarray]:
    bbox = spec.bounding_box()
    extent = max(b - a for a, b in zip(bbox.lo, bbox.hi)) / 2**spec.m
    k0 = -math.ceil(math.log2(extent)) if extent > 0 else 0
    width = Fraction(2) ** (-k0)
    ranges = []
    for a, b in zip(bbox.lo, bbox.hi):
        lo = math.floor(Fraction(a, 2**spec.m) / width)
        hi = math.ceil(Fraction(b, 2**spec.m) / width)
        ranges.append(range(lo, hi))
    grids = np.meshgrid(*[np.array(r) for r in ranges], indexing="ij")
    return k0, np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)


def _children(pos: np.ndarray, n: int) -> np.ndarray:
    offs = np.array(np.meshgrid(*[[0, 1]] * n, indexing="ij")).reshape(n, -1).T
    return (2 * pos[:, None, :] + offs[None]).reshape(-1, n)


def _cube_list(k: int, pos: np.ndarray) -> list[WhitneyCube]:
    """Cubes of one generation in lattice order (the dataclass ordering)."""
    pos = pos[np.lexsort(pos.T[::-1])] if len(pos) else pos
    return [WhitneyCube(k, p) for p in map(tuple, pos.tolist())]


def _run(spec: DomainSpec, max_generation: int, point=None):
    g = _Geometry(spec, max(spec.m, max_generation))
    n = spec.n
    k, pos = _roots(spec)
    if k > max_generation:
        raise WhitneyError("max_generation is coarser than the domain")
    cubes: list[WhitneyCube] = []
    residual: list[WhitneyCube] = []
    while len(pos):
        lo, hi = g.cube_bounds(k, pos)
        if point is not None:
            # keep only cubes whose closure contains the point
            keep = np.all((lo <= point[None]) & (point[None] <= hi), axis=1)
            pos, lo, hi = pos[keep], lo[keep], hi[keep]
            if not len(pos):
                break
        inside = g.overlaps_domain(lo, hi)
        pos, lo, hi = pos[inside], lo[inside], hi[inside]
        side = 2 ** (g.K - k)
        d2 = g.dist2(lo, hi)
        sel = d2 >= n * side * side
        cubes += _cube_list(k, pos[sel])
        rest = pos[~sel]
        if k == max_generation:
            residual += _cube_list(k, rest)
            break
        pos = _children(rest, n) if len(rest) else rest
        k += 1
    return cubes, residual


def decompose(spec: DomainSpec, max_generation: int | None = None) -> WhitneyDecomposition:
    """Whitney cubes of ``spec`` down to side ``2**-max_generation`` (default m + 2)."""
    if max_generation is None:
        max_generation = spec.m + 2
    if max_generation < spec.m:
        raise WhitneyError(f"max_generation {max_generation} must be >= the spec scale {spec.m}")
    cubes, residual = _run(spec, max_generation)
    if not cubes:
        raise WhitneyError("no Whitney cube at or above max_generation: domain too thin for the precision")
    x0 = tuple(Fraction(c, 2**spec.m) for c in spec.center)
    central = _pick_central(cubes, x0)
    if central is None:
        raise WhitneyError(f"center {x0} lies in no Whitney cube (it sits in the unresolved boundary layer)")
    return WhitneyDecomposition(
        n=spec.n, cubes=tuple(cubes), central=central, residual=tuple(residual), max_generation=max_generation
    )


def _pick_central(cubes: Sequence[WhitneyCube], x0) -> int | None:
    # x0 as integers over a common power-of-two denominator
    x0 = [Fraction(c) for c in x0]
    den = max(c.denominator for c in x0)
    e = den.bit_length() - 1
    if den != 1 << e:
        hits = [i for i, c in enumerate(cubes) if c.contains_point(x0)]
    else:
        num = [int(c * den) for c in x0]
        hits = []
        for i, c in enumerate(cubes):
            # pos * 2^-k <= num * 2^-e <= (pos + 1) * 2^-k
            if c.k >= e:
                sc = [v << (c.k - e) for v in num]
                ok = all(p <= v <= p + 1 for p, v in zip(c.pos, sc))
            else:
                sh = e - c.k
                ok = all(p << sh <= v <= (p + 1) << sh for p, v in zip(c.pos, num))
            if ok:
                hits.append(i)
    if not hits:
        return None
    return min(hits, key=lambda i: (cubes[i].lo, cubes[i].k))


def central_cube(decomp: WhitneyDecomposition, x0: Sequence) -> WhitneyCube:
    """The cube containing ``x0``; face ties go to the smallest lower corner."""
    i = _pick_central(decomp.cubes, tuple(Fraction(c) for c in x0))
    if i is None:
        raise WhitneyError(f"internal consistency failure: {tuple(x0)} is in no Whitney cube")
    return decomp.cubes[i]


def locate_central(spec: DomainSpec, max_generation: int | None = None) -> WhitneyCube:
    """Central cube of ``decompose(spec)`` without building the whole decomposition."""
    if max_generation is None:
        max_generation = spec.m + 2
    g_scale = max(spec.m, max_generation)
    point = np.array([c * 2 ** (g_scale - spec.m) for c in spec.center], dtype=np.int64)
    cubes, _ = _run(spec, max_generation, point=point)
    x0 = tuple(Fraction(c, 2**spec.m) for c in spec.center)
    i = _pick_central(sorted(cubes), x0)
    if i is None:
        raise WhitneyError(f"center {x0} lies in no Whitney cube")
    return sorted(cubes)[i]


@dataclass(frozen=True)
class Violation:
    kind: str  # "overlap" | "outside" | "sandwich" | "volume"
    detail: str


def verify(decomp: WhitneyDecomposition, spec: DomainSpec) -> list[Violation]:
    """Exact check of disjointness, containment, the sandwich bound and volume coverage."""
    out: list[Violation] = []
    cubes = list(decomp.cubes)
    everything = cubes + list(decomp.residual)
    if not cubes:
        return [Violation("volume", "empty decomposition")]
    finest = max(c.k for c in everything)
    K = max(spec.m, finest)
    g = _Geometry(spec, K)
    # disjoint interiors: dyadic cubes overlap iff one is an ancestor-or-self of the other
    out += _overlaps(everything)
    n = spec.n
    for group, check_sandwich in ((cubes, True), (list(decomp.residual), False)):
        for k in sorted({c.k for c in group}):
            members = [c for c in group if c.k == k]
            pos = np.array([c.pos for c in members], dtype=np.int64)
            lo, hi = g.cube_bounds(k, pos)
            inside = g.overlaps_domain(lo, hi)
            side2 = (2 ** (K - k)) ** 2
            d2 = g.dist2(lo, hi)
            bad = ~inside
            if check_sandwich:
                bad |= (d2 < n * side2) | (d2 > 16 * n * side2)
            for i in np.flatnonzero(bad):
                c, ins, dd = members[i], inside[i], d2[i]
                if not ins:
                    out.append(Violation("outside", f"{c} does not meet the domain"))
                    continue
                if check_sandwich:
                    if dd == 0:
                        out.append(Violation("outside", f"{c} meets the boundary"))
                    elif not (n * side2 <= dd <= 16 * n * side2):
                        ratio = math.sqrt(float(dd) / (n * side2))
                        out.append(Violation("sandwich", f"{c}: dist/diam = {ratio:.4g} outside [1, 4]"))
    if K < spec.m:
        return out
    counts: dict[int, int] = {}
    for c in everything:
        counts[c.k] = counts.get(c.k, 0) + 1
    total = sum((Fraction(cnt, 2 ** (k * n)) for k, cnt in counts.items()), Fraction(0))
    if decomp.residual and max(c.k for c in decomp.residual) < spec.m:
        out.append(Violation("volume", "residual cells coarser than the spec scale"))
    vol = spec.volume()
    if total != vol:
        out.append(Violation("volume", f"cubes + residual cover {total}, domain volume is {vol}"))
    return out


def _encode(rows: np.ndarray, lo: np.ndarray, span: np.ndarray) -> np.ndarray:
    key = np.zeros(len(rows), dtype=np.int64)
    for k in range(rows.shape[1]):
        key = key * span[k] + (rows[:, k] - lo[k])
    return key


def _overlaps(cubes: Sequence[WhitneyCube]) -> list[Violation]:
    out = []
    by_gen: dict[int, list[WhitneyCube]] = {}
    for c in cubes:
        by_gen.setdefault(c.k, []).append(c)
    arrays = {k: np.array([c.pos for c in group], dtype=np.int64) for k, group in by_gen.items()}
    for k, arr in arrays.items():
        uniq = np.unique(arr, axis=0)
        if len(uniq) != len(arr):
            out.append(Violation("overlap", f"{len(arr) - len(uniq)} cube(s) of generation {k} listed twice"))
    for g, target in arrays.items():
        lo, hi = target.min(axis=0), target.max(axis=0)
        span = hi - lo + 1
        if float(np.prod(span.astype(float))) >= 2.0**62:
            raise WhitneyError("lattice too large for the overlap check")
        table = _encode(target, lo, span)
        for k, arr in arrays.items():
            if k <= g:
                continue
            anc = arr >> (k - g)
            ok = np.all((anc >= lo) & (anc <= hi), axis=1)
            hit = np.zeros(len(arr), dtype=bool)
            hit[ok] = np.isin(_encode(anc[ok], lo, span), table)
            for i in np.flatnonzero(hit):
                c = by_gen[k][i]
                out.append(Violation("overlap", f"{c} lies inside {WhitneyCube(g, tuple(int(v) for v in anc[i]))}"))
    return out
