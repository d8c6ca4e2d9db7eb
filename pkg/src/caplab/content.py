"""Dyadic Hausdorff q-content of finite families of dyadic cubes.

A cube of generation k has radius ``sqrt(n)/2 * 2**-k`` (its circumscribed
ball), so a dyadic cover costs ``(sqrt(n)/2)**q * sum_k N_k 2**(-k q)``.
Covers are reported through their count vectors ``N_k`` and valued with
``math.fsum``; two covers with the same counts get the same float.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import Box, DomainSpec, GeometryError


class ContentError(GeometryError):
    pass


@dataclass(frozen=True)
class CubeFamily:
    n: int
    cubes: tuple[tuple[int, tuple[int, ...]], ...]  # (generation k, lattice position)

    def __post_init__(self):
        object.__setattr__(self, "cubes", tuple(sorted((int(k), tuple(int(v) for v in p)) for k, p in self.cubes)))
        for k, p in self.cubes:
            if len(p) != self.n:
                raise ContentError(f"cube {p} is not {self.n}-dimensional")
        _check_disjoint(self.cubes)

    @classmethod
    def from_boxes(cls, boxes: Iterable[Box], m: int, n: int) -> "CubeFamily":
        """Tile boxes given at scale 2**m by aligned dyadic cubes."""
        cubes = []
        for b in boxes:
            cubes += dyadic_pieces(b, m)
        return cls(n=n, cubes=tuple(cubes))

    @classmethod
    def from_tag(cls, spec: DomainSpec, name: str) -> "CubeFamily":
        if name not in spec.tags:
            raise ContentError(f"no tagged set {name!r}; available: {sorted(spec.tags)}")
        return cls.from_boxes(spec.tags[name], spec.m, spec.n)

    def scaled(self, levels: int = 1) -> "CubeFamily":
        """The family shrunk by 2**-levels about the origin."""
        return CubeFamily(self.n, tuple((k + levels, p) for k, p in self.cubes))

    def volume(self) -> float:
        return math.fsum(2.0 ** (-k * self.n) for k, _ in self.cubes)


def dyadic_pieces(box: Box, m: int) -> list[tuple[int, tuple[int, ...]]]:
    """Aligned cubes of one common side tiling ``box`` (coordinates at scale 2**m)."""
    coords = (*box.lo, *box.hi)
    side = min(b - a for a, b in zip(box.lo, box.hi))
    e = side.bit_length() - 1
    while e > 0 and any(c % (1 << e) for c in coords):
        e -= 1
    w = 1 << e
    k = m - e
    ranges = [range(a // w, b // w) for a, b in zip(box.lo, box.hi)]
    grid = np.stack(np.meshgrid(*[np.array(r) for r in ranges], indexing="ij"), axis=-1).reshape(-1, box.n)
    return [(k, tuple(int(v) for v in p)) for p in grid]


def _check_disjoint(cubes: Sequence[tuple[int, tuple[int, ...]]]) -> None:
    present = set(cubes)
    if len(present) != len(cubes):
        raise ContentError("family lists a cube twice")
    gens = sorted({k for k, _ in cubes})
    for k, p in cubes:
        for g in gens:
            if g >= k:
                break
            if (g, tuple(v >> (k - g) for v in p)) in present:
                raise ContentError(f"cube {(k, p)} lies inside another family cube of generation {g}")


def _radius_factor(n: int, q: float) -> float:
    return (n / 4) ** (q / 2)


def power_sum(counts: dict[int, int], n: int, q: float) -> float:
    """Cost of a cover holding ``counts[k]`` cubes of generation k."""
    c = _radius_factor(n, q)
    return math.fsum(cnt * c * 2.0 ** (-k * q) for k, cnt in counts.items() if cnt)


def comparability(n: int, q: float) -> tuple[float, float]:
    """(c_lo, c_hi) with ``c_lo * H <= dyadic <= c_hi * H`` for the ball content H.

    A ball of radius rho meets at most 3**n aligned cubes of side in
    [rho, 2 rho), or at most 2**n of side in [2 rho, 4 rho); each costs less
    than ``(sqrt(n) rho)**q`` resp. ``(2 sqrt(n) rho)**q``.
    """
    return 1.0, min(3.0**n, 2.0 ** (n + q)) * n ** (q / 2)


@dataclass(frozen=True)
class ContentResult:
    q: float
    dyadic_value: float
    ball_upper: float
    c_lo: float
    c_hi: float
    cover: tuple[tuple[int, tuple[int, ...]], ...] = field(default=(), repr=False)

    @property
    def counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for k, _ in self.cover:
            out[k] = out.get(k, 0) + 1
        return dict(sorted(out.items()))


def _check_q(n: int, q: float) -> None:
    if not 0 < q <= n:
        raise ContentError(f"q must lie in (0, {n}], got {q}")


def optimal_cover(family: CubeFamily, q: float) -> tuple[float, list[tuple[int, tuple[int, ...]]]]:
    """Minimum-cost dyadic cover by ancestors-or-self of family cubes."""
    _check_q(family.n, q)
    if not family.cubes:
        return 0.0, []
    n = family.n
    by_gen: dict[int, list] = {}
    for c in family.cubes:
        by_gen.setdefault(c[0], []).append(c[1])
    k = max(by_gen)
    # node position -> (count vector, chosen cubes) at the current generation k
    level: dict[tuple[int, ...], tuple[dict[int, int], list]] = {}
    while True:
        for p in by_gen.get(k, ()):
            level[p] = ({k: 1}, [(k, p)])
        if k <= min(by_gen) and all(v in (-1, 0) for p in level for v in p):
            break
        # merge into parents
        parents: dict[tuple[int, ...], list] = {}
        for p, sol in level.items():
            parents.setdefault(tuple(v >> 1 for v in p), []).append(sol)
        k -= 1
        level = {}
        for p, sols in parents.items():
            counts: dict[int, int] = {}
            cubes: list = []
            for cnt, cb in sols:
                for g, c in cnt.items():
                    counts[g] = counts.get(g, 0) + c
                cubes += cb
            if len(sols) > 1 and power_sum({k: 1}, n, q) < power_sum(counts, n, q):
                level[p] = ({k: 1}, [(k, p)])
            else:
                level[p] = (counts, cubes)
    counts: dict[int, int] = {}
    cover: list = []
    for cnt, cb in level.values():
        for g, c in cnt.items():
            counts[g] = counts.get(g, 0) + c
        cover += cb
    return power_sum(counts, n, q), sorted(cover)


def _greedy(lo: np.ndarray, hi: np.ndarray, q: float) -> float:
    """Merge bounding boxes pairwise while the circumscribed-ball cost drops."""
    lo, hi = lo.copy(), hi.copy()
    cost = (np.linalg.norm(hi - lo, axis=1) / 2) ** q
    alive = np.ones(len(lo), dtype=bool)
    while alive.sum() > 1:
        idx = np.flatnonzero(alive)
        L = np.minimum(lo[idx, None, :], lo[None, idx, :])
        H = np.maximum(hi[idx, None, :], hi[None, idx, :])
        merged = (np.linalg.norm(H - L, axis=2) / 2) ** q
        gain = cost[idx, None] + cost[None, idx] - merged
        np.fill_diagonal(gain, -np.inf)
        a, b = np.unravel_index(int(np.argmax(gain)), gain.shape)
        if gain[a, b] <= 0:
            break
        i, j = idx[a], idx[b]
        lo[i], hi[i] = L[a, b], H[a, b]
        cost[i] = merged[a, b]
        alive[j] = False
    return math.fsum(cost[alive])


def _bounds(cubes) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([[v * 2.0**-k for v in p] for k, p in cubes])
    side = np.array([2.0**-k for k, _ in cubes])
    return lo, lo + side[:, None]


def ball_cover_upper(family: CubeFamily, q: float, seed_cover=None) -> float:
    """Cost of an explicit ball cover, found by greedy merging.

    Two seeds are tried: the family cubes themselves and, when given, a
    dyadic cover of the family; the cheaper result is returned.
    """
    _check_q(family.n, q)
    if not family.cubes:
        return 0.0
    value = _greedy(*_bounds(family.cubes), q)
    if seed_cover:
        value = min(value, _greedy(*_bounds(seed_cover), q))
    return value


def dyadic_content(family: CubeFamily, q: float) -> ContentResult:
    value, cover = optimal_cover(family, q)
    # the dyadic cover is itself a ball cover (circumscribed balls) of cost ``value``
    upper = min(ball_cover_upper(family, q, seed_cover=cover), value)
    c_lo, c_hi = comparability(family.n, q)
    return ContentResult(q=q, dyadic_value=value, ball_upper=upper, c_lo=c_lo, c_hi=c_hi, cover=tuple(cover))
