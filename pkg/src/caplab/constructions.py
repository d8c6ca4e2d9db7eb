"""Explicit cusp domains and their compact test sets.

Every builder returns a :class:`DomainSpec` whose tags ``E_j`` hold the rooms
of generation j and ``P_j`` the passages feeding them, index-aligned
(``P_j[i]`` joins ``E_j[i]`` to the rest of the domain).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import MAX_PRECISION, Box, DomainSpec, GeometryError, boxes_connected, subtract_boxes


class ConstructionError(GeometryError):
    pass


# ------------------------------------------------------------------ rooms and corridors


@dataclass(frozen=True)
class RoomsAndCorridorsParams:
    """Central unit cube with rooms of edge ``r_j = 2**(-a*j)`` on its top face.

    Each room hangs on a corridor of width ``r_j**s`` and length ``r_j``.
    Generations ``j_start..J`` are built.
    """

    n: int = 2
    s: Fraction | int = 2
    J: int = 2
    a: int = 1
    j_start: int = 1

    def __post_init__(self):
        s = Fraction(self.s)
        if self.n not in (2, 3):
            raise ConstructionError("n must be 2 or 3")
        if s < 1:
            raise ConstructionError("s must be >= 1")
        if self.a < 1 or self.J < self.j_start or self.j_start < 1:
            raise ConstructionError("need a >= 1 and 1 <= j_start <= J")
        if (s * self.a).denominator != 1:
            raise ConstructionError(f"s*a = {s * self.a} must be an integer so corridor widths stay dyadic")
        if self.precision > MAX_PRECISION:
            raise ConstructionError(f"corridor width 2^-{s * self.a * self.J} exceeds the precision budget")

    @property
    def precision(self) -> int:
        return int(Fraction(self.s) * self.a * self.J) + 1

    def width_exp(self, j: int) -> int:
        return int(Fraction(self.s) * self.a * j)


def rooms_and_corridors(params: RoomsAndCorridorsParams) -> DomainSpec:
    n, J, a = params.n, params.J, params.a
    m = params.precision
    U = 2**m
    top = n - 1
    half = U // 2
    boxes = [Box((0,) * n, (U,) * n)]
    tags: dict[str, tuple[Box, ...]] = {}
    x = 0
    for j in range(params.j_start, J + 1):
        r = U >> (a * j)
        w = U >> params.width_exp(j)
        if x + r > U:
            raise ConstructionError(
                f"rooms do not fit on the face: maximal feasible J is {j - 1}"
            )
        room_lo, room_hi, cor_lo, cor_hi = [], [], [], []
        for k in range(n):
            if k == top:
                cor_lo.append(U)
                cor_hi.append(U + r)
                room_lo.append(U + r)
                room_hi.append(U + 2 * r)
            elif k == 0:
                room_lo.append(x)
                room_hi.append(x + r)
                cor_lo.append(x + r // 2 - w // 2)
                cor_hi.append(x + r // 2 + w // 2)
            else:
                room_lo.append(half - r // 2)
                room_hi.append(half + r // 2)
                cor_lo.append(half - w // 2)
                cor_hi.append(half + w // 2)
        room = Box(tuple(room_lo), tuple(room_hi))
        corridor = Box(tuple(cor_lo), tuple(cor_hi))
        boxes += [corridor, room]
        tags[f"E_{j}"] = (room,)
        tags[f"P_{j}"] = (corridor,)
        r_next = U >> (a * (j + 1))
        x += r + max(r, r_next)
    spec = DomainSpec(n=n, m=m, boxes=tuple(boxes), center=(half,) * n, tags=tags)
    check_layout(spec)
    return spec


# ------------------------------------------------------------------ branching tree


@dataclass(frozen=True)
class BranchingTreeParams:
    """Tree of room-and-passage legs hanging off a unit cube.

    Step j legs: passage of length ``2**-j`` and width ``2**(-j*s-1)`` ending in
    a room of edge ``2**-j``.  ``mode='full'`` attaches a leg to every free
    corner; ``mode='thinned'`` keeps the first ``ceil(2**(q*j))`` slots.
    """

    n: int = 2
    s: int = 2
    q: float = 1.0
    J: int = 2
    mode: str = "full"

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ConstructionError("n must be 2 or 3")
        if int(self.s) != self.s or self.s < 1:
            raise ConstructionError("branching_tree needs an integral s >= 1")
        if self.mode not in ("full", "thinned"):
            raise ConstructionError(f"unknown mode {self.mode!r}")
        if self.J < 1:
            raise ConstructionError("J must be >= 1")
        if self.precision > MAX_PRECISION:
            raise ConstructionError(f"passage width 2^-{self.J * self.s + 1} exceeds the precision budget")
        if self.mode == "thinned":
            if not 0 < self.q <= math.log2(2**self.n - 1) + 1e-12:
                raise ConstructionError(f"thinned mode needs 0 < q <= log2(2^n - 1), got {self.q}")

    @property
    def precision(self) -> int:
        return self.J * int(self.s) + 2


def thinned_count(q: float, j: int) -> int:
    """k_j = ceil(2^(q j)), so that k_j - 1 <= 2^(q j) <= k_j."""
    v = 2.0 ** (q * j)
    k = math.ceil(v)
    # guard against 2^(qj) landing a hair above an integer through rounding
    if k - 1 >= v * (1 - 1e-12):
        k -= 1
    return max(k, 1)


def leg_counts(params: BranchingTreeParams) -> list[int]:
    """Number of legs at steps 1..J."""
    n = params.n
    if params.mode == "full":
        return [2**n * (2**n - 1) ** (j - 1) for j in range(1, params.J + 1)]
    return [thinned_count(params.q, j) for j in range(1, params.J + 1)]


def branching_tree(params: BranchingTreeParams) -> DomainSpec:
    n, s = params.n, int(params.s)
    m = params.precision
    U = 2**m
    corners = list(itertools.product((1, -1), repeat=n))
    corners.sort(reverse=True)  # (+,+,..) first: lexicographic slot order
    boxes = [Box((0,) * n, (U,) * n)]
    tags: dict[str, tuple[Box, ...]] = {}
    # (lo, hi, entry corner) of the rooms at the previous step
    parents: list[tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...] | None]] = [((0,) * n, (U,) * n, None)]
    counts = leg_counts(params)
    for j in range(1, params.J + 1):
        c = U >> (j - 1)
        side = c // 2
        w = U >> (j * s + 1)
        slots = []
        for plo, phi, entry in parents:
            for sig in corners:
                if entry is not None and sig == tuple(-e for e in entry):
                    continue
                slots.append((plo, phi, sig))
        want = counts[j - 1]
        if want > len(slots):
            raise ConstructionError(f"step {j}: {want} legs requested but only {len(slots)} free corners")
        rooms, passages, nxt = [], [], []
        for plo, phi, sig in slots[:want]:
            passage, room = _leg(plo, phi, sig, side, w)
            rooms.append(room)
            passages.append(passage)
            nxt.append((room.lo, room.hi, sig))
        boxes += [b for pair in zip(passages, rooms) for b in pair]
        tags[f"E_{j}"] = tuple(rooms)
        tags[f"P_{j}"] = tuple(passages)
        parents = nxt
    spec = DomainSpec(n=n, m=m, boxes=tuple(boxes), center=(U // 2,) * n, tags=tags)
    try:
        check_layout(spec)
    except ConstructionError as exc:
        raise ConstructionError(f"overlap in branching tree: {exc}") from None
    return spec


def _leg(plo, phi, sig, side, w):
    """Passage along axis 0 from the parent corner ``sig``; room diagonally beyond it."""
    n = len(sig)
    K = [phi[k] if sig[k] > 0 else plo[k] for k in range(n)]
    p_lo, p_hi, r_lo, r_hi = [], [], [], []
    for k in range(n):
        if k == 0:
            if sig[k] > 0:
                p_lo.append(K[k]); p_hi.append(K[k] + side)
                r_lo.append(K[k] + side); r_hi.append(K[k] + 2 * side)
            else:
                p_lo.append(K[k] - side); p_hi.append(K[k])
                r_lo.append(K[k] - 2 * side); r_hi.append(K[k] - side)
        else:
            # centred on the corner line: half on the parent, half on the child
            p_lo.append(K[k] - w // 2); p_hi.append(K[k] + w // 2)
            if sig[k] > 0:
                r_lo.append(K[k]); r_hi.append(K[k] + side)
            else:
                r_lo.append(K[k] - side); r_hi.append(K[k])
    return Box(tuple(p_lo), tuple(p_hi)), Box(tuple(r_lo), tuple(r_hi))


# ------------------------------------------------------------------ room and passage replacement


def room_passage_replacement(spec: DomainSpec, s, decomp) -> DomainSpec:
    """Carve a room and s-passage into every Whitney cube except the central one.

    A cube of edge ``4r`` (``r = 2**-j``) keeps a shell of thickness ``r/2``
    along its whole boundary, so neighbouring cubes stay glued along full
    faces.  Inside the hollow sits a room of edge ``r`` centred across the
    cube; a passage of width ``r**s`` and length ``r`` runs from the room's
    top face to the top wall of the shell.  Residual boundary cells of the
    decomposition are kept as they are.
    """
    s = Fraction(s)
    if s < 1:
        raise ConstructionError("s must be >= 1")
    n = spec.n
    central = decomp.central_cube
    carved = [c for c in decomp.cubes if c != central]
    gens = sorted({c.k + 2 for c in carved})
    for j in gens:
        if (s * j).denominator != 1:
            raise ConstructionError(f"s*j = {s * j} must be integral for the passage of generation {j}")
    finest = max([int(s * j) + 1 for j in gens] + [spec.m, max((c.k for c in decomp.residual), default=0)])
    if finest > MAX_PRECISION:
        limit = next(j for j in range(1, 64) if int(s * (j + 1)) + 1 > MAX_PRECISION)
        raise ConstructionError(
            f"passage width below the precision budget; the minimal representable room size is 2^-{limit}"
        )
    M = finest
    U = 2**M

    def cube_box(c):
        w = U >> c.k
        return Box(tuple(p * w for p in c.pos), tuple((p + 1) * w for p in c.pos))

    boxes = [cube_box(central)]
    tags: dict[str, list[Box]] = {}
    top = n - 1
    for c in carved:
        j = c.k + 2
        Q = cube_box(c)
        r = U >> j
        half_w = U >> (int(s * j) + 1)
        hollow = Box(tuple(a + r // 2 for a in Q.lo), tuple(b - r // 2 for b in Q.hi))
        boxes += subtract_boxes([Q], [hollow])
        mid = [a + 2 * r for a in Q.lo]
        room_lo = [m - r // 2 for m in mid]
        room_lo[top] = Q.lo[top] + 3 * r // 2
        room = Box(tuple(room_lo), tuple(a + r for a in room_lo))
        p_lo = [m - half_w for m in mid]
        p_hi = [m + half_w for m in mid]
        p_lo[top], p_hi[top] = room.hi[top], hollow.hi[top]
        passage = Box(tuple(p_lo), tuple(p_hi))
        boxes += [passage, room]
        tags.setdefault(f"E_{j}", []).append(room)
        tags.setdefault(f"P_{j}", []).append(passage)
    boxes += [cube_box(c) for c in decomp.residual]
    center = tuple(c << (M - spec.m) for c in spec.center)
    out = DomainSpec(
        n=n, m=M, boxes=tuple(boxes), center=center, tags={k: tuple(v) for k, v in sorted(tags.items(), key=lambda t: (t[0][0], int(t[0][2:])))}
    )
    if not boxes_connected(out.boxes):
        raise ConstructionError("replacement produced a disconnected domain")
    return out


# ------------------------------------------------------------------ layout checks


def check_layout(spec: DomainSpec) -> None:
    """Raise unless all boxes have disjoint interiors and only passage joints touch.

    Every tagged passage must share a face patch with exactly two boxes (the
    two things it joins); every other pair of boxes must be at positive
    distance.
    """
    boxes = spec.boxes
    passages = {b for name, bs in spec.tags.items() if name.startswith("P_") for b in bs}
    joints = {b: 0 for b in passages}
    lo = np.array([b.lo for b in boxes], dtype=object if spec.m > 60 else np.int64)
    hi = np.array([b.hi for b in boxes], dtype=lo.dtype)
    order = np.argsort(lo[:, 0], kind="stable")
    slo, shi = lo[order], hi[order]
    for p in range(len(boxes)):
        end = int(np.searchsorted(slo[:, 0], shi[p, 0], side="right"))
        if end <= p + 1:
            continue
        cand = np.arange(p + 1, end)
        touch = np.all((slo[cand] <= shi[p]) & (slo[p] <= shi[cand]), axis=1)
        for q in cand[touch]:
            bi, bj = boxes[int(order[p])], boxes[int(order[q])]
            if bi.overlaps(bj):
                raise ConstructionError(f"boxes {bi} and {bj} overlap")
            if (bi in passages or bj in passages) and bi.shares_face(bj):
                for b in (bi, bj):
                    if b in joints:
                        joints[b] += 1
                continue
            raise ConstructionError(f"boxes {bi} and {bj} touch without a passage between them")
    for b, count in joints.items():
        if count != 2:
            raise ConstructionError(f"passage {b} joins {count} boxes, expected 2")


def leg_count(spec: DomainSpec, j: int) -> int:
    return len(spec.tags.get(f"E_{j}", ()))
