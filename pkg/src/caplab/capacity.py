"""Discrete p-capacity of a condenser on a voxel grid.

Energy of a potential u (one value per occupied cell)::

    E(u) = h^n * sum_c (|G_c|^2 + delta^2)^(p/2)

where ``G_c[a] = (u[c + e_a] - u[c]) / h`` when the +a neighbour is
occupied and 0 otherwise (natural boundary condition on the domain
boundary).  The capacity is the minimum of E over potentials equal to 0 on
plate E and 1 on plate F.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, cg, factorized

from .geometry import Box, DomainSpec, GeometryError, VoxelGrid

log = logging.getLogger(__name__)

DIRECT_LIMIT = 40_000  # free cells up to which sparse LU beats AMG


class CapacityError(GeometryError):
    pass


class SolverError(RuntimeError):
    """Non-convergence; carries the residual or energy history."""

    def __init__(self, message: str, history: Sequence[float] = (), field: "PotentialField | None" = None):
        super().__init__(message)
        self.history = list(history)
        self.field = field


@dataclass(frozen=True, eq=False)
class Condenser:
    grid: VoxelGrid
    plate_e: np.ndarray
    plate_f: np.ndarray
    p: float
    delta: float = 0.0

    def __post_init__(self):
        occ = self.grid.occupancy
        for name in ("plate_e", "plate_f"):
            mask = np.asarray(getattr(self, name), dtype=bool)
            if mask.shape != occ.shape:
                raise CapacityError(f"{name} has shape {mask.shape}, grid has {occ.shape}")
            if (mask & ~occ).any():
                raise CapacityError(f"{name} contains unoccupied cells")
            object.__setattr__(self, name, mask)
        if (self.plate_e & self.plate_f).any():
            raise CapacityError("plates intersect")
        if not self.plate_f.any():
            raise CapacityError("plate F is empty")
        if not self.p > 1:
            raise CapacityError(f"p must exceed 1, got {self.p}")
        if self.delta < 0:
            raise CapacityError("delta must be >= 0")

    @property
    def free(self) -> np.ndarray:
        return self.grid.occupancy & ~self.plate_e & ~self.plate_f

    def with_(self, **kw) -> "Condenser":
        args = dict(grid=self.grid, plate_e=self.plate_e, plate_f=self.plate_f, p=self.p, delta=self.delta)
        args.update(kw)
        return Condenser(**args)


@dataclass(frozen=True, eq=False)
class PotentialField:
    grid: VoxelGrid
    u: np.ndarray  # grid-shaped, NaN on unoccupied cells

    def clipped(self) -> "PotentialField":
        return PotentialField(self.grid, np.clip(self.u, 0.0, 1.0))


@dataclass(frozen=True)
class CapacityResult:
    value: float
    h: float
    p: float
    delta: float
    iterations: int
    grad_norm: float
    wall_time: float
    mode: str = "global"
    upper_bound: bool = False
    converged: bool = True
    legs: int = 1
    history: tuple[float, ...] = field(default=(), repr=False)


# ------------------------------------------------------------------ assembly


def plate_mask(spec: DomainSpec, grid: VoxelGrid, plate) -> np.ndarray:
    """Occupied cells whose centers lie in a tagged set, a box list or a Whitney cube."""
    from .whitney import WhitneyCube

    if plate is None:
        return np.zeros(grid.dims, dtype=bool)
    if isinstance(plate, str):
        if plate not in spec.tags:
            raise CapacityError(f"no tagged set {plate!r}")
        boxes = [spec.to_float(b) for b in spec.tags[plate]]
    elif isinstance(plate, WhitneyCube):
        boxes = [(np.array([float(v) for v in plate.lo]), np.array([float(v) for v in plate.hi]))]
    else:
        boxes = [spec.to_float(b) if isinstance(b, Box) else b for b in plate]
    return grid.mask_of_boxes(boxes)


def assemble(spec: DomainSpec, grid: VoxelGrid, E, Q0, p: float, delta: float = 0.0) -> Condenser:
    """Condenser with plate E (u = 0) and plate F = Q0 (u = 1)."""
    me = plate_mask(spec, grid, E)
    mf = plate_mask(spec, grid, Q0)
    if not mf.any():
        raise CapacityError(f"plate F ({_describe(Q0)}) covers no cell at h={grid.h}: under-resolved")
    if E is not None and not me.any() and not (isinstance(E, str) and not spec.tags[E]):
        raise CapacityError(f"plate E ({_describe(E)}) covers no cell at h={grid.h}: under-resolved")
    if (me & mf).any():
        raise CapacityError(f"plate E ({_describe(E)}) intersects plate F ({_describe(Q0)})")
    return Condenser(grid=grid, plate_e=me, plate_f=mf, p=p, delta=delta)


def _describe(plate) -> str:
    return plate if isinstance(plate, str) else repr(plate)


@dataclass(frozen=True, eq=False)
class _Stencil:
    """Forward edges between occupied cells, in the occupied-cell numbering."""

    index: np.ndarray  # grid-shaped, -1 on unoccupied cells
    src: tuple[np.ndarray, ...]  # per axis
    dst: tuple[np.ndarray, ...]
    count: int

    @classmethod
    def of(cls, grid: VoxelGrid) -> "_Stencil":
        occ = grid.occupancy
        index = np.full(occ.shape, -1, dtype=np.int64)
        index[occ] = np.arange(int(occ.sum()))
        src, dst = [], []
        for a in range(grid.n):
            lo = [slice(None)] * grid.n
            hi = [slice(None)] * grid.n
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            both = occ[tuple(lo)] & occ[tuple(hi)]
            src.append(index[tuple(lo)][both])
            dst.append(index[tuple(hi)][both])
        return cls(index=index, src=tuple(src), dst=tuple(dst), count=int(occ.sum()))


def _flat(cond: Condenser, stencil: _Stencil, u) -> np.ndarray:
    arr = u.u if isinstance(u, PotentialField) else np.asarray(u, float)
    return arr[cond.grid.occupancy] if arr.shape == cond.grid.dims else arr


def _sq_grad(stencil: _Stencil, x: np.ndarray, h: float):
    sq = np.zeros(stencil.count)
    diffs = []
    for s, d in zip(stencil.src, stencil.dst):
        g = (x[d] - x[s]) / h
        diffs.append(g)
        sq += np.bincount(s, weights=g * g, minlength=stencil.count)
    return sq, diffs


def _energy_flat(cond: Condenser, stencil: _Stencil, x: np.ndarray) -> float:
    h, n = cond.grid.h, cond.grid.n
    sq, _ = _sq_grad(stencil, x, h)
    return float(h**n * np.sum((sq + cond.delta**2) ** (cond.p / 2)))


def _gradient_flat(cond: Condenser, stencil: _Stencil, x: np.ndarray) -> np.ndarray:
    h, n, p = cond.grid.h, cond.grid.n, cond.p
    sq, diffs = _sq_grad(stencil, x, h)
    with np.errstate(divide="ignore"):
        w = h**n * p * (sq + cond.delta**2) ** (p / 2 - 1)
    w[~np.isfinite(w)] = 0.0  # zero gradient at delta = 0, p < 2: subgradient 0
    grad = np.zeros(stencil.count)
    for s, d, g in zip(stencil.src, stencil.dst, diffs):
        t = w[s] * g / h
        grad += np.bincount(d, weights=t, minlength=stencil.count)
        grad -= np.bincount(s, weights=t, minlength=stencil.count)
    return grad


def _hessian(cond: Condenser, stencil: _Stencil, x: np.ndarray, floor: float = 1e-12) -> sp.csr_matrix:
    """Hessian of the energy; per-cell blocks ``B^T (2 phi' I + 4 phi'' G G^T) B``."""
    h, n, p, d2 = cond.grid.h, cond.grid.n, cond.p, cond.delta**2
    sq, diffs = _sq_grad(stencil, x, h)
    t = sq + d2
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (p / 2) * t ** (p / 2 - 1)
        dd = (p / 2) * (p / 2 - 1) * t ** (p / 2 - 2)
    d1 = np.where(np.isfinite(d1), d1, 0.0)
    dd = np.where(np.isfinite(dd), dd, 0.0)
    scale = max(float(d1.max(initial=0.0)), 1.0)
    d1 = np.maximum(d1, floor * scale)
    # G per cell and axis, laid out on the source cell of each edge
    G = np.zeros((n, stencil.count))
    has = np.zeros((n, stencil.count), dtype=bool)
    for a, (s, g) in enumerate(zip(stencil.src, diffs)):
        G[a, s] = g
        has[a, s] = True
    nbr = np.full((n, stencil.count), -1, dtype=np.int64)
    for a, (s, d) in enumerate(zip(stencil.src, stencil.dst)):
        nbr[a, s] = d
    rows, cols, vals = [], [], []
    coef = h ** (n - 2)
    cells = np.arange(stencil.count)
    for a in range(n):
        for b in range(n):
            m = 4 * dd * G[a] * G[b]
            if a == b:
                m = m + 2 * d1
            m = m * coef
            ok = has[a] & has[b]
            c, ca, cb, v = cells[ok], nbr[a][ok], nbr[b][ok], m[ok]
            rows += [ca, ca, c, c]
            cols += [cb, c, cb, c]
            vals += [v, -v, -v, v]
    H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(stencil.count,) * 2)
    return H.tocsr()


def energy(cond: Condenser, u) -> float:
    """Discrete energy; rejects fields that violate the plate values."""
    st = _Stencil.of(cond.grid)
    x = _flat(cond, st, u)
    occ = cond.grid.occupancy
    if np.any(x[cond.plate_e[occ]] != 0.0) or np.any(x[cond.plate_f[occ]] != 1.0):
        raise CapacityError("potential violates the plate values (0 on E, 1 on F)")
    return _energy_flat(cond, st, x)


def energy_gradient(cond: Condenser, u) -> np.ndarray:
    """Gradient of :func:`energy` with respect to every occupied cell value (grid-shaped)."""
    st = _Stencil.of(cond.grid)
    out = np.full(cond.grid.dims, np.nan)
    out[cond.grid.occupancy] = _gradient_flat(cond, st, _flat(cond, st, u))
    return out


# ------------------------------------------------------------------ p = 2


def _laplacian(stencil: _Stencil, h: float, n: int) -> sp.csr_matrix:
    s = np.concatenate(stencil.src)
    d = np.concatenate(stencil.dst)
    w = np.full(len(s), 2 * h ** (n - 2))
    A = sp.coo_matrix(
        (np.concatenate([w, w, -w, -w]), (np.concatenate([s, d, s, d]), np.concatenate([s, d, d, s]))),
        shape=(stencil.count,) * 2,
    )
    return A.tocsr()


def _boundary_values(cond: Condenser, stencil: _Stencil):
    """Initial vector with plate values, the mask of solvable free cells, and the rest."""
    occ = cond.grid.occupancy
    e = cond.plate_e[occ]
    f = cond.plate_f[occ]
    free = ~(e | f)
    x = np.where(f, 1.0, 0.0)
    if not e.any():
        # u = 1 is admissible and costs nothing
        return np.ones_like(x), np.zeros_like(free)
    # free components touching no plate carry zero energy at any constant; fix them to 1
    s = np.concatenate(stencil.src)
    d = np.concatenate(stencil.dst)
    keep = free[s] & free[d]
    graph = sp.coo_matrix((np.ones(int(keep.sum())), (s[keep], d[keep])), shape=(stencil.count,) * 2)
    _, label = connected_components(graph, directed=False)
    anchored = np.zeros(label.max() + 1, dtype=bool)
    touch = (free[s] & ~free[d]) | (~free[s] & free[d])
    anchored[label[np.where(free[s], s, d)[touch]]] = True
    floating = free & ~anchored[label]
    x[floating] = 1.0
    return x, free & ~floating


def _preconditioner(A: sp.csr_matrix, kind: str):
    if kind == "jacobi":
        inv = 1.0 / A.diagonal()
        return LinearOperator(A.shape, matvec=lambda v: inv * v)
    import pyamg

    ml = pyamg.smoothed_aggregation_solver(A.tocsr(), symmetry="symmetric")
    return ml.aspreconditioner(cycle="V")


def solve_p2(cond: Condenser, tol: float = 1e-10, precond: str = "auto", maxiter: int | None = None):
    """Harmonic potential by preconditioned CG; returns (PotentialField, CapacityResult)."""
    if cond.p != 2 or cond.delta != 0:
        raise CapacityError("solve_p2 needs p = 2 and delta = 0")
    t0 = time.perf_counter()
    grid = cond.grid
    st = _Stencil.of(grid)
    x, solve = _boundary_values(cond, st)
    history: list[float] = []
    iters = 0
    if solve.any():
        A = _laplacian(st, grid.h, grid.n)
        Aff = A[solve][:, solve].tocsr()
        b = -(A[solve][:, ~solve] @ x[~solve])
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            x[solve] = 0.0
        else:
            kind = precond if precond != "auto" else ("amg" if Aff.shape[0] > 20_000 else "jacobi")
            M = _preconditioner(Aff, kind)

            def record(xk):
                history.append(float(np.linalg.norm(b - Aff @ xk)) / bnorm)

            sol, info = cg(Aff, b, rtol=tol, maxiter=maxiter or 20 * Aff.shape[0], M=M, callback=record)
            iters = len(history)
            res = float(np.linalg.norm(b - Aff @ sol)) / bnorm
            if info != 0 or res > 10 * tol:
                raise SolverError(f"CG stopped at relative residual {res:.3e} after {iters} iterations", history)
            x[solve] = sol
    value = _energy_flat(cond, st, x)
    g = _gradient_flat(cond, st, x)
    u = np.full(grid.dims, np.nan)
    u[grid.occupancy] = x
    result = CapacityResult(
        value=value,
        h=grid.h,
        p=2.0,
        delta=0.0,
        iterations=iters,
        grad_norm=float(np.abs(g[solve]).max(initial=0.0)),
        wall_time=time.perf_counter() - t0,
        history=tuple(history),
    )
    return PotentialField(grid, u), result


# ------------------------------------------------------------------ general p


class _NewtonSolve:
    """Solves with the energy Hessian restricted to free cells."""

    def __init__(self, cond, st, x, solve):
        H = _hessian(cond, st, x)[solve][:, solve].tocsc()
        if H.shape[0] <= DIRECT_LIMIT:
            self._apply = factorized(H)
        else:
            M = _preconditioner(H.tocsr(), "amg")
            self._apply = lambda r: M @ r

    def __call__(self, r):
        return self._apply(r)


def solve_p(
    cond: Condenser,
    tol: float = 1e-8,
    maxiter: int = 500,
    u0: PotentialField | None = None,
    refresh: int = 1,
):
    """Minimize the regularized p-energy by preconditioned nonlinear CG.

    Polak-Ribiere+ directions, preconditioned by the energy Hessian (so close
    to the minimizer the iteration is a damped Newton method), Armijo
    backtracking.  Stops when the relative energy decrease is below ``tol``
    and ``max |grad|`` is below ``tol`` times the larger of ``h^n`` and the
    starting gradient.
    """
    if cond.delta <= 0 and cond.p < 2:
        raise CapacityError("solve_p needs delta > 0 when p < 2")
    t0 = time.perf_counter()
    grid = cond.grid
    n, h = grid.n, grid.h
    st = _Stencil.of(grid)
    x, solve = _boundary_values(cond, st)
    if u0 is None:
        u0, _ = solve_p2(cond.with_(p=2.0, delta=0.0))
    x[solve] = u0.u[grid.occupancy][solve]
    history: list[float] = []
    gtol = tol * h**n
    E = _energy_flat(cond, st, x)
    history.append(E)
    if not solve.any():
        return _finish(cond, st, x, solve, E, 0, t0, history, True)
    g = _gradient_flat(cond, st, x)[solve]
    # thin passages carry steep gradients, so measure against the starting gradient too
    gtol = tol * max(h**n, float(np.abs(g).max()))
    P = _NewtonSolve(cond, st, x, solve)
    z = P(g)
    d = -z
    gz = float(g @ z)
    converged = False
    it = 0
    for it in range(1, maxiter + 1):
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -z, -gz
        alpha, E_new, x_new = 1.0, None, None
        while alpha > 1e-14:
            trial = x.copy()
            trial[solve] += alpha * d
            E_try = _energy_flat(cond, st, trial)
            if E_try <= E + 1e-4 * alpha * slope:
                E_new, x_new = E_try, trial
                break
            alpha *= 0.5
        if x_new is None:
            # no decrease representable: at the floating point floor
            converged = float(np.abs(g).max()) < max(gtol, 1e-10 * h ** (n - 2))
            break
        decrease = (E - E_new) / max(abs(E_new), 1e-300)
        x, E = x_new, E_new
        history.append(E)
        g_new = _gradient_flat(cond, st, x)[solve]
        if decrease < tol and float(np.abs(g_new).max()) < gtol:
            g = g_new
            converged = True
            break
        if it % refresh == 0:
            P = _NewtonSolve(cond, st, x, solve)
        z_new = P(g_new)
        beta = max(0.0, float(g_new @ (z_new - z)) / gz) if gz > 0 else 0.0
        d = -z_new + beta * d
        g, z, gz = g_new, z_new, float(g_new @ z_new)
    result = _finish(cond, st, x, solve, E, it, t0, history, converged)
    if not converged:
        raise SolverError(
            f"nonlinear CG did not converge in {it} iterations (max |grad| {result[1].grad_norm:.3e})",
            history,
            result[0],
        )
    return result


def _finish(cond, st, x, solve, E, it, t0, history, converged):
    grid = cond.grid
    g = _gradient_flat(cond, st, x)
    u = np.full(grid.dims, np.nan)
    u[grid.occupancy] = x
    res = CapacityResult(
        value=E,
        h=grid.h,
        p=cond.p,
        delta=cond.delta,
        iterations=it,
        grad_norm=float(np.abs(g[solve]).max(initial=0.0)),
        wall_time=time.perf_counter() - t0,
        converged=converged,
        history=tuple(history),
    )
    return PotentialField(grid, u), res


def delta_sweep(cond: Condenser, deltas=(1e-3, 1e-4, 1e-5), tol: float = 1e-8) -> list[CapacityResult]:
    """Solve at decreasing delta, warm-starting each solve from the previous one."""
    out = []
    u = None
    for dl in deltas:
        u, res = solve_p(cond.with_(delta=dl), tol=tol, u0=u)
        out.append(res)
    return out


def solve(cond: Condenser, tol: float | None = None):
    """Dispatch to :func:`solve_p2` (p = 2, delta = 0) or :func:`solve_p`."""
    if cond.p == 2 and cond.delta == 0:
        return solve_p2(cond, tol=tol or 1e-10)
    return solve_p(cond, tol=tol or 1e-8)


# ------------------------------------------------------------------ field files

FIELD_MAGIC = "caplab-field 1"


def save_field(fld: PotentialField, path) -> None:
    """Text header (dims, h, origin) then little-endian float64 values in C order; NaN = outside."""
    g = fld.grid
    header = (
        f"{FIELD_MAGIC}\n"
        f"dims {' '.join(str(d) for d in g.dims)}\n"
        f"h {g.h!r}\n"
        f"origin {' '.join(repr(float(o)) for o in g.origin)}\n"
        "data\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(fld.u, dtype="<f8").tobytes())


def load_field(path) -> PotentialField:
    with open(path, "rb") as fh:
        lines = []
        while True:
            line = fh.readline().decode("ascii").rstrip("\n")
            if line == "data":
                break
            if not line and not lines:
                raise CapacityError("empty field file")
            lines.append(line)
        raw = fh.read()
    if not lines or lines[0] != FIELD_MAGIC:
        raise CapacityError("not a caplab field file")
    kv = {ln.split(" ", 1)[0]: ln.split(" ", 1)[1] for ln in lines[1:]}
    dims = tuple(int(v) for v in kv["dims"].split())
    u = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    grid = VoxelGrid(
        h=float(kv["h"]), origin=tuple(float(v) for v in kv["origin"].split()), occupancy=~np.isnan(u)
    )
    return PotentialField(grid, u)


def corridor_capacity(width: float, length: float, n: int, p: float) -> float:
    """Capacity of a straight prism of cross-section width^(n-1) between its end faces."""
    return width ** (n - 1) * length ** (1 - p)


def radial_capacity(p: float, r: float, R: float, n: int = 2) -> float:
    """Capacity of the annulus r < |x| < R in R^n (closed form of the radial problem)."""
    omega = 2 * math.pi if n == 2 else 4 * math.pi
    e = (1 - n) / (p - 1)
    if abs(e + 1) < 1e-14:
        integral = math.log(R / r)
    else:
        integral = (R ** (e + 1) - r ** (e + 1)) / (e + 1)
    return omega * integral ** (1 - p)
