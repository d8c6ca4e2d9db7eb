"""Scaling experiments over the constructed families.

Three experiment kinds share one config and one report shape:

``sharpness``
    capacity of each room of the rooms-and-corridors domain against the
    central cube, fitted against the room edge r_j.
``counterexample``
    branching tree; content of each generation's rooms (should stay put) and
    their joint capacity (should decay geometrically in j).
``verify_thm11``
    ratio capacity / content**theta along the rooms family, with
    ``theta = (s(n-1) + 1 - p + eps) / q``; the ratio must not collapse.

Reports are deterministic: rows come back in j order whatever the worker
count, and nothing time-dependent goes into the CSV or the summary.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from .capacity import CapacityError
from .constructions import (
    BranchingTreeParams,
    RoomsAndCorridorsParams,
    branching_tree,
    rooms_and_corridors,
)
from .content import CubeFamily, dyadic_content
from .geometry import Box, DomainSpec
from .windows import default_h, global_capacity, passage_width, windowed_capacity

EXPERIMENTS = ("sharpness", "counterexample", "verify_thm11")
FAMILIES = ("rooms_and_corridors", "branching_tree")
CSV_COLUMNS = ("family", "n", "s", "p", "q", "eps", "j", "scale", "capacity", "cap_mode", "content", "ratio")
MIN_CELLS = 4


class ConfigError(ValueError):
    """Bad experiment configuration (CLI exit code 2)."""


# ------------------------------------------------------------------ fitting


@dataclass(frozen=True)
class Fit:
    slope: float
    intercept: float
    residual: float  # max |log value - fitted log value|


def fit_exponent(points: Sequence[tuple[float, float]]) -> Fit:
    """Ordinary least squares of log(value) on log(scale)."""
    if len(points) < 2:
        raise ValueError("need at least two points to fit an exponent")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(x * y)):
        raise ValueError("scales and values must be positive and finite")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("all scales coincide")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return Fit(float(slope), float(intercept), float(np.max(np.abs(resid))))


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    family: str
    n: int = 2
    s: int | float = 2
    p: float = 2.0
    q: float | None = None
    eps: float = 0.1
    j_min: int = 1
    j_max: int = 2
    construction: dict = field(default_factory=dict)  # a, j_start (rooms); mode (tree)
    target: str = "room"  # room | segment (thin plate across the room)
    h_cells: int = MIN_CELLS
    h: str | None = None  # fixed mesh width "1/1024" for every row
    mode: str = "windowed"  # windowed | global
    global_max_j: int = 0  # also run a global cross-check for j <= this
    collar: int | None = None
    tol: float | None = None
    expect_slope: float | None = None
    slope_tol: float = 0.2
    content_ratio_max: float = 2.0
    ratio_slope_min: float = -0.05
    csv: str | None = None
    summary: str | None = None
    svg: str | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}")
        if self.n not in (2, 3):
            raise ConfigError("n must be 2 or 3")
        if self.p <= 1:
            raise ConfigError("p must exceed 1")
        if self.j_min > self.j_max:
            raise ConfigError("empty generation range")
        if self.mode not in ("windowed", "global"):
            raise ConfigError("mode must be windowed or global")
        if self.target not in ("room", "segment"):
            raise ConfigError("target must be room or segment")
        if self.target == "segment" and (self.family != "rooms_and_corridors" or self.n != 2):
            raise ConfigError("the segment target is only built for 2-d rooms and corridors")
        if self.h_cells < 1:
            raise ConfigError("h_cells must be positive")
        if self.q is not None and not 0 < self.q <= self.n:
            raise ConfigError(f"q must lie in (0, n], got {self.q}")
        notes = list(self.notes)
        if self.experiment == "sharpness" and self.family != "rooms_and_corridors":
            raise ConfigError("sharpness runs on rooms_and_corridors")
        if self.experiment == "counterexample":
            if self.family != "branching_tree":
                raise ConfigError("counterexample runs on branching_tree")
            if self.q is None:
                raise ConfigError("counterexample needs q")
            edge = (self.n - 1) * self.s + 1 - self.p
            if math.isclose(self.q, edge, rel_tol=0, abs_tol=1e-12):
                raise ConfigError(
                    f"q = {self.q} sits on the borderline q = (n-1)s+1-p; this case is left open and is refused"
                )
            if not self.q < min(edge, self.n):
                raise ConfigError(f"counterexample regime needs q < min((n-1)s+1-p, n) = {min(edge, self.n)}")
        if self.experiment == "verify_thm11":
            if self.family != "rooms_and_corridors":
                raise ConfigError("verify_thm11 runs on rooms_and_corridors")
            if self.q is None:
                raise ConfigError("verify_thm11 needs q")
            if not 0 < self.eps < 1:
                raise ConfigError("eps must lie in (0, 1)")
            need = self.s * (self.n - 1) + 1 - self.p + self.eps
            if self.q < need:
                raise ConfigError(f"hypothesis q >= s(n-1)+1-p+eps fails: q = {self.q} < {need}")
            slack = self.p + self.q - self.n
            if slack < 1:
                if not self.eps < slack:
                    raise ConfigError(f"eps must also stay below p+q-n = {slack}")
                notes.append(f"eps restricted to (0, p+q-n) = (0, {slack:g}) rather than (0, 1)")
        object.__setattr__(self, "notes", tuple(notes))

    @property
    def js(self) -> list[int]:
        return list(range(self.j_min, self.j_max + 1))

    @property
    def theta(self) -> float:
        return (self.s * (self.n - 1) + 1 - self.p + self.eps) / self.q

    @property
    def predicted_slope(self) -> float | None:
        """Theoretical exponent: capacity vs r_j (sharpness), decay per generation (counterexample)."""
        if self.expect_slope is not None:
            return self.expect_slope
        if self.experiment == "sharpness":
            return (self.n - 1) * self.s + 1 - self.p
        if self.experiment == "counterexample":
            return (self.n - 1) * self.s - self.p - self.q + 1
        return None

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        data = dict(data)
        out = data.pop("output", None) or {}
        gens = data.pop("j", None)
        if gens is not None:
            if isinstance(gens, int):
                gens = [gens, gens]
            if len(gens) != 2:
                raise ConfigError("j must be an integer or [j_min, j_max]")
            data["j_min"], data["j_max"] = int(gens[0]), int(gens[1])
        for key in ("csv", "summary", "svg"):
            if key in out:
                data[key] = out.pop(key)
        if out:
            raise ConfigError(f"unknown output keys: {sorted(out)}")
        known = {f.name for f in fields(cls)} - {"notes"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "experiment" not in data or "family" not in data:
            raise ConfigError("config needs 'experiment' and 'family'")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def resolve_paths(self, base: Path) -> "ExperimentConfig":
        kw = {k: str(base / v) for k in ("csv", "summary", "svg") if (v := getattr(self, k)) and not Path(v).is_absolute()}
        return replace(self, **kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_mapping(data).resolve_paths(Path(path).parent)


# ------------------------------------------------------------------ report


@dataclass(frozen=True)
class Row:
    j: int
    scale: float
    capacity: float
    cap_mode: str
    content: float | None = None
    ratio: float | None = None
    global_capacity: float | None = None
    cells_across: float = math.inf
    flags: tuple[str, ...] = ()

    @property
    def usable(self) -> bool:
        return not self.flags


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    target: str
    passed: bool


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    rows: tuple[Row, ...]
    fits: dict[str, Fit]
    checks: tuple[Check, ...]
    notes: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def csv_text(self) -> str:
        cfg = self.config
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(
                [
                    cfg.family,
                    cfg.n,
                    _num(cfg.s),
                    _num(cfg.p),
                    _num(cfg.q),
                    _num(cfg.eps) if cfg.experiment == "verify_thm11" else "",
                    r.j,
                    _num(r.scale),
                    _num(r.capacity),
                    r.cap_mode,
                    _num(r.content),
                    _num(r.ratio),
                ]
            )
        return buf.getvalue()

    def summary_text(self) -> str:
        cfg = self.config
        lines = [f"experiment {cfg.experiment}", f"family {cfg.family} n={cfg.n} s={_num(cfg.s)} p={_num(cfg.p)} q={_num(cfg.q)}"]
        for r in self.rows:
            extra = f" global={_num(r.global_capacity)}" if r.global_capacity is not None else ""
            flag = f" [{', '.join(r.flags)}]" if r.flags else ""
            lines.append(f"  j={r.j} scale={_num(r.scale)} cap={_num(r.capacity)} ({r.cap_mode}){extra}{flag}")
        for name, f in self.fits.items():
            lines.append(f"fit {name}: slope={f.slope:.4f} intercept={f.intercept:.4f} max_residual={f.residual:.4f}")
        for c in self.checks:
            lines.append(f"check {c.name}: {c.value:.4f} target {c.target} -> {'PASS' if c.passed else 'FAIL'}")
        for note in self.notes:
            lines.append(f"note: {note}")
        lines.append("result: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines) + "\n"


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


# ------------------------------------------------------------------ workers


def workers() -> int:
    env = os.environ.get("CAPLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CAPLAB_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _map(fn: Callable, items: list) -> list:
    k = min(workers(), len(items))
    if k <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------------ domains


def build_family(cfg: ExperimentConfig, J: int) -> DomainSpec:
    c = dict(cfg.construction)
    try:
        if cfg.family == "rooms_and_corridors":
            a = int(c.pop("a", 1))
            j_start = int(c.pop("j_start", cfg.j_min))
            if c:
                raise ConfigError(f"unknown construction keys {sorted(c)}")
            return rooms_and_corridors(RoomsAndCorridorsParams(n=cfg.n, s=cfg.s, J=J, a=a, j_start=j_start))
        mode = c.pop("mode", "full")
        if c:
            raise ConfigError(f"unknown construction keys {sorted(c)}")
        return branching_tree(BranchingTreeParams(n=cfg.n, s=int(cfg.s), q=cfg.q or 1.0, J=J, mode=mode))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _scale(cfg: ExperimentConfig, j: int) -> float:
    a = int(cfg.construction.get("a", 1)) if cfg.family == "rooms_and_corridors" else 1
    return 2.0 ** (-a * j)


def _mesh(cfg: ExperimentConfig, spec: DomainSpec, j: int) -> Fraction:
    return Fraction(cfg.h) if cfg.h is not None else default_h(spec, j, cfg.h_cells)


def segment_spec(spec: DomainSpec, j: int, h: Fraction) -> DomainSpec:
    """Replace the room tag E_j by a one-cell-thick plate across the room's middle."""
    k = h.denominator.bit_length() - 1
    S = spec.rescaled(max(spec.m, k))
    (room,) = S.tags[f"E_{j}"]
    t = 2 ** (S.m - k)
    mid = (room.lo[1] + room.hi[1]) // 2
    plate = Box((room.lo[0], mid), (room.hi[0], mid + t))
    tags = dict(S.tags)
    tags[f"E_{j}"] = (plate,)
    return replace(S, tags=tags)


@dataclass(frozen=True)
class _Task:
    cfg: ExperimentConfig
    j: int
    mode: str


def _capacity_task(task: _Task) -> tuple[int, str, float]:
    cfg, j = task.cfg, task.j
    if task.mode == "global":
        # finer passages than generation j must not constrain the mesh: drop them
        spec = build_family(cfg, j)
    else:
        spec = build_family(cfg, cfg.j_max)
    h = _mesh(cfg, spec, j)
    if cfg.target == "segment":
        spec = segment_spec(spec, j, h)
    name = f"E_{j}"
    if task.mode == "global":
        _, res = global_capacity(spec, name, cfg.p, h=h, tol=cfg.tol)
    else:
        res = windowed_capacity(spec, name, cfg.p, h=h, collar=cfg.collar, tol=cfg.tol)
    return j, task.mode, res.value


def _content(spec: DomainSpec, j: int, q: float) -> float:
    return dyadic_content(CubeFamily.from_tag(spec, f"E_{j}"), q).dyadic_value


# ------------------------------------------------------------------ experiments


def _rows(cfg: ExperimentConfig, with_content: bool) -> tuple[list[Row], list[str]]:
    spec = build_family(cfg, cfg.j_max)
    mode = cfg.mode
    tasks = [_Task(cfg, j, mode) for j in cfg.js]
    if mode == "windowed":
        tasks += [_Task(cfg, j, "global") for j in cfg.js if j <= cfg.global_max_j]
    try:
        done = _map(_capacity_task, tasks)
    except CapacityError as exc:
        raise ConfigError(str(exc)) from None
    by_key = {(j, m): v for j, m, v in done}
    rows, notes = [], []
    for j in cfg.js:
        h = _mesh(cfg, spec, j)
        across = float(passage_width(spec, j) / h)
        flags = () if across >= MIN_CELLS else (f"under-resolved: {across:g} cells across the passage",)
        content = None
        if with_content and cfg.q is not None:
            src = segment_spec(spec, j, h) if cfg.target == "segment" else spec
            content = _content(src, j, cfg.q)
        rows.append(
            Row(
                j=j,
                scale=_scale(cfg, j),
                capacity=by_key[(j, mode)],
                cap_mode=mode,
                content=content,
                global_capacity=by_key.get((j, "global")) if mode == "windowed" else None,
                cells_across=across,
                flags=flags,
            )
        )
    return rows, notes


def _slope_checks(cfg: ExperimentConfig, rows: list[Row], fits: dict, checks: list, key: str, points, sign: float = 1.0):
    if len(points) < 3:
        return
    f = fit_exponent(points)
    f = Fit(sign * f.slope, f.intercept, f.residual)
    fits[key] = f
    want = cfg.predicted_slope
    if want is not None:
        checks.append(
            Check(f"{key} slope", f.slope, f"{want:.4f} +/- {cfg.slope_tol}", abs(f.slope - want) <= cfg.slope_tol)
        )


def _monotone_checks(rows: list[Row], checks: list) -> None:
    for r in rows:
        if r.global_capacity is not None:
            checks.append(
                Check(f"windowed >= global at j={r.j}", r.capacity / r.global_capacity, ">= 1", r.capacity >= r.global_capacity)
            )


def run_sharpness(cfg: ExperimentConfig) -> ExperimentReport:
    if cfg.experiment != "sharpness":
        raise ConfigError("not a sharpness config")
    rows, notes = _rows(cfg, with_content=cfg.q is not None)
    fits: dict[str, Fit] = {}
    checks: list[Check] = []
    usable = [r for r in rows if r.usable]
    _slope_checks(cfg, rows, fits, checks, "capacity vs r_j", [(r.scale, r.capacity) for r in usable])
    _monotone_checks(rows, checks)
    return ExperimentReport(cfg, tuple(rows), fits, tuple(checks), tuple(notes) + cfg.notes)


def run_counterexample(cfg: ExperimentConfig) -> ExperimentReport:
    if cfg.experiment != "counterexample":
        raise ConfigError("not a counterexample config")
    rows, notes = _rows(cfg, with_content=True)
    fits: dict[str, Fit] = {}
    checks: list[Check] = []
    contents = [r.content for r in rows]
    spread = max(contents) / min(contents)
    checks.append(Check("content max/min", spread, f"<= {cfg.content_ratio_max}", spread <= cfg.content_ratio_max))
    usable = [r for r in rows if r.usable]
    # capacity ~ C 2^{-j x}: the slope against 2^{-j} is the decay exponent x
    _slope_checks(cfg, rows, fits, checks, "capacity decay per generation", [(r.scale, r.capacity) for r in usable])
    _monotone_checks(rows, checks)
    return ExperimentReport(cfg, tuple(rows), fits, tuple(checks), tuple(notes) + cfg.notes)


def verify_thm11(cfg: ExperimentConfig) -> ExperimentReport:
    if cfg.experiment != "verify_thm11":
        raise ConfigError("not a verify_thm11 config")
    rows, notes = _rows(cfg, with_content=True)
    theta = cfg.theta
    rows = [replace(r, ratio=r.capacity / r.content**theta) for r in rows]
    fits: dict[str, Fit] = {}
    checks: list[Check] = []
    usable = [r for r in rows if r.usable]
    lowest = min(r.ratio for r in usable) if usable else 0.0
    checks.append(Check("min ratio", lowest, "> 0", lowest > 0))
    if len(usable) >= 3:
        # trend along the family: log ratio against log(1/r_j)
        f = fit_exponent([(1 / r.scale, r.ratio) for r in usable])
        fits["ratio along family"] = f
        checks.append(Check("ratio trend", f.slope, f">= {cfg.ratio_slope_min}", f.slope >= cfg.ratio_slope_min))
        fits["capacity vs r_j"] = fit_exponent([(r.scale, r.capacity) for r in usable])
        fits["content vs r_j"] = fit_exponent([(r.scale, r.content) for r in usable])
    _monotone_checks(rows, checks)
    notes = list(notes) + [f"theta = {theta:.4f}"]
    if cfg.target == "segment":
        notes.append(f"diam(E_j) scales like r_j; comparison exponent (n-1)(s-1)+eps = {(cfg.n - 1) * (cfg.s - 1) + cfg.eps:g}")
    return ExperimentReport(cfg, tuple(rows), fits, tuple(checks), tuple(notes) + cfg.notes)


RUNNERS = {"sharpness": run_sharpness, "counterexample": run_counterexample, "verify_thm11": verify_thm11}


def run(cfg: ExperimentConfig) -> ExperimentReport:
    return RUNNERS[cfg.experiment](cfg)


def write_outputs(report: ExperimentReport) -> dict[str, str]:
    """Write the CSV/summary/SVG files named in the config; returns what was written."""
    from .render import render_svg

    cfg = report.config
    written: dict[str, str] = {}
    if cfg.csv:
        Path(cfg.csv).write_text(report.csv_text())
        written["csv"] = cfg.csv
    if cfg.summary:
        Path(cfg.summary).write_text(report.summary_text())
        written["summary"] = cfg.summary
    if cfg.svg and cfg.n == 2:
        Path(cfg.svg).write_text(render_svg(build_family(cfg, cfg.j_max)))
        written["svg"] = cfg.svg
    return written
