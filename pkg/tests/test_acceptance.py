"""End-to-end acceptance checks, one per criterion.

Each ``criterion_k`` returns ``(passed, detail)``.  Under pytest the lines
are collected into the terminal summary; ``python tests/test_acceptance.py``
prints them directly.
"""
import contextlib
import io
import math
import shutil
import sys
import time
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
warnings.filterwarnings("ignore", message=".*TBB.*")

from caplab.capacity import Condenser, solve, solve_p, solve_p2  # noqa: E402
from caplab.cli import main as cli  # noqa: E402
from caplab.constructions import RoomsAndCorridorsParams, rooms_and_corridors  # noqa: E402
from caplab.content import CubeFamily, dyadic_content  # noqa: E402
from caplab.geometry import distance_field, rasterize  # noqa: E402
from caplab.harness import load_config, run  # noqa: E402
from caplab.sjohn import center_cell, john_constant, john_constant_point  # noqa: E402
from caplab.whitney import decompose, verify  # noqa: E402
from conftest import ACCEPTANCE, corridor_condenser, radial_condenser, random_domain, unit_square  # noqa: E402
from oracles import CORRIDOR, RADIAL, CoverTable, family_mask, john_exhaustive, window_families  # noqa: E402

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _rel(a, b):
    return abs(a - b) / abs(b)


def criterion_1():
    t0 = time.perf_counter()
    _, res = solve_p2(corridor_condenser(2.0))
    dt = time.perf_counter() - t0
    err = _rel(res.value, CORRIDOR[2.0])
    return err < 0.02 and dt < 10, f"p=2 corridor {res.value:.6f} vs {CORRIDOR[2.0]:.6f} ({err:.2%}), {dt:.1f} s"


def criterion_2():
    parts, ok = [], True
    t0 = time.perf_counter()
    _, res = solve(corridor_condenser(3.0))
    dt = time.perf_counter() - t0
    err = _rel(res.value, CORRIDOR[3.0])
    ok &= err < 0.05 and dt < 120
    parts.append(f"corridor p=3 {err:.2%} ({dt:.1f} s)")
    for p in (1.5, 3.0):
        t0 = time.perf_counter()
        _, res = solve(radial_condenser(p, delta=1e-6 if p < 2 else 0.0))
        dt = time.perf_counter() - t0
        err = _rel(res.value, RADIAL[p])
        ok &= err < 0.05 and dt < 120
        parts.append(f"radial p={p:g} {err:.2%} ({dt:.1f} s)")
    return ok, "; ".join(parts)


def _random_condenser(seed):
    rng = np.random.default_rng(seed)
    spec = random_domain(rng, n=2, m=3, nboxes=4)
    grid = rasterize(spec, Fraction(1, 32))
    F = np.zeros(grid.dims, dtype=bool)
    F[grid.cell_of(spec.center_point())] = True
    cells = np.argwhere(grid.occupancy)
    far = cells[np.argmax(np.abs(cells - np.argwhere(F)[0]).sum(axis=1))]
    E = np.zeros_like(F)
    E[tuple(far)] = True
    E &= ~F
    return Condenser(grid, E, F, 2.0)


def criterion_3():
    worst = 0.0
    for seed in range(5):
        cond = _random_condenser(seed)
        _, a = solve_p2(cond)
        _, b = solve_p(cond.with_(delta=1e-6))
        worst = max(worst, _rel(b.value, a.value))
    return worst < 1e-4, f"max relative gap over 5 random condensers {worst:.2e}"


def criterion_4():
    parts, ok = [], True
    t0 = time.perf_counter()
    for name in ("sharpness_n2.yaml", "sharpness_n3.yaml"):
        rep = run(load_config(CONFIGS / name))
        fit = rep.fits["capacity vs r_j"]
        ok &= rep.passed
        parts.append(f"n={rep.config.n} slope {fit.slope:.3f} (want {rep.config.predicted_slope:g})")
    dt = time.perf_counter() - t0
    ok &= dt < 900
    return ok, "; ".join(parts) + f"; {dt:.1f} s"


def criterion_5():
    t0 = time.perf_counter()
    rep = run(load_config(CONFIGS / "counterexample_tree.yaml"))
    dt = time.perf_counter() - t0
    checks = {c.name: c for c in rep.checks}
    spread = checks["content max/min"].value
    slope = rep.fits["capacity decay per generation"].slope
    want = rep.config.predicted_slope
    ok = spread <= 2 and abs(slope - want) <= 0.2 and dt < 900 and rep.passed
    return ok, f"content max/min {spread:.4f}; decay exponent {slope:.3f} vs {want:.3f}; {dt:.1f} s"


def criterion_6():
    rep = run(load_config(CONFIGS / "verify_rooms.yaml"))
    checks = {c.name: c for c in rep.checks}
    lo, trend = checks["min ratio"].value, checks["ratio trend"].value
    ok = lo > 0 and trend >= -0.05
    return ok, f"theta {rep.config.theta:.2f}; min ratio {lo:.4f}; ratio slope along the family {trend:.4f}"


def criterion_7():
    bad, total = 0, 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        n = 2 if seed < 16 else 3
        spec = random_domain(rng, n=n, m=3)
        dec = decompose(spec)
        bad += len(verify(dec, spec))
        total += len(dec.cubes)
    return bad == 0, f"20 domains, {total} Whitney cubes, {bad} violations"


def criterion_8():
    table = CoverTable()
    mismatches, checked = 0, 0
    worst_scale = 0.0
    for q in (0.5, 1.0, math.log2(3), 2.0):
        best = table.minimum(q)
        for fam in window_families(3):
            family = CubeFamily(2, fam)
            got = dyadic_content(family, q).dyadic_value
            mismatches += got != best[family_mask(fam)]
            checked += 1
            if checked % 7 == 0:
                scaled = dyadic_content(family.scaled(1), q).dyadic_value
                worst_scale = max(worst_scale, _rel(scaled, 2.0**-q * got))
    ok = mismatches == 0 and worst_scale <= 1e-12
    return ok, f"{checked} families, {mismatches} mismatches; scaling error {worst_scale:.1e}"


def criterion_9():
    def rooms(J):
        return rooms_and_corridors(RoomsAndCorridorsParams(n=2, s=2, a=1, j_start=2, J=J))

    c2 = [john_constant(rooms(J), 2.0, 16, h=Fraction(1, 2**12)).C for J in (3, 4)]
    stable = _rel(c2[1], c2[0])
    c1 = [john_constant(rooms(J), 1.0, 16, h=Fraction(1, 2**10)).C for J in (2, 3, 4)]
    growth = [b / a for a, b in zip(c1, c1[1:])]
    sq = unit_square()
    grid = rasterize(sq, Fraction(1, 8))
    dist = distance_field(sq, grid)
    x0 = center_cell(sq, grid)
    oracle = 0.0
    for s in (1.0, 2.0):
        for x in map(tuple, np.argwhere(grid.occupancy)):
            ref = john_exhaustive(grid.occupancy, dist.values, grid.h, x, x0, s)
            got = john_constant_point(grid, dist, x, x0, s).C
            if ref > 0:
                oracle = max(oracle, _rel(got, ref))
    ok = stable <= 0.10 and min(growth) >= 1.5 and oracle <= 0.10
    return ok, (
        f"2-John {c2[0]:.2f} -> {c2[1]:.2f} ({stable:.1%}); 1-John growth "
        + " ".join(f"x{g:.2f}" for g in growth)
        + f"; 8x8 oracle gap {oracle:.1e}"
    )


def criterion_10():
    import tempfile

    ok, sizes = True, []
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        (d / "out").mkdir()
        for name in ("sharpness_n2.yaml", "verify_rooms.yaml"):
            shutil.copy(CONFIGS / name, d / name)
            cfg = load_config(d / name)
            outs = [Path(p) for p in (cfg.csv, cfg.summary, cfg.svg) if p]
            snaps = []
            for _ in range(2):
                for p in outs:
                    p.unlink(missing_ok=True)
                with contextlib.redirect_stdout(io.StringIO()):
                    cli(["experiment", "--config", str(d / name)])
                snaps.append([p.read_bytes() for p in outs])
            ok &= snaps[0] == snaps[1]
            sizes += [len(b) for b in snaps[0]]
    return ok, f"{len(sizes)} output files byte-identical across two runs"


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 11)}


SLOW = {5, 9, 10}


@pytest.mark.parametrize("k", [pytest.param(k, marks=pytest.mark.slow) if k in SLOW else k for k in sorted(CRITERIA)])
def test_criterion(k, capsys):
    with capsys.disabled():
        passed, detail = CRITERIA[k]()
    ACCEPTANCE[k] = f"{'PASS' if passed else 'FAIL'} criterion {k}: {detail}"
    assert passed, detail


if __name__ == "__main__":
    for k, fn in CRITERIA.items():
        passed, detail = fn()
        print(f"{'PASS' if passed else 'FAIL'} criterion {k}: {detail}", flush=True)
