"""Command line entry point: ``caplab <subcommand> ...``."""
from __future__ import annotations

import argparse
import sys
import warnings
from fractions import Fraction
from pathlib import Path

from . import domain_io
from .geometry import GeometryError


def _out(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _cell(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated cell indices, got {text!r}") from None


# ------------------------------------------------------------------ subcommands


def cmd_build(args) -> int:
    from .constructions import (
        BranchingTreeParams,
        RoomsAndCorridorsParams,
        branching_tree,
        room_passage_replacement,
        rooms_and_corridors,
    )
    from .whitney import decompose

    if args.family == "rooms":
        spec = rooms_and_corridors(
            RoomsAndCorridorsParams(n=args.n, s=args.s, J=args.J, a=args.a, j_start=args.j_start)
        )
    elif args.family == "tree":
        if args.s.denominator != 1:
            raise GeometryError("the tree needs an integral s")
        spec = branching_tree(BranchingTreeParams(n=args.n, s=int(args.s), q=args.q, J=args.J, mode=args.mode))
    else:
        if not args.base:
            raise GeometryError("--family replacement needs --base DOMAIN")
        base = domain_io.load(args.base)
        spec = room_passage_replacement(base, args.s, decompose(base, args.max_generation))
    _out(domain_io.emit(spec), args.output)
    return 0


def cmd_whitney(args) -> int:
    from .whitney import decompose, verify

    spec = domain_io.load(args.domain)
    dec = decompose(spec, args.max_generation)
    lines = [f"# whitney n={dec.n} max_generation={dec.max_generation}", "# k pos..."]
    central = dec.central_cube
    for c in dec.cubes:
        mark = " *" if c == central else ""
        lines.append(f"{c.k} {' '.join(map(str, c.pos))}{mark}")
    for c in dec.residual:
        lines.append(f"r {c.k} {' '.join(map(str, c.pos))}")
    counts = " ".join(f"{k}:{v}" for k, v in dec.generation_counts().items())
    report = [f"cubes {len(dec.cubes)} residual {len(dec.residual)} per-generation {counts}"]
    status = 0
    if args.verify:
        bad = verify(dec, spec)
        report.append(f"violations {len(bad)}")
        report += [f"  {v.kind}: {v.detail}" for v in bad[:20]]
        status = 1 if bad else 0
    if args.output:
        _out("\n".join(lines) + "\n", args.output)
    elif not args.summary:
        sys.stdout.write("\n".join(lines) + "\n")
    sys.stdout.write("\n".join(report) + "\n")
    return status


def read_family(path) -> "CubeFamily":
    """Cube list file: ``n <dim>`` then one ``k p1 .. pn`` line per cube; ``#`` comments."""
    from .content import ContentError, CubeFamily

    n, cubes = None, []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        try:
            if line[0] == "n" and n is None:
                n = int(line[1])
            else:
                vals = [int(v) for v in line]
                cubes.append((vals[0], tuple(vals[1:])))
        except (ValueError, IndexError):
            raise ContentError(f"line {lineno}: cannot parse {raw!r}") from None
    if n is None:
        raise ContentError("cube list needs an 'n <dim>' line")
    return CubeFamily(n, tuple(cubes))


def cmd_content(args) -> int:
    from .content import CubeFamily, dyadic_content

    if args.family:
        fam = read_family(args.family)
    elif args.domain and args.set:
        fam = CubeFamily.from_tag(domain_io.load(args.domain), args.set)
    else:
        raise GeometryError("give --family FILE, or --domain FILE with --set NAME")
    res = dyadic_content(fam, args.q)
    counts = " ".join(f"{k}:{v}" for k, v in res.counts.items())
    sys.stdout.write(
        f"q {res.q!r}\ncubes {len(fam.cubes)}\ndyadic {res.dyadic_value!r}\nball_upper {res.ball_upper!r}\n"
        f"comparability {res.c_lo!r} {res.c_hi!r}\ncover {counts}\n"
    )
    return 0


def _result_text(res) -> str:
    return (
        f"value {res.value!r}\nmode {res.mode}\nupper_bound {str(res.upper_bound).lower()}\nlegs {res.legs}\n"
        f"h {res.h!r}\np {res.p!r}\ndelta {res.delta!r}\niterations {res.iterations}\n"
        f"grad_norm {res.grad_norm:.3e}\nconverged {str(res.converged).lower()}\nwall_time {res.wall_time:.2f}\n"
    )


def cmd_capacity(args) -> int:
    from .capacity import save_field
    from .windows import global_capacity, leg_field, windowed_capacity

    spec = domain_io.load(args.domain)
    if args.window:
        if args.field:
            fld, _ = leg_field(spec, args.set, 0, args.p, args.h, args.collar, args.delta)
            save_field(fld, args.field)
        res = windowed_capacity(spec, args.set, args.p, args.h, args.collar, args.delta, args.tol)
    else:
        fld, res = global_capacity(spec, args.set, args.p, args.h, args.delta, args.tol)
        if args.field:
            save_field(fld, args.field)
    sys.stdout.write(_result_text(res))
    return 0 if res.converged else 1


def cmd_sjohn(args) -> int:
    from .geometry import distance_field, rasterize
    from .sjohn import center_cell, john_constant, john_constant_point

    spec = domain_io.load(args.domain)
    grid = rasterize(spec, args.h)
    dist = distance_field(spec, grid)
    if args.point:
        pts = [john_constant_point(grid, dist, args.point, center_cell(spec, grid), args.s, args.tol)]
        C = pts[0].C
    else:
        est = john_constant(spec, args.s, args.samples, tol=args.tol, grid=grid, dist=dist)
        pts, C = [est.worst], est.C
    sys.stdout.write(f"s {args.s!r}\nh {grid.h!r}\nC {C!r}\n")
    for pc in pts:
        sys.stdout.write(f"point {','.join(map(str, pc.x))} C {pc.C!r} length {pc.path_length}\n")
        if args.paths:
            sys.stdout.write("path " + " ".join(",".join(map(str, c)) for c in pc.path) + "\n")
    return 0


def cmd_experiment(args) -> int:
    from .harness import ConfigError, load_config, run, write_outputs

    try:
        cfg = load_config(args.config)
        report = run(cfg)
    except ConfigError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return 2
    write_outputs(report)
    sys.stdout.write(report.summary_text())
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="caplab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="emit a constructed domain")
    b.add_argument("--family", choices=("rooms", "tree", "replacement"), required=True)
    b.add_argument("--n", type=int, default=2)
    b.add_argument("--s", type=_fraction, default=Fraction(2))
    b.add_argument("--q", type=float, default=1.0)
    b.add_argument("--J", type=int, default=2)
    b.add_argument("--mode", choices=("full", "thinned"), default="full")
    b.add_argument("--a", type=int, default=1, help="rooms: r_j = 2^(-a j)")
    b.add_argument("--j-start", type=int, default=1)
    b.add_argument("--base", help="replacement: base domain file")
    b.add_argument("--max-generation", type=int)
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_build)

    w = sub.add_parser("whitney", help="Whitney cubes of a domain")
    w.add_argument("domain")
    w.add_argument("--max-generation", type=int)
    w.add_argument("--verify", action="store_true")
    w.add_argument("--summary", action="store_true", help="print only the counts and the report")
    w.add_argument("-o", "--output", help="write the cube list here")
    w.set_defaults(func=cmd_whitney)

    c = sub.add_parser("content", help="dyadic q-content of a cube family or a tagged set")
    c.add_argument("--q", type=float, required=True)
    c.add_argument("--family", help="cube list file")
    c.add_argument("--domain")
    c.add_argument("--set")
    c.set_defaults(func=cmd_content)

    k = sub.add_parser("capacity", help="p-capacity of a tagged set against the central cube")
    k.add_argument("domain")
    k.add_argument("--set", required=True, help="tagged set, e.g. E_2")
    k.add_argument("--p", type=float, default=2.0)
    k.add_argument("--h", type=_fraction)
    k.add_argument("--delta", type=float, default=0.0)
    k.add_argument("--tol", type=float)
    k.add_argument("--collar", type=int)
    mode = k.add_mutually_exclusive_group()
    mode.add_argument("--window", dest="window", action="store_true", default=True)
    mode.add_argument("--global", dest="window", action="store_false")
    k.add_argument("--field", help="write the potential here")
    k.set_defaults(func=cmd_capacity)

    j = sub.add_parser("sjohn", help="lattice s-John constant")
    j.add_argument("domain")
    j.add_argument("--s", type=float, required=True)
    j.add_argument("--h", type=_fraction, required=True)
    j.add_argument("--samples", type=int, default=64)
    j.add_argument("--point", type=_cell)
    j.add_argument("--tol", type=float, default=1e-3)
    j.add_argument("--paths", action="store_true", help="print witness paths")
    j.set_defaults(func=cmd_sjohn)

    e = sub.add_parser("experiment", help="run a configured experiment")
    e.add_argument("--config", required=True)
    e.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    # numba probes for TBB before falling back to another threading layer
    warnings.filterwarnings("ignore", message=".*TBB.*")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GeometryError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
