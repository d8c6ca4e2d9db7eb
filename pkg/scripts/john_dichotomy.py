#!/usr/bin/env python3
"""Lattice John constants of the rooms-and-corridors family for s = 1 and s = 2.

With corridors of width r_j^2 the s = 2 constant settles as generations are
added while the s = 1 constant keeps growing.
"""
import argparse
import time
import warnings
from fractions import Fraction

from caplab.constructions import RoomsAndCorridorsParams, rooms_and_corridors
from caplab.sjohn import john_constant

warnings.filterwarnings("ignore", message=".*TBB.*")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--J", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--k1", type=int, default=10, help="mesh 2^-k1 for s = 1")
    ap.add_argument("--k2", type=int, default=12, help="mesh 2^-k2 for s = 2 (slow above J = 3)")
    ap.add_argument("--samples", type=int, default=16)
    args = ap.parse_args()
    print(f"{'s':>3} {'J':>3} {'h':>10} {'C':>12} {'ratio':>7} {'time':>7}")
    for s, k in ((1.0, args.k1), (2.0, args.k2)):
        prev = None
        for J in args.J:
            spec = rooms_and_corridors(RoomsAndCorridorsParams(n=2, s=2, a=1, j_start=2, J=J))
            t0 = time.perf_counter()
            C = john_constant(spec, s, args.samples, h=Fraction(1, 2**k)).C
            ratio = f"{C / prev:7.3f}" if prev else " " * 7
            print(f"{s:3g} {J:3d} {'2^-' + str(k):>10} {C:12.4f} {ratio} {time.perf_counter() - t0:6.1f}s", flush=True)
            prev = C


if __name__ == "__main__":
    main()
