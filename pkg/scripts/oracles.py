"""Reference values for the capacity tests, computed without the solver.

Radial condenser r < |x| < R in the plane: the minimizer is radial, so the
capacity is 2*pi * (int_r^R t^((1-n)/(p-1)) dt)^(1-p), integrated here by
adaptive quadrature.  Corridor condensers have a potential linear along the
corridor, so the value is w^(n-1) * L^(1-p) for the plate gap L.

Run it to print the numbers frozen in tests/oracles.py.
"""
import math

from scipy.integrate import quad


def radial(p: float, r: float, R: float, n: int = 2) -> float:
    e = (1 - n) / (p - 1)
    integral, err = quad(lambda t: t**e, r, R, epsabs=0, epsrel=1e-13)
    area = 2 * math.pi if n == 2 else 4 * math.pi
    return area * integral ** (1 - p)


def corridor(w: float, L: float, p: float, n: int = 2) -> float:
    return w ** (n - 1) * L ** (1 - p)


if __name__ == "__main__":
    for p in (1.5, 2.0, 3.0):
        print(f"RADIAL[{p}] = {radial(p, 0.25, 0.5)!r}")
    for p in (2.0, 3.0):
        print(f"CORRIDOR[{p}] = {corridor(0.1, 0.9, p)!r}")
    print(f"SPLIT_SQUARE = {corridor(1.0, 0.5, 2.0)!r}")
