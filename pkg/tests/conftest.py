import sys
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))
warnings.filterwarnings("ignore", message=".*TBB.*")

from caplab.capacity import Condenser  # noqa: E402
from caplab.geometry import Box, DomainSpec, VoxelGrid, boxes_connected  # noqa: E402

settings.register_profile(
    "caplab", deadline=None, derandomize=True, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("caplab")

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])


# ------------------------------------------------------------------ builders


def unit_square() -> DomainSpec:
    return DomainSpec(n=2, m=1, boxes=(Box((0, 0), (2, 2)),), center=(1, 1))


def unit_cube() -> DomainSpec:
    return DomainSpec(n=3, m=1, boxes=(Box((0, 0, 0), (2, 2, 2)),), center=(1, 1, 1))


def random_domain(rng: np.random.Generator, n: int = 2, m: int = 3, nboxes: int = 4) -> DomainSpec:
    """Connected union of random boxes at scale 2**m; the center sits inside the first box."""
    U = 2**m
    while True:
        boxes = []
        for _ in range(nboxes):
            lo = rng.integers(0, U - 1, size=n)
            size = rng.integers(2, U // 2 + 1, size=n)
            hi = np.minimum(lo + size, U)
            boxes.append(Box(tuple(int(v) for v in lo), tuple(int(v) for v in hi)))
        if min(b.hi[k] - b.lo[k] for b in boxes for k in range(n)) < 2:
            continue
        if not boxes_connected(boxes):
            continue
        center = tuple(b + 1 for b in boxes[0].lo)
        return DomainSpec(n=n, m=m, boxes=tuple(boxes), center=center)


def corridor_condenser(p: float, h: float = 0.0125, delta: float = 0.0) -> Condenser:
    """[0,1] x [0,0.1] with plates on the first and last 0.05."""
    grid = VoxelGrid.from_boxes([((0, 0), (1, 0.1))], h)
    E = grid.mask_of_boxes([((0, 0), (0.05, 0.1))])
    F = grid.mask_of_boxes([((0.95, 0), (1, 0.1))])
    return Condenser(grid, E, F, p, delta)


def radial_condenser(p: float, h: float = 1 / 256, delta: float = 0.0) -> Condenser:
    """Disk of radius 1/2 around (1/2, 1/2); E the disk of radius 1/4, F the outermost ring of cells."""
    k = round(1 / h)
    c = (np.arange(k) + 0.5) * h - 0.5
    R = np.hypot(c[:, None], c[None, :])
    occ = R < 0.5
    grid = VoxelGrid(h=h, origin=(0.0, 0.0), occupancy=occ)
    return Condenser(grid, occ & (R <= 0.25), occ & (R > 0.5 - h), p, delta)


@pytest.fixture
def square():
    return unit_square()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

