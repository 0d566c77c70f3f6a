"""Shared fixtures: meshes, solved grids, and full pipeline cases.

Solving is the expensive part, so each named case is built once per session
and reused across test modules.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pytest

from volparam.grid import (GridConfig, apply_boundary_conditions,
                           choose_center, discretize)
from volparam.mapper import Atlas, MappingContext, build_atlas, build_mapping
from volparam.shapes import box, icosphere, lshape, star5, two_lobe
from volparam.solver import SolverConfig, solve
from volparam.tracer import TracerConfig, trace_all

# one standard configuration per shipped shape (used by most mapping tests
# and by the acceptance suite)
SHAPE_BUILDERS = {
    "sphere": lambda: icosphere(3),
    "star5": star5,
    "two_lobe": two_lobe,
    "box": box,
    "lshape": lshape,
}
STANDARD_RESOLUTION = 32


@dataclass
class SolvedCase:
    name: str
    mesh: object
    grid: object
    lines: list
    atlas: Atlas
    ctx: MappingContext

    @property
    def center(self) -> np.ndarray:
        return self.grid.center_position()

    @property
    def stop_radius(self) -> float:
        return (TracerConfig().stop_radius_cells(self.grid.center_depth_cells)
                * self.grid.h)


def build_case(name: str, resolution: int = STANDARD_RESOLUTION,
               zeta: float = 1e-6, scheme: str = "sor", omega: float = 1.9,
               tracer_cfg: TracerConfig | None = None) -> SolvedCase:
    mesh = SHAPE_BUILDERS[name]()
    cfg = GridConfig(resolution=resolution)
    grid = discretize(mesh, cfg)
    choose_center(grid)
    apply_boundary_conditions(grid, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        solve(grid, SolverConfig(zeta=zeta, scheme=scheme, omega=omega))
    lines = trace_all(grid, mesh, tracer_cfg or TracerConfig())
    atlas = build_atlas(mesh, lines, grid.center_position())
    ctx = build_mapping(lines, grid.center_position())
    return SolvedCase(name, mesh, grid, lines, atlas, ctx)


@pytest.fixture(scope="session")
def solved():
    """Factory: solved().get('sphere') -> SolvedCase (cached per session)."""
    cache: dict[str, SolvedCase] = {}

    class Factory:
        def get(self, name: str) -> SolvedCase:
            if name not in cache:
                cache[name] = build_case(name)
            return cache[name]

    return Factory()


@pytest.fixture(scope="session")
def solved_sphere(solved) -> SolvedCase:
    return solved.get("sphere")


@pytest.fixture()
def octahedron_off(tmp_path):
    """Regular octahedron: 6 vertices, 8 faces, V - E + F = 6 - 12 + 8 = 2."""
    text = "\n".join([
        "OFF",
        "6 8 12",
        "1 0 0", "-1 0 0", "0 1 0", "0 -1 0", "0 0 1", "0 0 -1",
        "3 0 2 4", "3 2 1 4", "3 1 3 4", "3 3 0 4",
        "3 2 0 5", "3 1 2 5", "3 3 1 5", "3 0 3 5",
    ]) + "\n"
    path = tmp_path / "octahedron.off"
    path.write_text(text)
    return path
