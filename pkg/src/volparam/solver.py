"""Iterative 7-point finite-difference solve of the Laplace potential.

Interior nodes relax toward the mean of their six neighbours; boundary,
center and exterior nodes stay fixed. Iteration stops when the largest
per-sweep change over updatable nodes drops below the tolerance zeta.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NotConverged
from .grid import FLAG_INTERIOR, VoxelGrid

_SCHEMES = ("jacobi", "gauss-seidel", "sor")


@dataclass
class SolverConfig:
    zeta: float = 1e-4
    max_iterations: int = 1_000_000
    scheme: str = "gauss-seidel"
    omega: float = 1.5  # SOR relaxation factor

    def __post_init__(self):
        if not (0.0 < self.zeta < 1.0):
            raise ValueError(f"zeta must be in (0, 1), got {self.zeta}")
        if not (1e-6 <= self.zeta <= 1e-3):
            warnings.warn(
                f"zeta={self.zeta:g} is outside the recommended range "
                f"[1e-6, 1e-3]", stacklevel=2)
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; "
                             f"expected one of {_SCHEMES}")
        if self.scheme == "sor" and not (0.0 < self.omega < 2.0):
            raise ValueError(f"SOR omega must be in (0, 2), got {self.omega}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool

    def to_dict(self) -> dict:
        return {"iterations": self.iterations,
                "final_residual": self.final_residual,
                "converged": self.converged}


def _neighbour_mean(phi: np.ndarray) -> np.ndarray:
    """Mean of the six neighbours for every inner node, shape (n-2)^3."""
    return (phi[2:, 1:-1, 1:-1] + phi[:-2, 1:-1, 1:-1]
            + phi[1:-1, 2:, 1:-1] + phi[1:-1, :-2, 1:-1]
            + phi[1:-1, 1:-1, 2:] + phi[1:-1, 1:-1, :-2]) / 6.0


def solve(grid: VoxelGrid, cfg: SolverConfig | None = None
          ) -> tuple[VoxelGrid, SolveReport]:
    """Relax interior potentials until max |phi_new - phi_old| < zeta.

    Returns the converged grid (updated in place) and a report. Raises
    NotConverged (with the partial grid attached) when the iteration cap is
    reached first.
    """
    if cfg is None:
        cfg = SolverConfig()
    upd = grid.flags == FLAG_INTERIOR
    if not upd.any():
        raise ValueError("grid has no updatable interior nodes")
    idx = np.argwhere(upd)
    if (idx.min(axis=0) < 1).any() or (idx.max(axis=0)
                                       >= np.array(grid.dims) - 1).any():
        raise ValueError("interior nodes touch the grid shell; the stencil "
                         "needs one fixed layer on every side")

    phi = grid.phi
    core = upd[1:-1, 1:-1, 1:-1]
    if cfg.scheme == "jacobi":
        masks = [core]
        omega = 1.0
    else:
        ii, jj, kk = np.indices(grid.dims)
        parity = (ii + jj + kk) % 2 == 0
        pc = parity[1:-1, 1:-1, 1:-1]
        masks = [core & pc, core & ~pc]  # red-black ordering
        omega = cfg.omega if cfg.scheme == "sor" else 1.0

    inner = phi[1:-1, 1:-1, 1:-1]
    residual = np.inf
    for it in range(1, cfg.max_iterations + 1):
        residual = 0.0
        for m in masks:
            new = _neighbour_mean(phi)[m]
            old = inner[m]
            if omega != 1.0:
                new = old + omega * (new - old)
            residual = max(residual, float(np.abs(new - old).max()))
            inner[m] = new
        if residual < cfg.zeta:
            return grid, SolveReport(it, residual, True)

    report = SolveReport(cfg.max_iterations, residual, False)
    raise NotConverged(
        f"no convergence after {cfg.max_iterations} sweeps "
        f"(residual {residual:.3e} >= zeta {cfg.zeta:g})",
        grid=grid, report=report)


def stencil_residual(grid: VoxelGrid) -> float:
    """Max over interior nodes of |phi - mean(6 neighbours)|."""
    upd = (grid.flags == FLAG_INTERIOR)[1:-1, 1:-1, 1:-1]
    diff = np.abs(_neighbour_mean(grid.phi) - grid.phi[1:-1, 1:-1, 1:-1])
    return float(diff[upd].max())
