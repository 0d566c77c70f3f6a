"""Synthetic voxel grids with known solutions, for solver verification and
convergence studies. These bypass mesh discretization: flags and fixed
potentials are set directly.
"""

from __future__ import annotations

import numpy as np

from .grid import (FLAG_BOUNDARY, FLAG_CENTER, FLAG_INTERIOR, VoxelGrid)


def shell_harmonic(r: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """Radial harmonic with value 0 at r=inner and 1 at r=outer:
    (1/inner - 1/r) / (1/inner - 1/outer)."""
    return (1.0 / inner - 1.0 / r) / (1.0 / inner - 1.0 / outer)


def spherical_shell_grid(resolution: int, inner: float = 0.5,
                         outer: float = 0.95,
                         analytic_collar: bool = True) -> VoxelGrid:
    """Concentric-shell domain on [-1, 1]^3: nodes with inner < r < outer are
    unknowns, everything else is frozen.

    With analytic_collar the frozen nodes carry the exact radial harmonic
    (boundary data manufactured from the solution, so the discrete error is
    pure truncation and converges at second order); without it they carry the
    plain 0/1 shell values.
    """
    n = resolution
    h = 2.0 / (n - 1)
    origin = np.array([-1.0, -1.0, -1.0])
    coords = origin[0] + h * np.arange(n)
    xx, yy, zz = np.meshgrid(coords, coords, coords, indexing="ij")
    r = np.sqrt(xx ** 2 + yy ** 2 + zz ** 2)

    interior = (r > inner) & (r < outer)
    flags = np.zeros((n, n, n), dtype=np.uint8)
    flags[interior] = FLAG_INTERIOR
    flags[r >= outer] = FLAG_BOUNDARY
    flags[r <= inner] = FLAG_CENTER  # frozen sink shell (not a single node)

    phi = np.zeros((n, n, n))
    if analytic_collar:
        # 1/r is singular at the origin; deep inner nodes are never read by
        # the stencil, so flooring r is safe
        phi[:] = shell_harmonic(np.maximum(r, inner / 2.0), inner, outer)
    else:
        phi[r >= outer] = 1.0
    phi[interior] = 0.5
    return VoxelGrid(origin=origin, h=h, flags=flags, phi=phi,
                     guard=np.zeros((n, n, n), dtype=np.uint8),
                     guard_layers=0)


def boxed_cavity_grid(inner: int = 9) -> VoxelGrid:
    """(inner+2)^3 grid: the outer shell is boundary at potential 1, the
    inner cube is unknown except its exact middle node, fixed at 0."""
    if inner < 3 or inner % 2 == 0:
        raise ValueError("inner must be an odd integer >= 3")
    n = inner + 2
    flags = np.full((n, n, n), FLAG_INTERIOR, dtype=np.uint8)
    flags[0, :, :] = flags[-1, :, :] = FLAG_BOUNDARY
    flags[:, 0, :] = flags[:, -1, :] = FLAG_BOUNDARY
    flags[:, :, 0] = flags[:, :, -1] = FLAG_BOUNDARY
    mid = n // 2
    flags[mid, mid, mid] = FLAG_CENTER

    phi = np.full((n, n, n), 0.5)
    phi[flags == FLAG_BOUNDARY] = 1.0
    phi[mid, mid, mid] = 0.0
    grid = VoxelGrid(origin=np.zeros(3), h=1.0, flags=flags, phi=phi,
                     guard=np.zeros((n, n, n), dtype=np.uint8),
                     guard_layers=0, center_index=(mid, mid, mid))
    return grid


def dense_stencil_solution(grid: VoxelGrid) -> np.ndarray:
    """Brute-force reference: assemble the 7-point stencil equations for the
    unknown nodes and solve the dense linear system by Gaussian elimination.
    Returns a full phi array with fixed values untouched."""
    unknown = grid.flags == FLAG_INTERIOR
    idx = np.argwhere(unknown)
    num = {tuple(p): q for q, p in enumerate(idx)}
    n_unk = len(idx)
    a = np.zeros((n_unk, n_unk))
    b = np.zeros(n_unk)
    for q, (i, j, k) in enumerate(idx):
        a[q, q] = 6.0
        for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
                           (0, 0, 1), (0, 0, -1)):
            p = (i + di, j + dj, k + dk)
            if p in num:
                a[q, num[p]] -= 1.0
            else:
                b[q] += grid.phi[p]
    x = np.linalg.solve(a, b)
    out = grid.phi.copy()
    out[unknown] = x
    return out
