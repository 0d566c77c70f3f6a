"""Potential and gradient evaluation at arbitrary points via the local
trilinear fit over a cell's eight corner nodes.

The fit in world coordinates is
    phi(x, y, z) = p1*xyz + p2*xy + p3*yz + p4*zx + p5*x + p6*y + p7*z + p8
which is the standard trilinear interpolant; evaluation uses direct corner
weights (algebraically identical, fewer operations) and the gradient is the
analytic derivative of the same fit. fit_cell exposes the p-coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfDomain, UndefinedCorner
from .grid import VoxelGrid

_EDGE_TOL = 1e-9  # tolerated overshoot past the outer grid faces, in cells


def locate_cells(grid: VoxelGrid, pts: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map points to (cell index (m,3), local fraction (m,3), ok (m,)).

    ok is False for points outside the grid or in cells touching far-exterior
    nodes. Points on the outermost faces belong to the last cell.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    rel = (pts - grid.origin) / grid.h
    top = np.array(grid.dims) - 1
    ok = ((rel >= -_EDGE_TOL) & (rel <= top + _EDGE_TOL)).all(axis=1)
    idx = np.clip(np.floor(rel).astype(np.int64), 0, top - 1)
    frac = np.clip(rel - idx, 0.0, 1.0)
    safe = np.where(ok[:, None], idx, 0)
    cell_ok = grid.cell_defined()[safe[:, 0], safe[:, 1], safe[:, 2]]
    return idx, frac, ok & cell_ok


def _corner_values(grid: VoxelGrid, idx: np.ndarray) -> list[np.ndarray]:
    """Gather the 8 corner potentials per cell in x, y, z bit order."""
    i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
    phi = grid.phi
    return [phi[i + a, j + b, k + c]
            for c in (0, 1) for b in (0, 1) for a in (0, 1)]


def _trilinear_value(f, frac):
    f000, f100, f010, f110, f001, f101, f011, f111 = f
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    c00 = f000 * (1.0 - fx) + f100 * fx
    c10 = f010 * (1.0 - fx) + f110 * fx
    c01 = f001 * (1.0 - fx) + f101 * fx
    c11 = f011 * (1.0 - fx) + f111 * fx
    c0 = c00 * (1.0 - fy) + c10 * fy
    c1 = c01 * (1.0 - fy) + c11 * fy
    return c0 * (1.0 - fz) + c1 * fz


def _trilinear_gradient(f, frac, h):
    f000, f100, f010, f110, f001, f101, f011, f111 = f
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    gx = ((f100 - f000) * (1.0 - fy) * (1.0 - fz)
          + (f110 - f010) * fy * (1.0 - fz)
          + (f101 - f001) * (1.0 - fy) * fz
          + (f111 - f011) * fy * fz) / h
    gy = ((f010 - f000) * (1.0 - fx) * (1.0 - fz)
          + (f110 - f100) * fx * (1.0 - fz)
          + (f011 - f001) * (1.0 - fx) * fz
          + (f111 - f101) * fx * fz) / h
    gz = ((f001 - f000) * (1.0 - fx) * (1.0 - fy)
          + (f101 - f100) * fx * (1.0 - fy)
          + (f011 - f010) * (1.0 - fx) * fy
          + (f111 - f110) * fx * fy) / h
    return np.stack([gx, gy, gz], axis=1)


def sample_phi_many(grid: VoxelGrid, pts: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized potential sampling; returns (values, ok mask)."""
    idx, frac, ok = locate_cells(grid, pts)
    vals = _trilinear_value(_corner_values(grid, idx), frac)
    return vals, ok


def sample_gradient_many(grid: VoxelGrid, pts: np.ndarray
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized gradient sampling; returns ((m, 3) gradients, ok mask)."""
    idx, frac, ok = locate_cells(grid, pts)
    grads = _trilinear_gradient(_corner_values(grid, idx), frac, grid.h)
    return grads, ok


def sample_phi(grid: VoxelGrid, point) -> float:
    """Potential at a point; raises OutOfDomain off the defined region."""
    vals, ok = sample_phi_many(grid, point)
    if not ok[0]:
        raise OutOfDomain(f"point {np.asarray(point).tolist()} is outside the "
                          f"defined field region")
    return float(vals[0])


def sample_gradient(grid: VoxelGrid, point) -> np.ndarray:
    """Analytic gradient of the local fit; raises OutOfDomain as sample_phi."""
    grads, ok = sample_gradient_many(grid, point)
    if not ok[0]:
        raise OutOfDomain(f"point {np.asarray(point).tolist()} is outside the "
                          f"defined field region")
    return grads[0]


# ---------------------------------------------------------------------------
# explicit coefficient fit
# ---------------------------------------------------------------------------

@dataclass
class TrilinearCell:
    """World-coordinate coefficients p1..p8 of one cell's trilinear fit."""

    coefficients: np.ndarray  # (8,) ordered p1..p8
    cell: tuple[int, int, int]

    def value(self, point) -> float:
        x, y, z = np.asarray(point, dtype=np.float64)
        p = self.coefficients
        return float(p[0] * x * y * z + p[1] * x * y + p[2] * y * z
                     + p[3] * z * x + p[4] * x + p[5] * y + p[6] * z + p[7])

    def gradient(self, point) -> np.ndarray:
        x, y, z = np.asarray(point, dtype=np.float64)
        p = self.coefficients
        return np.array([p[0] * y * z + p[1] * y + p[3] * z + p[4],
                         p[0] * x * z + p[1] * x + p[2] * z + p[5],
                         p[0] * x * y + p[2] * y + p[3] * x + p[6]])


def fit_cell(grid: VoxelGrid, cell) -> TrilinearCell:
    """Fit the 8-term interpolant to one cell's corner potentials.

    The 8x8 corner system is solved in scaled local coordinates (where it is
    a fixed well-conditioned matrix of corner differences) and expanded
    exactly to the world-coordinate monomial basis, so the corner values are
    reproduced to roundoff.
    """
    i, j, k = (int(c) for c in cell)
    nx, ny, nz = grid.dims
    if not (0 <= i < nx - 1 and 0 <= j < ny - 1 and 0 <= k < nz - 1):
        raise UndefinedCorner(f"cell {cell} is outside the grid")
    if not grid.cell_defined()[i, j, k]:
        raise UndefinedCorner(f"cell {cell} touches far-exterior nodes with "
                              f"no assigned potential")
    f = grid.phi[i:i + 2, j:j + 2, k:k + 2]
    f000, f001 = f[0, 0, 0], f[0, 0, 1]
    f010, f011 = f[0, 1, 0], f[0, 1, 1]
    f100, f101 = f[1, 0, 0], f[1, 0, 1]
    f110, f111 = f[1, 1, 0], f[1, 1, 1]

    # local form sum c_abc * u^a v^b w^c with u = (x - x0)/h etc.
    c000 = f000
    c100 = f100 - f000
    c010 = f010 - f000
    c001 = f001 - f000
    c110 = f110 - f100 - f010 + f000
    c101 = f101 - f100 - f001 + f000
    c011 = f011 - f010 - f001 + f000
    c111 = f111 - f110 - f101 - f011 + f100 + f010 + f001 - f000

    x0, y0, z0 = grid.origin + grid.h * np.array([i, j, k], dtype=np.float64)
    A = 1.0 / grid.h
    ax, ay, az = -x0 * A, -y0 * A, -z0 * A

    p = np.zeros(8)
    p[0] = c111 * A ** 3                                        # xyz
    p[1] = c110 * A ** 2 + c111 * A ** 2 * az                   # xy
    p[2] = c011 * A ** 2 + c111 * A ** 2 * ax                   # yz
    p[3] = c101 * A ** 2 + c111 * A ** 2 * ay                   # zx
    p[4] = (c100 * A + c110 * A * ay + c101 * A * az
            + c111 * A * ay * az)                               # x
    p[5] = (c010 * A + c110 * A * ax + c011 * A * az
            + c111 * A * ax * az)                               # y
    p[6] = (c001 * A + c101 * A * ax + c011 * A * ay
            + c111 * A * ax * ay)                               # z
    p[7] = (c000 + c100 * ax + c010 * ay + c001 * az
            + c110 * ax * ay + c101 * ax * az + c011 * ay * az
            + c111 * ax * ay * az)                              # 1
    return TrilinearCell(p, (i, j, k))


def fit_cell_dense(grid: VoxelGrid, cell) -> TrilinearCell:
    """Reference fit: assemble and solve the raw 8x8 world-coordinate corner
    system by Gaussian elimination. Kept as a cross-check for fit_cell."""
    i, j, k = (int(c) for c in cell)
    if not grid.cell_defined()[i, j, k]:
        raise UndefinedCorner(f"cell {cell} touches far-exterior nodes with "
                              f"no assigned potential")
    rows = []
    rhs = []
    for c in (0, 1):
        for b in (0, 1):
            for a in (0, 1):
                x, y, z = grid.origin + grid.h * np.array([i + a, j + b, k + c])
                rows.append([x * y * z, x * y, y * z, z * x, x, y, z, 1.0])
                rhs.append(grid.phi[i + a, j + b, k + c])
    p = np.linalg.solve(np.asarray(rows), np.asarray(rhs))
    return TrilinearCell(p, (i, j, k))
