"""Regular voxel grid: discretization, node classification, shape center,
and the Dirichlet boundary conditions with external guard layers.

Node classification:
  - barrier nodes (end nodes of lattice edges crossed by a surface triangle)
    block a 6-connected flood fill from the grid shell;
  - nodes reached by the fill are Exterior;
  - non-exterior nodes 6-adjacent to Exterior form the Boundary (a one-node
    seal); everything else enclosed is Interior;
  - boundary nodes with no interior neighbour (unresolvable slivers, sharp
    corners) are dropped to Exterior so that every boundary node touches
    both sides.

Potentials: boundary 1, shape center 0, exterior guard layer k holds 1 + k*eps
so the outward gradient keeps streamlines inside the domain; far exterior is
frozen at the last guard value and excluded from sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import NoInterior, ResolutionTooCoarse
from .mesh_io import SurfaceMesh

FLAG_EXTERIOR = 0
FLAG_BOUNDARY = 1
FLAG_INTERIOR = 2
FLAG_CENTER = 3

# 6-connectivity structuring element
_CROSS = ndimage.generate_binary_structure(3, 1)


@dataclass
class GridConfig:
    """Grid construction parameters.

    resolution counts nodes across the longest edge of the mesh bounding box;
    padding layers of empty nodes are added outside the box on every side, so
    the stored grid has resolution + 2*padding nodes per axis.
    """

    resolution: int = 32
    padding: int = 6
    epsilon: float = 1e-4
    guard_layers: int = 4
    random_init: bool = False
    init_seed: int = 0

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2 nodes")
        if not (0.0 < self.epsilon <= 1.0e-3):
            raise ValueError(f"epsilon must be in (0, 1e-3], got {self.epsilon}")
        if self.guard_layers < 1:
            raise ValueError("guard_layers must be >= 1")
        if self.padding < self.guard_layers + 1:
            raise ValueError(
                f"padding ({self.padding}) must be >= guard_layers + 1 "
                f"({self.guard_layers + 1})")


@dataclass
class VoxelGrid:
    """Cubical node grid with per-node classification and potential.

    flags  : uint8 (nx, ny, nz), FLAG_* codes
    guard  : uint8, exterior nodes only: 1..guard_layers for the ramp layers,
             guard_layers + 1 for far exterior, 0 on non-exterior nodes
    phi    : float64 potential
    """

    origin: np.ndarray
    h: float
    flags: np.ndarray
    phi: np.ndarray
    guard: np.ndarray
    guard_layers: int = 4
    epsilon: float = 1e-4
    center_index: tuple[int, int, int] | None = None
    center_depth_cells: float = 0.0  # chamfer depth of the center, in spacings
    _defined: np.ndarray | None = field(default=None, repr=False, compare=False)
    _cell_ok: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.phi.shape

    def node_position(self, idx) -> np.ndarray:
        return self.origin + self.h * np.asarray(idx, dtype=np.float64)

    def linear_index(self, i, j, k) -> int:
        # x-fastest ordering, matching the field-file layout
        nx, ny, _ = self.dims
        return int(i) + nx * (int(j) + ny * int(k))

    def center_position(self) -> np.ndarray:
        if self.center_index is None:
            raise NoInterior("grid has no shape center")
        return self.node_position(self.center_index)

    def invalidate_caches(self) -> None:
        self._defined = None
        self._cell_ok = None

    def defined_mask(self) -> np.ndarray:
        """Nodes carrying a usable potential: everything except far exterior."""
        if self._defined is None:
            self._defined = (self.flags != FLAG_EXTERIOR) | (
                (self.guard >= 1) & (self.guard <= self.guard_layers))
        return self._defined

    def cell_defined(self) -> np.ndarray:
        """(nx-1, ny-1, nz-1) mask of cells whose 8 corners are all defined."""
        if self._cell_ok is None:
            d = self.defined_mask()
            self._cell_ok = (d[:-1, :-1, :-1] & d[1:, :-1, :-1]
                             & d[:-1, 1:, :-1] & d[1:, 1:, :-1]
                             & d[:-1, :-1, 1:] & d[1:, :-1, 1:]
                             & d[:-1, 1:, 1:] & d[1:, 1:, 1:])
        return self._cell_ok

    def validate(self) -> None:
        """Check the classification invariants (test/diagnostic helper)."""
        fl = self.flags
        n_center = int((fl == FLAG_CENTER).sum())
        if n_center != 1:
            raise ValueError(f"expected exactly one center node, found {n_center}")
        ext = fl == FLAG_EXTERIOR
        solid = (fl == FLAG_INTERIOR) | (fl == FLAG_CENTER)
        bnd = fl == FLAG_BOUNDARY
        next_to_ext = ndimage.binary_dilation(ext, _CROSS)
        next_to_solid = ndimage.binary_dilation(solid, _CROSS)
        if not (next_to_ext[bnd].all() and next_to_solid[bnd].all()):
            raise ValueError("boundary node missing an exterior or interior "
                             "6-neighbour")
        if next_to_ext[solid].any():
            raise ValueError("interior node 6-adjacent to exterior")
        _, ncomp = ndimage.label(solid, structure=_CROSS)
        if ncomp != 1:
            raise ValueError(f"interior is split into {ncomp} components")


# ---------------------------------------------------------------------------
# triangle / cell overlap marking
# ---------------------------------------------------------------------------

def _mark_crossed_edges(mesh: SurfaceMesh, origin, h, dims) -> np.ndarray:
    """Boolean node mask: both end nodes of every lattice edge crossed by a
    surface triangle.

    Any 6-connected path from inside to outside must traverse a crossing
    edge, and both of its nodes are marked, so the mask is a leak-proof
    barrier for the exterior flood fill while staying within one cell of the
    surface.
    """
    marked = np.zeros(dims, dtype=bool)
    tri = mesh.vertices[mesh.triangles]  # (m, 3, 3)
    bary_eps = 1e-9

    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        a = tri[:, 0]
        d1 = tri[:, 1] - a
        d2 = tri[:, 2] - a
        det = d1[:, u] * d2[:, v] - d1[:, v] * d2[:, u]
        lo = np.floor((tri.min(axis=1) - origin) / h - 1e-12).astype(np.int64)
        hi = np.ceil((tri.max(axis=1) - origin) / h + 1e-12).astype(np.int64)
        lo = np.maximum(lo, 0)
        hi_u = np.minimum(hi[:, u], dims[u] - 1)
        hi_v = np.minimum(hi[:, v], dims[v] - 1)
        for t in range(len(tri)):
            if abs(det[t]) < 1e-14:
                continue  # edge-on for this axis; caught via the other two
            iu = np.arange(lo[t, u], hi_u[t] + 1)
            iv = np.arange(lo[t, v], hi_v[t] + 1)
            if iu.size == 0 or iv.size == 0:
                continue
            gu, gv = np.meshgrid(iu, iv, indexing="ij")
            pu = origin[u] + gu.ravel() * h - a[t, u]
            pv = origin[v] + gv.ravel() * h - a[t, v]
            alpha = (pu * d2[t, v] - d2[t, u] * pv) / det[t]
            beta = (d1[t, u] * pv - d1[t, v] * pu) / det[t]
            inside = ((alpha >= -bary_eps) & (beta >= -bary_eps)
                      & (alpha + beta <= 1.0 + bary_eps))
            if not inside.any():
                continue
            cross = (a[t, axis] + alpha[inside] * d1[t, axis]
                     + beta[inside] * d2[t, axis])
            k = np.floor((cross - origin[axis]) / h).astype(np.int64)
            k = np.clip(k, 0, dims[axis] - 2)
            nodes = np.empty((k.size * 2, 3), dtype=np.int64)
            nodes[:k.size, u] = nodes[k.size:, u] = gu.ravel()[inside]
            nodes[:k.size, v] = nodes[k.size:, v] = gv.ravel()[inside]
            nodes[:k.size, axis] = k
            nodes[k.size:, axis] = k + 1
            marked[nodes[:, 0], nodes[:, 1], nodes[:, 2]] = True
    return marked


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def discretize(mesh: SurfaceMesh, cfg: GridConfig) -> VoxelGrid:
    """Classify every node of the padded grid and initialize potentials.

    Raises ResolutionTooCoarse when the interior is empty or splits into
    several 6-connected components at this resolution.
    """
    if cfg.resolution < 8:
        raise ResolutionTooCoarse(
            f"resolution {cfg.resolution} is below the minimum of 8 nodes")
    bb_min, bb_max = mesh.bounding_box
    longest = float((bb_max - bb_min).max())
    if longest <= 0:
        raise ResolutionTooCoarse("mesh bounding box has zero extent")
    h = longest / (cfg.resolution - 1)
    # odd node count puts a node exactly at the box center, so symmetric
    # domains get an exactly centered sink (and a deterministic deepest node)
    n = cfg.resolution + 2 * cfg.padding
    n += (n + 1) % 2
    dims = (n, n, n)
    center = 0.5 * (bb_min + bb_max)
    origin = center - 0.5 * (n - 1) * h * np.ones(3)

    barrier = _mark_crossed_edges(mesh, origin, h, dims)

    # flood fill from the grid shell through non-barrier nodes
    labels, _ = ndimage.label(~barrier, structure=_CROSS)
    exterior = (labels == labels[0, 0, 0]) & ~barrier

    enclosed = ~exterior
    boundary = enclosed & ndimage.binary_dilation(exterior, _CROSS)
    interior = enclosed & ~boundary

    # boundary nodes with no interior 6-neighbour cannot seal anything useful;
    # drop them to exterior (their non-exterior neighbours are boundary too)
    keep = ndimage.binary_dilation(interior, _CROSS)
    dropped = boundary & ~keep
    if dropped.any():
        boundary &= keep
        exterior |= dropped

    if not interior.any():
        raise ResolutionTooCoarse(
            f"no interior nodes at resolution {cfg.resolution}; the mesh is "
            f"thinner than one grid cell somewhere")
    _, ncomp = ndimage.label(interior, structure=_CROSS)
    if ncomp != 1:
        raise ResolutionTooCoarse(
            f"interior splits into {ncomp} components at resolution "
            f"{cfg.resolution}")

    flags = np.zeros(dims, dtype=np.uint8)
    flags[boundary] = FLAG_BOUNDARY
    flags[interior] = FLAG_INTERIOR

    grid = VoxelGrid(origin=origin, h=h, flags=flags,
                     phi=np.zeros(dims), guard=np.zeros(dims, dtype=np.uint8),
                     guard_layers=cfg.guard_layers, epsilon=cfg.epsilon)
    _compute_guard(grid)
    _apply_fixed_values(grid, cfg)
    return grid


def _compute_guard(grid: VoxelGrid) -> None:
    """Label exterior nodes with their 6-connected BFS distance from the
    boundary, capped at guard_layers + 1 (the far-exterior sentinel)."""
    ext = grid.flags == FLAG_EXTERIOR
    guard = np.zeros(grid.dims, dtype=np.uint8)
    frontier = (grid.flags == FLAG_BOUNDARY)
    assigned = ~ext
    for k in range(1, grid.guard_layers + 1):
        frontier = ndimage.binary_dilation(frontier, _CROSS) & ext & ~assigned
        if not frontier.any():
            break
        guard[frontier] = k
        assigned |= frontier
    far = ext & ~assigned
    guard[far] = grid.guard_layers + 1
    grid.guard = guard
    grid.invalidate_caches()


def rebuild_guard_layers(grid: VoxelGrid) -> None:
    """Recover guard bookkeeping for a grid loaded from a field file.

    The ramp depth is inferred from the number of distinct exterior
    potentials (layer k holds 1 + k*eps, far exterior repeats the last value).
    """
    ext = grid.flags == FLAG_EXTERIOR
    if not ext.any():
        grid.guard_layers = 0
        grid.guard = np.zeros(grid.dims, dtype=np.uint8)
        grid.invalidate_caches()
        return
    values = np.unique(grid.phi[ext])
    grid.guard_layers = max(1, len(values))
    if len(values) and values.min() > 1.0:
        grid.epsilon = float(values.min() - 1.0)
    _compute_guard(grid)


def _apply_fixed_values(grid: VoxelGrid, cfg: GridConfig) -> None:
    fl = grid.flags
    grid.phi[fl == FLAG_BOUNDARY] = 1.0
    grid.phi[fl == FLAG_CENTER] = 0.0
    for k in range(1, cfg.guard_layers + 1):
        grid.phi[grid.guard == k] = 1.0 + k * cfg.epsilon
    grid.phi[grid.guard == cfg.guard_layers + 1] = 1.0 + cfg.guard_layers * cfg.epsilon
    interior = fl == FLAG_INTERIOR
    if cfg.random_init:
        rng = np.random.default_rng(cfg.init_seed)
        grid.phi[interior] = rng.uniform(0.05, 0.95, size=int(interior.sum()))
    else:
        grid.phi[interior] = 0.5
    grid.invalidate_caches()


def apply_boundary_conditions(grid: VoxelGrid, cfg: GridConfig) -> VoxelGrid:
    """(Re)assert every fixed potential and reset interior start values.

    Idempotent: fixed nodes are rewritten with identical values. Requires a
    chosen center so that the zero-potential sink exists; a grid with no
    interior at all has only fixed nodes and is handled vacuously.
    """
    has_interior = bool((grid.flags == FLAG_INTERIOR).any())
    if grid.center_index is None and has_interior:
        raise NoInterior("choose a shape center before applying boundary "
                         "conditions")
    grid.guard_layers = cfg.guard_layers
    grid.epsilon = cfg.epsilon
    _compute_guard(grid)
    _apply_fixed_values(grid, cfg)
    return grid


# ---------------------------------------------------------------------------
# shape center
# ---------------------------------------------------------------------------

def chamfer_distance(sources: np.ndarray) -> np.ndarray:
    """Two-pass 3-4-5 chamfer distance transform from a boolean source mask.

    Returns int64 weighted distances (3 per face step, 4 per edge step, 5 per
    vertex step); exact for this mask family.
    """
    big = np.int64(1) << 40
    d = np.where(sources, np.int64(0), big)
    _chamfer_sweep(d)
    _chamfer_sweep(d[::-1, ::-1, ::-1])
    return d


def _chamfer_sweep(d: np.ndarray) -> None:
    """Forward raster sweep (in place) over the half-neighbourhood."""
    nx, ny, nz = d.shape
    pad = np.int64(1) << 40

    def shifted(plane, di, dj):
        out = np.full(plane.shape, pad, dtype=np.int64)
        src = plane[max(0, -di):plane.shape[0] - max(0, di),
                    max(0, -dj):plane.shape[1] - max(0, dj)]
        out[max(0, di):plane.shape[0] - max(0, -di),
            max(0, dj):plane.shape[1] - max(0, -dj)] = src
        return out

    w_in_plane = [((0, -1), 3), ((-1, -1), 4), ((1, -1), 4)]
    w_prev_plane = [((0, 0), 3),
                    ((-1, 0), 4), ((1, 0), 4), ((0, -1), 4), ((0, 1), 4),
                    ((-1, -1), 5), ((1, -1), 5), ((-1, 1), 5), ((1, 1), 5)]

    ramp = 3 * np.arange(nx, dtype=np.int64)
    for k in range(nz):
        plane = d[:, :, k]
        if k > 0:
            prev = d[:, :, k - 1]
            for (di, dj), w in w_prev_plane:
                np.minimum(plane, shifted(prev, di, dj) + w, out=plane)
        # in-plane rows in scan order, then the i-1 offset as a prefix scan
        for j in range(ny):
            row = plane[:, j]
            if j > 0:
                prevrow = plane[:, j - 1]
                np.minimum(row, prevrow + 3, out=row)
                np.minimum(row[1:], prevrow[:-1] + 4, out=row[1:])
                np.minimum(row[:-1], prevrow[1:] + 4, out=row[:-1])
            np.minimum(row, np.minimum.accumulate(row - ramp) + ramp, out=row)


def choose_center(grid: VoxelGrid) -> tuple[int, int, int]:
    """Pick the interior node deepest inside the domain and flag it as the
    potential sink.

    Deepest = maximal chamfer distance to the nearest boundary node; ties are
    broken by the smallest linearized (x-fastest) node index, so the choice
    is deterministic. Re-entrant: a previously chosen center is released.
    """
    if grid.center_index is not None:
        grid.flags[grid.center_index] = FLAG_INTERIOR
        grid.center_index = None
    interior = grid.flags == FLAG_INTERIOR
    if not interior.any():
        raise NoInterior("grid has no interior nodes")
    dist = chamfer_distance(grid.flags == FLAG_BOUNDARY)
    dist_int = np.where(interior, dist, np.int64(-1))
    best = dist_int.max()
    cand = np.argwhere(dist_int == best)
    lin = cand[:, 0] + grid.dims[0] * (cand[:, 1] + grid.dims[1] * cand[:, 2])
    c = tuple(int(x) for x in cand[np.argmin(lin)])
    grid.flags[c] = FLAG_CENTER
    grid.phi[c] = 0.0
    grid.center_index = c
    grid.center_depth_cells = float(best) / 3.0  # face steps weigh 3
    grid.invalidate_caches()
    return c


def set_center(grid: VoxelGrid, position) -> tuple[int, int, int]:
    """Force the shape center to the interior node nearest a given position."""
    if grid.center_index is not None:
        grid.flags[grid.center_index] = FLAG_INTERIOR
        grid.center_index = None
    interior = np.argwhere(grid.flags == FLAG_INTERIOR)
    if interior.size == 0:
        raise NoInterior("grid has no interior nodes")
    pos = np.asarray(position, dtype=np.float64)
    pts = grid.origin + grid.h * interior
    c = tuple(int(x) for x in interior[np.argmin(((pts - pos) ** 2).sum(axis=1))])
    grid.flags[c] = FLAG_CENTER
    grid.phi[c] = 0.0
    grid.center_index = c
    dist = chamfer_distance(grid.flags == FLAG_BOUNDARY)
    grid.center_depth_cells = float(dist[c]) / 3.0
    grid.invalidate_caches()
    return c
