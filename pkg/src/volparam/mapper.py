"""Spherical angles, the atlas, and the forward/inverse parameterization.

Every streamline endpoint is converted to polar/azimuthal angles relative to
the shape center:
    psi = atan2(y, x),   theta = atan2(sqrt(x^2 + y^2), z)
and the triple (phi, theta, psi) parameterizes the solid. The atlas collects
the boundary-vertex triples together with bijectivity diagnostics (minimum
pairwise angular separation, flipped spherical triangles). Interior points
are parameterized by inverse-distance interpolation over the streamline
sample records, and the inverse map is the same interpolation run in
parameter space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import (DegenerateEndpoint, IoError, NoNearbySamples,
                     TooManyFailures)
from .grid import VoxelGrid
from .mesh_io import SurfaceMesh, write_mesh
from .sampler import sample_phi
from .tracer import Streamline

_RANGE_TOL = 1e-6
_ZERO_DIST = 1e-12


@dataclass
class ParamTriple:
    """(phi, theta, psi) coordinates of a point.

    phi in [0, 1], theta in [0, pi], psi in (-pi, pi]. Values within a small
    tolerance of the range ends are folded back; anything further out is an
    error.
    """

    phi: float
    theta: float
    psi: float

    def __post_init__(self):
        if not (-_RANGE_TOL <= self.phi <= 1.0 + _RANGE_TOL):
            raise ValueError(f"phi {self.phi} outside [0, 1]")
        if not (-_RANGE_TOL <= self.theta <= math.pi + _RANGE_TOL):
            raise ValueError(f"theta {self.theta} outside [0, pi]")
        if not (-math.pi - _RANGE_TOL <= self.psi <= math.pi + _RANGE_TOL):
            raise ValueError(f"psi {self.psi} outside (-pi, pi]")
        self.phi = min(max(self.phi, 0.0), 1.0)
        self.theta = min(max(self.theta, 0.0), math.pi)
        self.psi = min(self.psi, math.pi)
        if self.psi <= -math.pi:
            self.psi = math.pi


def _angles_of(vec: np.ndarray) -> tuple[float, float]:
    x, y, z = vec
    theta = math.atan2(math.hypot(x, y), z)
    psi = math.atan2(y, x)
    if psi <= -math.pi:
        psi = math.pi
    return theta, psi


def endpoint_angles(line: Streamline, center) -> tuple[float, float]:
    """Polar and azimuthal angle of a streamline endpoint seen from the
    shape center. Requires a normally terminated line."""
    if not line.reached_center_region():
        raise ValueError(f"streamline terminated with "
                         f"{line.termination.value}; angles undefined")
    vec = line.endpoint - np.asarray(center, dtype=np.float64)
    if np.linalg.norm(vec) <= _ZERO_DIST:
        raise DegenerateEndpoint("endpoint coincides with the shape center")
    return _angles_of(vec)


def to_sphere(t: ParamTriple) -> np.ndarray:
    """Unit-sphere image of a parameter triple."""
    st = math.sin(t.theta)
    return np.array([st * math.cos(t.psi), st * math.sin(t.psi),
                     math.cos(t.theta)])


def unit_vector(theta: float, psi: float) -> np.ndarray:
    st = math.sin(theta)
    return np.array([st * math.cos(psi), st * math.sin(psi), math.cos(theta)])


@dataclass
class Atlas:
    """Boundary-vertex parameter triples plus bijectivity diagnostics."""

    entries: dict[int, ParamTriple]
    min_angular_separation: float
    flipped_triangles: int
    failed_seeds: list[int]

    def diagnostics(self) -> dict:
        return {"min_angular_separation": self.min_angular_separation,
                "flipped_triangles": self.flipped_triangles,
                "failed_seeds": self.failed_seeds,
                "mapped_vertices": len(self.entries)}


def build_atlas(mesh: SurfaceMesh, lines, center,
                fail_fraction: float = 0.05) -> Atlas:
    """Convert per-vertex streamlines into the atlas.

    Bijectivity diagnostics: minimum pairwise great-circle separation of the
    mapped vertices and the count of spherical triangles whose orientation
    opposes the majority.
    """
    center = np.asarray(center, dtype=np.float64)
    n = mesh.n_vertices
    if len(lines) != n:
        raise ValueError(f"{len(lines)} streamlines for {n} vertices")
    entries: dict[int, ParamTriple] = {}
    failed: list[int] = []
    for i, line in enumerate(lines):
        if line is None or not line.reached_center_region():
            failed.append(i)
            continue
        theta, psi = endpoint_angles(line, center)
        entries[i] = ParamTriple(1.0, theta, psi)
    if len(failed) > fail_fraction * n:
        raise TooManyFailures(
            f"{len(failed)} of {n} seeds failed (> {fail_fraction:.0%})",
            failures={i: "trace failed" for i in failed})

    ids = sorted(entries)
    units = np.array([to_sphere(entries[i]) for i in ids])
    if len(ids) >= 2:
        tree = cKDTree(units)
        chord, _ = tree.query(units, k=2)
        min_sep = float(2.0 * np.arcsin(np.clip(chord[:, 1].min() / 2.0,
                                                0.0, 1.0)))
    else:
        min_sep = float("nan")

    unit_of = np.full((n, 3), np.nan)
    unit_of[ids] = units
    flipped = 0
    mapped = np.zeros(n, dtype=bool)
    mapped[ids] = True
    tri = mesh.triangles
    full = mapped[tri].all(axis=1)
    if full.any():
        ua = unit_of[tri[full, 0]]
        ub = unit_of[tri[full, 1]]
        uc = unit_of[tri[full, 2]]
        orient = np.einsum("ij,ij->i", ua, np.cross(ub, uc))
        majority = 1.0 if (orient > 0).sum() >= (orient < 0).sum() else -1.0
        flipped = int((orient * majority <= 0).sum())
    return Atlas(entries=entries, min_angular_separation=min_sep,
                 flipped_triangles=flipped, failed_seeds=failed)


# ---------------------------------------------------------------------------
# forward table and interior parameterization
# ---------------------------------------------------------------------------

@dataclass
class MappingContext:
    """Streamline sample records organized per line, for interpolation.

    Angle values are constant along a streamline, so interpolation always
    spans the k nearest distinct lines (the nearest raw samples tend to lie
    on a single polyline, which would degrade interpolation to nearest-line
    snapping). Along each line, phi decreases monotonically, so position at
    a given phi is a well-defined 1D interpolation.
    """

    center: np.ndarray
    positions: np.ndarray    # (M, 3) all sample points
    phis: np.ndarray         # (M,)
    line_ids: np.ndarray     # (M,) index into the per-line arrays
    line_starts: np.ndarray  # (L + 1,) slice bounds per line
    line_units: np.ndarray   # (L, 3) unit vector of each line
    seed_ids: np.ndarray     # (L,) original vertex index of each line
    k: int = 8
    phi_weight: float = math.pi ** 2
    max_param_distance: float = 0.75
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.positions)
        return self._tree

    def position_at_phi(self, line: int, phi: float) -> np.ndarray:
        """Point of one line at a given potential, linearly interpolated
        between its samples (clamped to the line's phi range)."""
        lo, hi = self.line_starts[line], self.line_starts[line + 1]
        phis = self.phis[lo:hi]          # strictly decreasing
        pos = self.positions[lo:hi]
        if phi >= phis[0]:
            return pos[0].copy()
        if phi <= phis[-1]:
            return pos[-1].copy()
        j = int(np.searchsorted(-phis, -phi, side="left"))
        f = (phis[j - 1] - phi) / (phis[j - 1] - phis[j])
        return pos[j - 1] + f * (pos[j] - pos[j - 1])


def build_mapping(lines, center, k: int = 8,
                  phi_weight: float = math.pi ** 2,
                  max_param_distance: float = 0.75) -> MappingContext:
    """Assemble the forward interpolation table from successful streamlines."""
    center = np.asarray(center, dtype=np.float64)
    pos, phis, ids = [], [], []
    units, seeds, starts = [], [], [0]
    for i, line in enumerate(lines):
        if line is None or not line.reached_center_region():
            continue
        theta, psi = endpoint_angles(line, center)
        units.append(unit_vector(theta, psi))
        seeds.append(i)
        pos.append(line.points)
        phis.append(line.phis)
        ids.append(np.full(len(line.points), len(units) - 1, dtype=np.int64))
        starts.append(starts[-1] + len(line.points))
    if not pos:
        raise TooManyFailures("no successful streamlines to interpolate over")
    return MappingContext(center=center,
                          positions=np.concatenate(pos),
                          phis=np.concatenate(phis),
                          line_ids=np.concatenate(ids),
                          line_starts=np.asarray(starts, dtype=np.int64),
                          line_units=np.asarray(units),
                          seed_ids=np.asarray(seeds, dtype=np.int64),
                          k=k, phi_weight=phi_weight,
                          max_param_distance=max_param_distance)


def _nearest_lines(ctx: MappingContext, point: np.ndarray, k: int
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Distances to the k nearest distinct lines (via their closest samples)."""
    n = len(ctx.positions)
    guess = min(max(8 * k, 32), n)
    while True:
        dist, idx = ctx.tree().query(point, k=guess)
        dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
        lines, first = np.unique(ctx.line_ids[idx], return_index=True)
        if len(lines) >= k or guess >= n:
            break
        guess = min(4 * guess, n)
    order = np.argsort(dist[first], kind="stable")[:k]
    return dist[first][order], lines[order]


def parameterize_point(grid: VoxelGrid, ctx: MappingContext,
                       point) -> ParamTriple:
    """Parameter triple of an interior point: phi sampled from the grid,
    angles inverse-distance interpolated over the nearest streamlines
    (unit vectors averaged then renormalized)."""
    point = np.asarray(point, dtype=np.float64)
    phi = min(max(sample_phi(grid, point), 0.0), 1.0)
    if np.linalg.norm(point - ctx.center) <= _ZERO_DIST:
        raise DegenerateEndpoint("angles are undefined at the shape center")
    dist, lines = _nearest_lines(ctx, point, min(ctx.k, len(ctx.line_units)))
    if dist[0] <= _ZERO_DIST:
        u = ctx.line_units[lines[0]]
    else:
        w = 1.0 / dist
        u = (w[:, None] * ctx.line_units[lines]).sum(axis=0)
        nrm = np.linalg.norm(u)
        u = ctx.line_units[lines[0]] if nrm <= _ZERO_DIST else u / nrm
    theta, psi = _angles_of(u)
    return ParamTriple(phi, theta, psi)


def inverse_map(ctx: MappingContext, t: ParamTriple) -> np.ndarray:
    """Spatial point whose parameters match t.

    Per-line parameter distance combines the great-circle angle to the
    line's direction with the (weighted) amount by which the query phi falls
    outside the line's covered range; each candidate line contributes its
    position at the query phi, blended with inverse-distance weights.
    """
    uq = to_sphere(t)
    ang = np.arccos(np.clip(ctx.line_units @ uq, -1.0, 1.0))
    phi_hi = ctx.phis[ctx.line_starts[:-1]]
    phi_lo = ctx.phis[ctx.line_starts[1:] - 1]
    excess = np.maximum(t.phi - phi_hi, 0.0) + np.maximum(phi_lo - t.phi, 0.0)
    d = np.sqrt(ang ** 2 + ctx.phi_weight * excess ** 2)
    k = min(ctx.k, len(d))
    order = np.argpartition(d, k - 1)[:k]
    order = order[np.argsort(d[order], kind="stable")]
    if d[order[0]] > ctx.max_param_distance:
        raise NoNearbySamples(
            f"nearest streamline is {d[order[0]]:.3f} away in parameter "
            f"space (> {ctx.max_param_distance}); region under-sampled")
    if d[order[0]] <= _ZERO_DIST:
        return ctx.position_at_phi(int(order[0]), t.phi)
    w = 1.0 / d[order] ** 2
    pts = np.array([ctx.position_at_phi(int(li), t.phi) for li in order])
    return (w[:, None] * pts).sum(axis=0) / w.sum()


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def write_atlas_csv(atlas: Atlas, path) -> None:
    """CSV of the mapped vertices: vertex_id,theta,psi,phi with full-precision
    radians (17 significant digits)."""
    rows = ["vertex_id,theta,psi,phi"]
    for i in sorted(atlas.entries):
        t = atlas.entries[i]
        rows.append(f"{i},{t.theta:.16e},{t.psi:.16e},{t.phi:.16e}")
    try:
        Path(path).write_text("\n".join(rows) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def read_atlas_csv(path) -> dict[int, ParamTriple]:
    path = Path(path)
    if not path.exists():
        raise IoError(f"atlas CSV not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "vertex_id,theta,psi,phi":
        raise IoError(f"{path}: missing atlas CSV header")
    entries = {}
    for ln, row in enumerate(lines[1:], start=2):
        if not row.strip():
            continue
        try:
            sid, stheta, spsi, sphi = row.split(",")
            entries[int(sid)] = ParamTriple(float(sphi), float(stheta),
                                            float(spsi))
        except ValueError as e:
            raise IoError(f"{path}:{ln}: malformed atlas row: {e}") from e
    return entries


def write_atlas_svg(entries: dict[int, ParamTriple], path,
                    size: int = 640) -> None:
    """Static scatter of the atlas over the (theta, psi) rectangle
    [0, pi] x (-pi, pi]."""
    pad = 40
    w = size
    h = int(size * 1.5)
    sx = (w - 2 * pad) / math.pi
    sy = (h - 2 * pad) / (2 * math.pi)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="{pad}" y="{pad}" width="{w - 2 * pad}" '
        f'height="{h - 2 * pad}" fill="white" stroke="black"/>',
        f'<text x="{w // 2}" y="{h - 8}" text-anchor="middle" '
        f'font-size="14">theta (0 .. pi)</text>',
        f'<text x="14" y="{h // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 14 {h // 2})">psi (-pi .. pi)</text>',
    ]
    for i in sorted(entries):
        t = entries[i]
        x = pad + t.theta * sx
        y = pad + (math.pi - t.psi) * sy
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2" '
                     f'fill="steelblue"/>')
    parts.append("</svg>")
    try:
        Path(path).write_text("\n".join(parts) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def write_mapped_sphere(mesh: SurfaceMesh, atlas: Atlas, path) -> None:
    """Input connectivity with vertices replaced by their unit-sphere images.

    Vertices of failed seeds (if any) are placed at the origin, which keeps
    indexing intact and makes them visually obvious.
    """
    verts = np.zeros_like(mesh.vertices)
    for i, t in atlas.entries.items():
        verts[i] = to_sphere(t)
    write_mesh(SurfaceMesh(verts, mesh.triangles.copy()), path, fmt="off")
