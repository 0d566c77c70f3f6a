"""Synthetic closed genus-0 test solids.

Five generators cover the geometric difficulties the pipeline must handle:
a sphere (icosphere), a box, an L-shaped solid (concavity), a five-lobed
star (deep valleys where naive radial angles collide), and a two-lobed union
of spheres (molecule-like). Star-shaped solids are built by radially scaling
an icosphere; box-like solids are extracted as the quad surface of a voxel
solid, so every output is watertight by construction.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidParams
from .mesh_io import SurfaceMesh, write_mesh

SHAPE_KINDS = ("sphere", "box", "two_lobe", "star5", "lshape")


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> SurfaceMesh:
    """Icosahedron subdivided n times and projected to the sphere.

    V = 10 * 4^n + 2 vertices, 20 * 4^n triangles.
    """
    if subdivisions < 0:
        raise InvalidParams("subdivisions must be >= 0")
    if radius <= 0:
        raise InvalidParams("radius must be positive")
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]

    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    return SurfaceMesh(radius * np.asarray(verts),
                       np.asarray(faces, dtype=np.int64))


def _radial_mesh(directions_mesh: SurfaceMesh, radius_fn) -> SurfaceMesh:
    """Scale unit-sphere vertices by a per-direction radius (star-shaped)."""
    u = directions_mesh.vertices
    u = u / np.linalg.norm(u, axis=1, keepdims=True)
    r = radius_fn(u)
    if np.any(r <= 0):
        raise InvalidParams("radius function must be positive everywhere")
    return SurfaceMesh(u * r[:, None], directions_mesh.triangles.copy())


def star5(radius: float = 0.6, lobe_ratio: float = 1.8,
          sharpness: int = 2, subdivisions: int = 3) -> SurfaceMesh:
    """Five-lobed star: lobes of radius radius*lobe_ratio around the equator,
    valleys of the base radius. lobe_ratio 1 degenerates to a sphere."""
    if lobe_ratio < 1.0:
        raise InvalidParams("lobe_ratio must be >= 1")
    if sharpness < 1:
        raise InvalidParams("sharpness must be >= 1")

    def radius_fn(u):
        theta = np.arccos(np.clip(u[:, 2], -1.0, 1.0))
        psi = np.arctan2(u[:, 1], u[:, 0])
        bump = np.sin(theta) ** (2 * sharpness) * (1.0 + np.cos(5.0 * psi)) / 2.0
        return radius * (1.0 + (lobe_ratio - 1.0) * bump)

    return _radial_mesh(icosphere(subdivisions), radius_fn)


def two_lobe(r1: float = 1.0, r2: float = 0.8, separation: float = 1.1,
             subdivisions: int = 3) -> SurfaceMesh:
    """Boundary of the union of two overlapping spheres centered on the z
    axis at -+separation/2. The origin must lie inside both spheres so the
    union surface is star-shaped and single-valued per direction."""
    if r1 <= 0 or r2 <= 0:
        raise InvalidParams("sphere radii must be positive")
    if separation <= 0:
        raise InvalidParams("separation must be positive")
    if separation >= r1 + r2:
        raise InvalidParams("spheres do not overlap; the union is not a "
                            "single closed solid")
    if separation / 2.0 >= min(r1, r2):
        raise InvalidParams("origin falls outside one sphere; reduce the "
                            "separation or enlarge the radii")
    centers = np.array([[0.0, 0.0, -separation / 2.0],
                        [0.0, 0.0, separation / 2.0]])
    radii = np.array([r1, r2])

    def radius_fn(u):
        # larger root of |t*u - c| = r per sphere, then the union's maximum
        b = u @ centers.T                         # (n, 2)
        disc = b ** 2 - (centers ** 2).sum(axis=1) + radii ** 2
        return (b + np.sqrt(np.maximum(disc, 0.0))).max(axis=1)

    return _radial_mesh(icosphere(subdivisions), radius_fn)


def _voxel_surface(solid: np.ndarray, origin, cell_size) -> SurfaceMesh:
    """Watertight triangulated boundary of a voxel solid.

    Emits two outward-wound triangles per exposed cell face; vertices are
    welded through an integer-lattice key.
    """
    origin = np.asarray(origin, dtype=np.float64)
    cell = np.asarray(cell_size, dtype=np.float64)
    vert_ids: dict[tuple[int, int, int], int] = {}
    verts: list[np.ndarray] = []
    faces: list[tuple[int, int, int]] = []

    def vid(i, j, k) -> int:
        key = (i, j, k)
        if key not in vert_ids:
            vert_ids[key] = len(verts)
            verts.append(origin + cell * np.array([i, j, k], dtype=np.float64))
        return vert_ids[key]

    padded = np.pad(solid, 1, constant_values=False)
    # quad corner offsets per face direction, wound so the normal points out
    quads = {
        (1, 0, 0): ((1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)),
        (-1, 0, 0): ((0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)),
        (0, 1, 0): ((0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)),
        (0, -1, 0): ((0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)),
        (0, 0, 1): ((0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)),
        (0, 0, -1): ((0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)),
    }
    for (dx, dy, dz), corners in quads.items():
        exposed = padded[1:-1, 1:-1, 1:-1] & ~padded[
            1 + dx:padded.shape[0] - 1 + dx,
            1 + dy:padded.shape[1] - 1 + dy,
            1 + dz:padded.shape[2] - 1 + dz]
        for ci, cj, ck in np.argwhere(exposed):
            ids = [vid(ci + a, cj + b, ck + c) for a, b, c in corners]
            faces.append((ids[0], ids[1], ids[2]))
            faces.append((ids[0], ids[2], ids[3]))
    if not faces:
        raise InvalidParams("voxel solid is empty")
    return SurfaceMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64))


def box(extent=(1.6, 1.2, 1.0), cells: int = 12) -> SurfaceMesh:
    """Axis-aligned box centered on the origin, faces gridded cells x cells."""
    extent = np.asarray(extent, dtype=np.float64)
    if (extent <= 0).any():
        raise InvalidParams("box extents must be positive")
    if cells < 1:
        raise InvalidParams("cells must be >= 1")
    solid = np.ones((cells, cells, cells), dtype=bool)
    cell_size = extent / cells
    return _voxel_surface(solid, -extent / 2.0, cell_size)


def lshape(extent=(1.5, 1.5, 0.9), cells: int = 14,
           notch: float = 0.4) -> SurfaceMesh:
    """L-shaped solid: a box with a corner column removed along z.

    notch is the removed fraction of the x and y extents. Deep notches make
    long thin limbs, down which harmonic streamline bundles compress
    exponentially; the default keeps the concavity pronounced but the limbs
    chunky.
    """
    extent = np.asarray(extent, dtype=np.float64)
    if (extent <= 0).any():
        raise InvalidParams("extents must be positive")
    if cells < 2:
        raise InvalidParams("cells must be >= 2 to carve the notch")
    if not (0.0 < notch < 1.0):
        raise InvalidParams("notch fraction must be in (0, 1)")
    keep = cells - max(1, round(cells * notch))
    if keep < 1 or keep >= cells:
        raise InvalidParams("notch does not leave an L at this cell count")
    solid = np.ones((cells, cells, cells), dtype=bool)
    solid[keep:, keep:, :] = False
    return _voxel_surface(solid, -extent / 2.0, extent / cells)


_GENERATORS = {"sphere": icosphere, "box": box, "two_lobe": two_lobe,
               "star5": star5, "lshape": lshape}


def make_shape(kind: str, **params) -> SurfaceMesh:
    """Build one of the named test solids; unknown kinds or bad parameters
    raise InvalidParams."""
    if kind not in _GENERATORS:
        raise InvalidParams(f"unknown shape kind {kind!r}; expected one of "
                            f"{SHAPE_KINDS}")
    try:
        return _GENERATORS[kind](**params)
    except TypeError as e:
        raise InvalidParams(f"bad parameters for {kind}: {e}") from e


def generate_shape(kind: str, path, **params) -> SurfaceMesh:
    """Generate a test solid and write it as OFF; returns the mesh."""
    mesh = make_shape(kind, **params)
    mesh.validate()
    write_mesh(mesh, path, fmt="off")
    return mesh
