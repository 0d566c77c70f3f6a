"""Surface-mesh loading/validation and the text formats for pipeline artifacts.

Supported mesh formats are OFF and OBJ (triangles only). Loaded meshes must
be closed, orientable and genus-0; anything else is rejected with a
TopologyError naming the offending elements.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IoError, ParseError, TopologyError

log = logging.getLogger(__name__)

# degenerate-triangle threshold, relative to the squared bounding-box diagonal
_AREA_REL_EPS = 1e-14


@dataclass
class SurfaceMesh:
    """Indexed triangle mesh of a closed genus-0 boundary.

    vertices : (n, 3) float64, model units, order preserved from file
    triangles : (m, 3) int64, indices into vertices
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ParseError("vertices must be an (n, 3) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ParseError("triangles must be an (m, 3) array")

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def edge_count(self) -> int:
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0).shape[0]

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.edge_count() + self.n_triangles

    def validate(self) -> None:
        """Raise TopologyError unless the mesh is a closed orientable genus-0
        triangulation with no degenerate faces."""
        v, t = self.vertices, self.triangles
        if t.size == 0:
            raise TopologyError("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(v):
            bad = np.nonzero((t < 0) | (t >= len(v)))[0]
            raise TopologyError(
                f"triangle index out of range in faces {sorted(set(bad.tolist()))}",
                triangles=sorted(set(bad.tolist())),
            )

        # degenerate faces (zero area) break inside/outside tests downstream
        p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        areas = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
        diag2 = float(np.sum((v.max(axis=0) - v.min(axis=0)) ** 2)) or 1.0
        degen = np.nonzero(areas <= _AREA_REL_EPS * diag2)[0]
        if degen.size:
            raise TopologyError(
                f"degenerate (zero-area) triangles: {degen.tolist()}",
                triangles=degen.tolist(),
            )

        # closed + orientable: every directed edge occurs exactly once and its
        # reverse exactly once, i.e. every undirected edge has two faces with
        # opposite orientation
        directed = t[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        uniq_dir, counts_dir = np.unique(directed, axis=0, return_counts=True)
        if (counts_dir > 1).any():
            dup = uniq_dir[counts_dir > 1]
            raise TopologyError(
                f"repeated directed edges (inconsistent orientation or duplicate "
                f"faces): {[tuple(e) for e in dup.tolist()]}",
                edges=[tuple(e) for e in dup.tolist()],
            )
        undirected = np.sort(directed, axis=1)
        uniq, counts = np.unique(undirected, axis=0, return_counts=True)
        open_edges = uniq[counts == 1]
        if open_edges.size:
            raise TopologyError(
                f"mesh is not closed: {open_edges.shape[0]} boundary edges "
                f"{[tuple(e) for e in open_edges.tolist()]}",
                edges=[tuple(e) for e in open_edges.tolist()],
            )
        overused = uniq[counts > 2]
        if overused.size:
            raise TopologyError(
                f"non-manifold edges shared by >2 faces: "
                f"{[tuple(e) for e in overused.tolist()]}",
                edges=[tuple(e) for e in overused.tolist()],
            )

        chi = len(v) - uniq.shape[0] + len(t)
        if chi != 2:
            raise TopologyError(
                f"Euler characteristic V-E+F = {chi} != 2; mesh is not genus-0 "
                f"(or contains unreferenced vertices)"
            )


def load_mesh(path, fmt: str | None = None) -> SurfaceMesh:
    """Load and validate a triangulated surface mesh from an OFF or OBJ file.

    fmt may be "off" or "obj"; inferred from the extension when omitted.
    Vertex order is preserved from the file.
    """
    path = Path(path)
    if not path.exists():
        raise IoError(f"mesh file not found: {path}")
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    fmt = fmt.lower()
    if fmt == "off":
        mesh = _parse_off(path)
    elif fmt == "obj":
        mesh = _parse_obj(path)
    else:
        raise ParseError(f"unsupported mesh format '{fmt}' (expected off or obj)")
    mesh.validate()
    return mesh


def _content_lines(path: Path):
    try:
        text = path.read_text()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield ln, line


def _parse_off(path: Path) -> SurfaceMesh:
    lines = _content_lines(path)
    try:
        ln, header = next(lines)
    except StopIteration:
        raise ParseError(f"{path}: empty OFF file") from None
    if header != "OFF":
        raise ParseError(f"{path}:{ln}: expected 'OFF' header, got {header!r}")
    try:
        ln, counts = next(lines)
        nv, nf = [int(x) for x in counts.split()[:2]]
    except (StopIteration, ValueError, IndexError):
        raise ParseError(f"{path}: malformed OFF counts line") from None

    verts = np.empty((nv, 3), dtype=np.float64)
    for i in range(nv):
        try:
            ln, line = next(lines)
            verts[i] = [float(x) for x in line.split()[:3]]
        except (StopIteration, ValueError, IndexError):
            raise ParseError(f"{path}: bad or missing vertex line {i}") from None

    tris = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        try:
            ln, line = next(lines)
            parts = line.split()
            k = int(parts[0])
        except (StopIteration, ValueError, IndexError):
            raise ParseError(f"{path}: bad or missing face line {i}") from None
        if k != 3:
            raise ParseError(f"{path}:{ln}: face {i} has {k} vertices; only "
                             f"triangles are supported")
        try:
            tris[i] = [int(x) for x in parts[1:4]]
        except (ValueError, IndexError):
            raise ParseError(f"{path}:{ln}: face {i} has malformed indices") from None
    return SurfaceMesh(verts, tris)


def _parse_obj(path: Path) -> SurfaceMesh:
    verts: list[list[float]] = []
    tris: list[list[int]] = []
    ignored = 0
    for ln, line in _content_lines(path):
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            try:
                verts.append([float(x) for x in parts[1:4]])
            except (ValueError, IndexError):
                raise ParseError(f"{path}:{ln}: malformed vertex record") from None
        elif tag == "f":
            if len(parts) != 4:
                raise ParseError(f"{path}:{ln}: face has {len(parts) - 1} vertices; "
                                 f"only triangles are supported")
            idx = []
            for tok in parts[1:4]:
                head = tok.split("/", 1)[0]
                try:
                    i = int(head)
                except ValueError:
                    raise ParseError(f"{path}:{ln}: malformed face index "
                                     f"{tok!r}") from None
                if i < 1:
                    raise ParseError(f"{path}:{ln}: face indices must be positive "
                                     f"1-based, got {i}")
                idx.append(i - 1)
            tris.append(idx)
        else:
            ignored += 1
    if ignored:
        log.warning("%s: ignored %d non-v/f OBJ records", path, ignored)
    if not verts:
        raise ParseError(f"{path}: no vertices found")
    return SurfaceMesh(np.asarray(verts), np.asarray(tris, dtype=np.int64))


def write_mesh(mesh: SurfaceMesh, path, fmt: str | None = None) -> None:
    """Write a mesh as OFF or OBJ with full round-trip decimal precision."""
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower() or "off"
    fmt = fmt.lower()
    out = []
    if fmt == "off":
        out.append("OFF")
        out.append(f"{mesh.n_vertices} {mesh.n_triangles} {mesh.edge_count()}")
        for x, y, z in mesh.vertices.tolist():
            out.append(f"{x!r} {y!r} {z!r}")
        for a, b, c in mesh.triangles.tolist():
            out.append(f"3 {a} {b} {c}")
    elif fmt == "obj":
        for x, y, z in mesh.vertices.tolist():
            out.append(f"v {x!r} {y!r} {z!r}")
        for a, b, c in mesh.triangles.tolist():
            out.append(f"f {a + 1} {b + 1} {c + 1}")
    else:
        raise ParseError(f"unsupported mesh format '{fmt}'")
    try:
        path.write_text("\n".join(out) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


# ---------------------------------------------------------------------------
# potential-field file
#
# line 1: "nx ny nz"
# line 2: "ox oy oz h"           (grid origin and node spacing)
# then nx*ny*nz lines "flag phi" in x-fastest order, flag in {E, B, I, C}
# ---------------------------------------------------------------------------

_FLAG_CHARS = "EBIC"  # indexed by the grid flag codes 0..3


def write_field(grid, path) -> None:
    """Write a grid's classification and potential to the text field format.

    phi values are written with shortest exact decimal representation, so a
    read-back reproduces every stored value bit-exactly.
    """
    if grid.phi.size == 0:
        raise IoError("empty grid: nothing to write")
    path = Path(path)
    nx, ny, nz = grid.dims
    flat_flags = np.transpose(grid.flags, (2, 1, 0)).ravel().tolist()  # x fastest
    flat_phi = np.transpose(grid.phi, (2, 1, 0)).ravel().tolist()
    ox, oy, oz = grid.origin.tolist()
    rows = [f"{nx} {ny} {nz}", f"{ox!r} {oy!r} {oz!r} {float(grid.h)!r}"]
    rows.extend(f"{_FLAG_CHARS[f]} {p!r}" for f, p in zip(flat_flags, flat_phi))
    try:
        path.write_text("\n".join(rows) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def read_field(path):
    """Read a field file back into a VoxelGrid.

    Guard-layer bookkeeping is reconstructed from the boundary set and the
    distinct exterior potentials (the file format stores only E/B/I/C flags).
    """
    from .grid import VoxelGrid, rebuild_guard_layers

    path = Path(path)
    if not path.exists():
        raise IoError(f"field file not found: {path}")
    with path.open() as fh:
        try:
            nx, ny, nz = [int(x) for x in fh.readline().split()]
            ox, oy, oz, h = [float(x) for x in fh.readline().split()]
        except ValueError:
            raise IoError(f"{path}: malformed field header") from None
        n = nx * ny * nz
        flags = np.empty(n, dtype=np.uint8)
        phi = np.empty(n, dtype=np.float64)
        for i in range(n):
            parts = fh.readline().split()
            if len(parts) != 2 or parts[0] not in _FLAG_CHARS:
                raise IoError(f"{path}: malformed node line {i + 3}")
            flags[i] = _FLAG_CHARS.index(parts[0])
            phi[i] = float(parts[1])
    flags = np.transpose(flags.reshape(nz, ny, nx), (2, 1, 0)).copy()
    phi = np.transpose(phi.reshape(nz, ny, nx), (2, 1, 0)).copy()
    grid = VoxelGrid(origin=np.array([ox, oy, oz]), h=h, flags=flags, phi=phi,
                     guard=np.zeros_like(flags))
    rebuild_guard_layers(grid)
    centers = np.argwhere(flags == 3)
    if len(centers) == 1:
        grid.center_index = tuple(int(c) for c in centers[0])
    return grid
