import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volparam.errors import IoError, ParseError, TopologyError
from volparam.grid import VoxelGrid
from volparam.mesh_io import (SurfaceMesh, load_mesh, read_field, write_field,
                              write_mesh)
from volparam.shapes import icosphere


def test_octahedron_off(octahedron_off):
    mesh = load_mesh(octahedron_off)
    assert mesh.n_vertices == 6
    assert mesh.n_triangles == 8
    assert mesh.edge_count() == 12
    assert mesh.euler_characteristic() == 2
    # vertex order preserved from the file
    assert np.array_equal(mesh.vertices[0], [1, 0, 0])


def test_icosahedron_obj(tmp_path):
    path = tmp_path / "ico.obj"
    write_mesh(icosphere(0), path, fmt="obj")
    mesh = load_mesh(path)
    assert mesh.n_vertices == 12
    assert mesh.n_triangles == 20
    mesh.validate()  # closed


def test_missing_face_lists_three_boundary_edges(octahedron_off, tmp_path):
    mesh = load_mesh(octahedron_off)
    # removing one face leaves exactly its 3 edges with a single incident
    # face each (counted by brute-force edge pairing)
    removed = mesh.triangles[0]
    expect = {tuple(sorted((removed[i], removed[(i + 1) % 3])))
              for i in range(3)}
    broken = SurfaceMesh(mesh.vertices, mesh.triangles[1:])
    with pytest.raises(TopologyError) as err:
        broken.validate()
    assert set(map(tuple, err.value.edges)) == expect
    assert "3 boundary edges" in str(err.value)


def test_degenerate_triangle_rejected():
    verts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]])
    tris = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]])
    with pytest.raises(TopologyError, match="degenerate"):
        SurfaceMesh(verts, tris).validate()


def test_inconsistent_orientation_rejected(octahedron_off):
    mesh = load_mesh(octahedron_off)
    tris = mesh.triangles.copy()
    tris[0] = tris[0][::-1]  # flip one face
    with pytest.raises(TopologyError):
        SurfaceMesh(mesh.vertices, tris).validate()


def _torus(n=12, m=8, R=1.0, r=0.3):
    verts = []
    for i in range(n):
        a = 2 * np.pi * i / n
        for j in range(m):
            b = 2 * np.pi * j / m
            verts.append([(R + r * np.cos(b)) * np.cos(a),
                          (R + r * np.cos(b)) * np.sin(a),
                          r * np.sin(b)])
    tris = []
    for i in range(n):
        for j in range(m):
            a, b = i * m + j, i * m + (j + 1) % m
            c, d = ((i + 1) % n) * m + j, ((i + 1) % n) * m + (j + 1) % m
            tris.append([a, b, d])
            tris.append([a, d, c])
    return SurfaceMesh(np.array(verts), np.array(tris))


def test_genus_check_rejects_torus_accepts_sphere():
    torus = _torus()
    assert torus.euler_characteristic() == 0
    with pytest.raises(TopologyError, match="genus"):
        torus.validate()
    icosphere(1).validate()


def test_obj_ignores_other_records_with_warning(tmp_path, caplog):
    path = tmp_path / "deco.obj"
    lines = ["mtllib scene.mtl", "o thing", "vn 0 0 1", "vt 0.5 0.5"]
    m = icosphere(0)
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in m.vertices.tolist()]
    lines += ["s off"]
    lines += [f"f {a + 1}/1/1 {b + 1}/1/1 {c + 1}/1/1"
              for a, b, c in m.triangles.tolist()]
    path.write_text("\n".join(lines) + "\n")
    with caplog.at_level(logging.WARNING):
        mesh = load_mesh(path)
    assert mesh.n_triangles == 20
    assert "ignored 5" in caplog.text


@pytest.mark.parametrize("fmt", ["off", "obj"])
def test_mesh_round_trip(tmp_path, fmt):
    rng = np.random.default_rng(3)
    mesh = icosphere(1)
    bumpy = SurfaceMesh(
        mesh.vertices * (1.0 + 0.2 * rng.random((mesh.n_vertices, 1))),
        mesh.triangles)
    path = tmp_path / f"bumpy.{fmt}"
    write_mesh(bumpy, path)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, bumpy.vertices)  # repr round-trips
    assert np.array_equal(back.triangles, bumpy.triangles)


@pytest.mark.parametrize("content,match", [
    ("", "empty"),
    ("NOFF\n3 1 3\n", "header"),
    ("OFF\nx y\n", "counts"),
    ("OFF\n3 1 3\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 0\n", "4 vertices"),
])
def test_off_parse_errors(tmp_path, content, match):
    path = tmp_path / "bad.off"
    path.write_text(content)
    with pytest.raises(ParseError, match=match):
        load_mesh(path)


def test_obj_negative_index_rejected(tmp_path):
    path = tmp_path / "neg.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -1 -2 -3\n")
    with pytest.raises(ParseError, match="positive"):
        load_mesh(path)


def test_load_missing_file():
    with pytest.raises(IoError, match="not found"):
        load_mesh("/nonexistent/mesh.off")


def test_unknown_format(tmp_path):
    path = tmp_path / "mesh.stl"
    path.write_text("solid\n")
    with pytest.raises(ParseError, match="unsupported"):
        load_mesh(path)


# ---------------------------------------------------------------------------
# field file
# ---------------------------------------------------------------------------

def _tiny_grid(n=3, phi_value=1.0):
    flags = np.full((n, n, n), 1, dtype=np.uint8)  # all boundary
    return VoxelGrid(origin=np.zeros(3), h=0.5, flags=flags,
                     phi=np.full((n, n, n), phi_value),
                     guard=np.zeros((n, n, n), dtype=np.uint8))


def test_write_field_constant(tmp_path):
    path = tmp_path / "field.txt"
    write_field(_tiny_grid(), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "3 3 3"
    assert lines[1].split() == ["0.0", "0.0", "0.0", "0.5"]
    assert len(lines) == 2 + 27
    assert all(line == "B 1.0" for line in lines[2:])


def test_field_round_trip(tmp_path, solved_sphere):
    grid = solved_sphere.grid
    path = tmp_path / "field.txt"
    write_field(grid, path)
    back = read_field(path)
    assert back.dims == grid.dims
    assert back.h == grid.h
    assert np.array_equal(back.origin, grid.origin)
    assert np.array_equal(back.flags, grid.flags)
    assert np.array_equal(back.phi, grid.phi)  # bit-exact decimal round trip
    assert back.guard_layers == grid.guard_layers
    assert back.center_index == grid.center_index


def test_write_field_empty_grid(tmp_path):
    empty = VoxelGrid(origin=np.zeros(3), h=1.0,
                      flags=np.zeros((0, 0, 0), dtype=np.uint8),
                      phi=np.zeros((0, 0, 0)),
                      guard=np.zeros((0, 0, 0), dtype=np.uint8))
    with pytest.raises(IoError, match="empty grid"):
        write_field(empty, tmp_path / "field.txt")


def test_read_field_errors(tmp_path):
    with pytest.raises(IoError, match="not found"):
        read_field(tmp_path / "nope.txt")
    bad = tmp_path / "bad.txt"
    bad.write_text("1 1\n")
    with pytest.raises(IoError, match="header"):
        read_field(bad)
    bad.write_text("1 1 1\n0 0 0 1.0\nQ 1.0\n")
    with pytest.raises(IoError, match="node line"):
        read_field(bad)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-10, max_value=10, allow_nan=False),
       st.floats(min_value=1e-3, max_value=7.3, allow_nan=False))
def test_field_values_round_trip_exactly(phi_value, h):
    import io
    grid = _tiny_grid(2, phi_value=phi_value)
    grid.h = h
    # serialize through a real file-format cycle
    import tempfile
    from pathlib import Path
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "f.txt"
        write_field(grid, p)
        back = read_field(p)
    assert np.array_equal(back.phi, grid.phi)
    assert back.h == grid.h
