"""Isosurface extraction, topology counters, vertex labeling."""

import numpy as np
import pytest

from conftest import sphere_form, torus_form
from ias.extract import (
    LabeledMesh,
    connected_components,
    euler_characteristic,
    extract_mesh,
    grid_eval,
    label_vertices,
    save_labels,
    total_genus,
)
from ias.mesh import TriMesh, enclosed_volume, surface_area
from ias.primitive import RAW_CLAMP, RawPrimitiveParams
from ias.scene import Scene


def test_grid_eval_matches_union(unit_sphere_scene):
    res = 12
    vol = grid_eval(unit_sphere_scene, res, bounds=(-1.1, 1.1))
    assert vol.shape == (res, res, res)
    axis = np.linspace(-1.1, 1.1, res)
    xs, ys, zs = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)
    vals, _ = unit_sphere_scene.eval_union(pts)
    assert np.allclose(vol.ravel(), vals, rtol=1e-12, atol=1e-12)


def test_grid_eval_threads_identical(unit_sphere_scene):
    a = grid_eval(unit_sphere_scene, 24, threads=1)
    b = grid_eval(unit_sphere_scene, 24, threads=3)
    assert np.array_equal(a, b)


def test_grid_eval_resolution_floor(unit_sphere_scene):
    with pytest.raises(ValueError):
        grid_eval(unit_sphere_scene, 1)


def test_extract_resolution_floor(unit_sphere_scene):
    with pytest.raises(ValueError):
        extract_mesh(unit_sphere_scene, resolution=7)


def test_extracted_sphere_measures():
    scene = Scene.from_matrices([sphere_form(radius=0.8)])
    mesh = extract_mesh(scene, resolution=64)
    assert mesh.is_watertight()
    assert surface_area(mesh) == pytest.approx(4.0 * np.pi * 0.64, rel=0.03)
    assert enclosed_volume(mesh) == pytest.approx(4.0 * np.pi / 3.0 * 0.512, rel=0.03)
    assert total_genus(mesh) == 0
    assert connected_components(mesh) == 1
    # vertices sit on the zero set
    vals, _ = scene.eval_union(mesh.vertices)
    assert np.abs(vals).mean() < 0.01


def test_extracted_faces_point_outward():
    scene = Scene.from_matrices([sphere_form(radius=0.8)])
    mesh = extract_mesh(scene, resolution=32)
    assert enclosed_volume(mesh) > 0  # signed volume flips if winding is inward


def test_torus_topology():
    scene = Scene.from_matrices([torus_form(major=0.6, minor=0.25)])
    mesh = extract_mesh(scene, resolution=96)
    assert mesh.is_watertight()
    assert total_genus(mesh) == 1
    assert euler_characteristic(mesh) == 0
    assert connected_components(mesh) == 1
    # topology is stable under refinement
    assert total_genus(extract_mesh(scene, resolution=48)) == 1


def test_two_spheres_topology():
    scene = Scene.from_matrices([
        sphere_form(radius=0.3, center=(-0.5, 0.0, 0.0)),
        sphere_form(radius=0.3, center=(0.5, 0.0, 0.0)),
    ])
    mesh = extract_mesh(scene, resolution=64)
    assert connected_components(mesh) == 2
    assert euler_characteristic(mesh) == 4
    assert total_genus(mesh) == 0


def test_uniform_field_warns_and_yields_empty_mesh():
    hollow = RawPrimitiveParams(b=np.zeros(55), r_raw=-RAW_CLAMP, c_raw=np.zeros(3))
    scene = Scene.from_raw([hollow])
    with pytest.warns(UserWarning, match="uniformly positive"):
        mesh = extract_mesh(scene, resolution=16)
    assert len(mesh.vertices) == 0
    assert len(mesh.faces) == 0

    # constant -1 field: inside everywhere
    A = np.zeros((10, 10))
    A[0, 0] = -1.0
    inside_everywhere = Scene.from_matrices([(A, np.zeros(3))])
    with pytest.warns(UserWarning, match="uniformly negative"):
        mesh = extract_mesh(inside_everywhere, resolution=16)
    assert len(mesh.faces) == 0


def test_label_vertices_two_blobs():
    scene = Scene.from_matrices([
        sphere_form(radius=0.3, center=(-0.5, 0.0, 0.0)),
        sphere_form(radius=0.3, center=(0.5, 0.0, 0.0)),
    ])
    mesh = extract_mesh(scene, resolution=48)
    labeled = label_vertices(scene, mesh)
    assert isinstance(labeled, LabeledMesh)
    assert len(labeled.labels) == len(mesh.vertices)
    left = mesh.vertices[:, 0] < 0
    assert np.all(labeled.labels[left] == 0)
    assert np.all(labeled.labels[~left] == 1)


def test_label_vertices_single_primitive(unit_sphere_scene):
    mesh = extract_mesh(unit_sphere_scene, resolution=24)
    labeled = label_vertices(unit_sphere_scene, mesh)
    assert np.all(labeled.labels == 0)


def test_label_empty_mesh(unit_sphere_scene):
    empty = TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    labeled = label_vertices(unit_sphere_scene, empty)
    assert len(labeled.labels) == 0


def test_labeled_mesh_length_check(unit_sphere_scene):
    mesh = extract_mesh(unit_sphere_scene, resolution=16)
    with pytest.raises(ValueError):
        LabeledMesh(mesh, np.zeros(len(mesh.vertices) + 1, dtype=np.int64))


def test_save_labels(tmp_path, unit_sphere_scene):
    mesh = extract_mesh(unit_sphere_scene, resolution=16)
    labeled = label_vertices(unit_sphere_scene, mesh)
    path = tmp_path / "verts.labels"
    save_labels(labeled, str(path))
    lines = path.read_text().splitlines()
    assert len(lines) == len(mesh.vertices)
    assert all(line == "0" for line in lines)


def test_extract_threads_identical(unit_sphere_scene):
    a = extract_mesh(unit_sphere_scene, resolution=32, threads=1)
    b = extract_mesh(unit_sphere_scene, resolution=32, threads=3)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.faces, b.faces)


def test_euler_characteristic_counts_used_vertices_only():
    v = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [9.0, 9, 9]])
    f = np.array([[0, 1, 2]])
    assert euler_characteristic(TriMesh(v, f)) == 1  # 3 - 3 + 1, spare vertex ignored
    f2 = np.array([[0, 1, 2], [1, 2, 3]])
    assert euler_characteristic(TriMesh(v, f2)) == 1  # 4 - 5 + 2


def test_connected_components_counts():
    v = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0],
                  [5.0, 0, 0], [6.0, 0, 0], [5.0, 1, 0]])
    f = np.array([[0, 1, 2], [3, 4, 5]])
    assert connected_components(TriMesh(v, f)) == 2


def test_total_genus_odd_euler_rejected():
    with pytest.raises(ValueError):
        total_genus(TriMesh(np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]]),
                            np.array([[0, 1, 2]])))
