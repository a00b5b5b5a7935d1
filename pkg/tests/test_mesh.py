"""Mesh IO, geometry, sampling, sign queries, and the sample cache format."""

import struct
import warnings

import numpy as np
import pytest

from ias import shapes
from ias.mesh import (
    DEFAULT_DOMAIN,
    NormalizeTransform,
    SampleCacheError,
    SampleSet,
    TriMesh,
    WatertightnessError,
    build_sample_set,
    drop_degenerate_faces,
    enclosed_volume,
    face_geometry,
    load_obj,
    load_sample_set,
    normalize,
    point_sign,
    sample_surface,
    save_obj,
    save_sample_set,
    surface_area,
)


def open_triangle():
    return TriMesh(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
                   np.array([[0, 1, 2]]))


def test_trimesh_validation():
    with pytest.raises(ValueError):
        TriMesh(np.zeros((3, 2)), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError):
        TriMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))
    v = np.zeros((3, 3))
    v[1, 0] = np.nan
    with pytest.raises(ValueError):
        TriMesh(v, np.array([[0, 1, 2]]))


def test_watertightness_flag():
    assert shapes.icosphere(subdivisions=1).is_watertight()
    assert shapes.box((1.0, 1.0, 1.0)).is_watertight()
    assert shapes.torus(0.7, 0.25).is_watertight()
    assert not open_triangle().is_watertight()


def test_bounds():
    lo, hi = shapes.box((1.0, 0.5, 0.25)).bounds
    assert np.allclose(lo, [-1.0, -0.5, -0.25])
    assert np.allclose(hi, [1.0, 0.5, 0.25])


def test_drop_degenerate_faces():
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
                  [2.0, 0.0, 0.0]])
    f = np.array([[0, 1, 2], [0, 1, 1], [0, 1, 3]])  # repeated index, collinear
    cleaned = drop_degenerate_faces(TriMesh(v, f))
    assert len(cleaned.faces) == 1
    assert list(cleaned.faces[0]) == [0, 1, 2]


def test_box_area_and_volume_exact():
    cube = shapes.box((1.0, 1.0, 1.0))
    assert surface_area(cube) == pytest.approx(24.0, abs=1e-12)
    assert enclosed_volume(cube) == pytest.approx(8.0, abs=1e-12)


def test_icosphere_approximates_sphere():
    m = shapes.icosphere(subdivisions=3, radius=1.0)
    assert surface_area(m) == pytest.approx(4.0 * np.pi, rel=0.02)
    assert enclosed_volume(m) == pytest.approx(4.0 * np.pi / 3.0, rel=0.02)


def test_face_geometry_known_triangle():
    areas, normals = face_geometry(open_triangle())
    assert areas[0] == pytest.approx(0.5)
    assert np.allclose(normals[0], [0.0, 0.0, 1.0])
    flat = TriMesh(np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]]),
                   np.array([[0, 1, 2]]))
    areas, normals = face_geometry(flat)
    assert areas[0] == 0.0
    assert np.array_equal(normals[0], [0.0, 0.0, 0.0])


def test_obj_roundtrip(tmp_path):
    m = shapes.icosphere(subdivisions=1, radius=0.73)
    path = tmp_path / "ball.obj"
    save_obj(m, str(path))
    back = load_obj(str(path))
    assert np.array_equal(back.vertices, m.vertices)  # %.17g is exact
    assert np.array_equal(back.faces, m.faces)


def test_obj_quad_fan(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = load_obj(str(path))
    assert len(m.faces) == 2
    assert surface_area(m) == pytest.approx(1.0)


def test_obj_negative_indices(tmp_path):
    path = tmp_path / "neg.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = load_obj(str(path))
    assert list(m.faces[0]) == [0, 1, 2]


def test_obj_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 oops\n")
    with pytest.raises(ValueError, match=":2:"):
        load_obj(str(path))
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(ValueError, match=":4:"):
        load_obj(str(path))


def test_obj_without_faces_rejected(tmp_path):
    path = tmp_path / "points.obj"
    path.write_text("v 0 0 0\nv 1 0 0\n")
    with pytest.raises(ValueError, match="no triangles"):
        load_obj(str(path))


def test_obj_open_mesh_warns(tmp_path):
    path = tmp_path / "open.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.warns(UserWarning, match="boundary"):
        load_obj(str(path))


def test_normalize_spans_unit_interval():
    m, tf = normalize(shapes.box((0.4, 0.2, 0.1)))
    lo, hi = m.bounds
    assert lo[0] == pytest.approx(-1.0, abs=1e-12)
    assert hi[0] == pytest.approx(1.0, abs=1e-12)
    assert hi[1] == pytest.approx(0.5, abs=1e-12)  # aspect preserved
    again, tf2 = normalize(m)
    assert np.allclose(again.vertices, m.vertices, atol=1e-12)
    assert tf2.scale == pytest.approx(1.0)


def test_normalize_transform_roundtrip():
    rng = np.random.default_rng(51)
    mesh = TriMesh(rng.uniform(3.0, 9.0, (30, 3)), np.array([[0, 1, 2]]))
    _, tf = normalize(mesh)
    pts = rng.uniform(3.0, 9.0, (100, 3))
    back = tf.invert(tf.apply(pts))
    assert np.allclose(back, pts, rtol=0, atol=1e-12)


def test_sample_surface_respects_area_weights():
    # two coplanar triangles with a 1:49 area ratio
    v = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.2, 0.0],
                  [10.0, 0.0, 0.0], [10.7, 0.0, 0.0], [10.0, 1.4, 0.0]])
    f = np.array([[0, 1, 2], [3, 4, 5]])
    mesh = TriMesh(v, f)
    areas, _ = face_geometry(mesh)
    p_small = areas[0] / areas.sum()
    rng = np.random.default_rng(52)
    pts, normals = sample_surface(mesh, 20_000, rng, verify_orientation=False)
    frac_small = float((pts[:, 0] < 5.0).mean())
    assert abs(frac_small - p_small) < 0.005
    assert np.abs(pts[:, 2]).max() == 0.0  # points stay on the z=0 plane
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)


def test_sample_surface_fixes_flipped_winding():
    m = shapes.icosphere(subdivisions=2, radius=1.0)
    flipped = TriMesh(m.vertices, m.faces[:, ::-1].copy())
    rng = np.random.default_rng(53)
    pts, normals = sample_surface(flipped, 2000, rng)
    outward = np.einsum("ij,ij->i", pts, normals)
    assert (outward > 0).mean() > 0.99
    rng = np.random.default_rng(53)
    pts_raw, normals_raw = sample_surface(flipped, 2000, rng, verify_orientation=False)
    assert (np.einsum("ij,ij->i", pts_raw, normals_raw) < 0).mean() > 0.99


def test_point_sign_cube():
    cube = shapes.box((0.5, 0.5, 0.5))
    g = np.linspace(-0.4, 0.4, 3)
    inside = np.array(np.meshgrid(g, g, g)).reshape(3, -1).T
    outside = inside + np.array([0.0, 0.0, 1.2])
    s = point_sign(cube, np.vstack([inside, outside]))
    assert np.all(s[: len(inside)] == -1)
    assert np.all(s[len(inside):] == 1)


def test_point_sign_sphere_volume_fraction():
    m = shapes.icosphere(subdivisions=3, radius=1.0)
    rng = np.random.default_rng(54)
    pts = rng.uniform(DEFAULT_DOMAIN[0], DEFAULT_DOMAIN[1], (20_000, 3))
    s = point_sign(m, pts)
    box_volume = (DEFAULT_DOMAIN[1] - DEFAULT_DOMAIN[0]) ** 3
    expected = (4.0 * np.pi / 3.0) / box_volume
    assert abs(float((s < 0).mean()) - expected) < 0.01


def test_point_sign_open_mesh_escalates():
    tri = open_triangle()
    probes = np.array([[0.2, 0.2, -0.5], [0.2, 0.2, 0.5], [2.0, 2.0, 0.0]])
    with pytest.raises(WatertightnessError):
        point_sign(tri, probes, escalate_disagreement=True)
    with pytest.warns(UserWarning, match="disagreeing"):
        point_sign(tri, probes)


def test_build_sample_set_is_deterministic():
    m, _ = normalize(shapes.icosphere(subdivisions=2, radius=0.8))
    a = build_sample_set(m, n_volume=3000, n_surface=500, seed=5)
    b = build_sample_set(m, n_volume=3000, n_surface=500, seed=5)
    for name in ("on_points", "on_normals", "in_points", "out_points"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = build_sample_set(m, n_volume=3000, n_surface=500, seed=6)
    assert not np.array_equal(a.on_points, c.on_points)


def test_sample_set_counts_and_partition():
    m, _ = normalize(shapes.icosphere(subdivisions=2, radius=0.8))
    ss = build_sample_set(m, n_volume=4000, n_surface=600, seed=1)
    n_on, n_in, n_out = ss.counts
    assert n_on == 600
    assert n_in + n_out == 4000
    assert n_in > 0 and n_out > 0
    # interior points really are interior: distance to origin below 1 for a
    # normalized sphere, with slack for the faceted surface
    assert np.linalg.norm(ss.in_points, axis=1).max() < 1.01
    assert np.linalg.norm(ss.out_points, axis=1).min() > 0.9


def test_sample_set_rejects_out_of_domain_points():
    good = np.zeros((2, 3))
    bad = np.array([[0.0, 0.0, 0.0], [1.2, 0.0, 0.0]])
    normals = np.tile([1.0, 0.0, 0.0], (2, 1))
    domain = np.array([[DEFAULT_DOMAIN[0]] * 3, [DEFAULT_DOMAIN[1]] * 3])
    with pytest.raises(ValueError, match="domain"):
        SampleSet(on_points=bad, on_normals=normals, in_points=good,
                  out_points=good, domain=domain)


def test_sample_cache_roundtrip(tmp_path):
    m, _ = normalize(shapes.icosphere(subdivisions=2, radius=0.8))
    ss = build_sample_set(m, n_volume=2000, n_surface=400, seed=9)
    path = tmp_path / "samples.iass"
    save_sample_set(ss, str(path))
    back = load_sample_set(str(path))
    for name in ("on_points", "on_normals", "in_points", "out_points", "domain"):
        assert np.array_equal(getattr(back, name), getattr(ss, name))


def test_sample_cache_corruption_detected(tmp_path):
    m, _ = normalize(shapes.icosphere(subdivisions=2, radius=0.8))
    ss = build_sample_set(m, n_volume=1000, n_surface=200, seed=9)
    path = tmp_path / "samples.iass"
    save_sample_set(ss, str(path))
    blob = bytearray(path.read_bytes())

    truncated = tmp_path / "short.iass"
    truncated.write_bytes(bytes(blob[:-16]))
    with pytest.raises(SampleCacheError):
        load_sample_set(str(truncated))

    magic = tmp_path / "magic.iass"
    magic.write_bytes(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(SampleCacheError):
        load_sample_set(str(magic))

    version = tmp_path / "version.iass"
    version.write_bytes(bytes(blob[:4]) + struct.pack("<I", 99) + bytes(blob[8:]))
    with pytest.raises(SampleCacheError):
        load_sample_set(str(version))

    poisoned = tmp_path / "nan.iass"
    blob[80:88] = struct.pack("<d", np.nan)  # first float of on_points
    poisoned.write_bytes(bytes(blob))
    with pytest.raises(SampleCacheError):
        load_sample_set(str(poisoned))
