"""Camera, ray generation, shading modes, PPM IO."""

import numpy as np
import pytest

from conftest import sphere_form
from ias.render import (
    BACKGROUND,
    MODES,
    PALETTE,
    PALETTE_SIZE,
    Camera,
    primitive_color,
    read_ppm,
    render,
    write_ppm,
)
from ias.scene import Scene


def head_on_camera(size=64):
    return Camera(eye=np.array([0.0, 0.0, -3.0]), look_at=np.zeros(3),
                  up=np.array([0.0, 1.0, 0.0]), vertical_fov=40.0,
                  width=size, height=size)


@pytest.fixture()
def two_blob_scene():
    return Scene.from_matrices([
        sphere_form(radius=0.35, center=(-0.45, 0.0, 0.0)),
        sphere_form(radius=0.35, center=(0.45, 0.0, 0.0)),
    ])


def test_camera_validation():
    eye = np.array([0.0, 0.0, -3.0])
    with pytest.raises(ValueError, match="coincide"):
        Camera(eye=eye, look_at=eye.copy()).rays()
    with pytest.raises(ValueError, match="parallel"):
        Camera(eye=eye, look_at=np.zeros(3), up=np.array([0.0, 0.0, 1.0])).rays()
    with pytest.raises(ValueError):
        Camera(eye=eye, look_at=np.zeros(3), vertical_fov=0.0)
    with pytest.raises(ValueError):
        Camera(eye=eye, look_at=np.zeros(3), vertical_fov=180.0)
    with pytest.raises(ValueError):
        Camera(eye=eye, look_at=np.zeros(3), width=0)


def test_rays_shape_and_normalization():
    cam = head_on_camera(8)
    origins, dirs = cam.rays()
    assert origins.shape == (64, 3)
    assert dirs.shape == (64, 3)
    assert np.allclose(origins, cam.eye)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
    # all rays head toward the scene
    assert np.all(dirs[:, 2] > 0)


def test_center_ray_matches_forward():
    cam = head_on_camera(64)
    _, dirs = cam.rays()
    center = dirs.reshape(64, 64, 3)[32, 32]
    assert np.allclose(center, [0.0, 0.0, 1.0], atol=1e-12)


def test_lambert_center_pixel_fully_lit(unit_sphere_scene):
    img = render(unit_sphere_scene, head_on_camera(64), mode="lambert")
    assert img.shape == (64, 64, 3)
    assert img.dtype == np.uint8
    # head-on surface normal faces the viewer exactly: full brightness
    assert tuple(img[32, 32]) == (255, 255, 255)
    # grazing pixels inside the silhouette are darker than the center
    assert img[32, 22, 0] < 255
    # greyscale shading
    assert np.array_equal(img[..., 0], img[..., 1])
    assert np.array_equal(img[..., 0], img[..., 2])


def test_background_is_white(unit_sphere_scene):
    img = render(unit_sphere_scene, head_on_camera(48), mode="lambert")
    assert tuple(img[0, 0]) == (255, 255, 255)
    assert tuple(BACKGROUND) == (255, 255, 255)


def test_t_max_clips_scene(unit_sphere_scene):
    img = render(unit_sphere_scene, head_on_camera(32), mode="lambert", t_max=1.0)
    assert np.all(img == 255)  # sphere surface starts two units out


def test_primitive_id_mode_uses_one_color_per_blob(two_blob_scene):
    img = render(two_blob_scene, head_on_camera(72), mode="primitive_id")
    flat = img.reshape(-1, 3)
    fg = flat[np.any(flat != 255, axis=1)]
    colors = {tuple(c) for c in fg}
    def quantized(index):
        return tuple(np.clip(primitive_color(index) * 255.0 + 0.5, 0, 255)
                     .astype(np.uint8))

    assert colors == {quantized(0), quantized(1)}
    # the blobs are disjoint in screen space: each half of the frame is one
    # flat color, and the halves differ
    left = img[:, :36].reshape(-1, 3)
    right = img[:, 36:].reshape(-1, 3)
    left_colors = {tuple(c) for c in left[np.any(left != 255, axis=1)]}
    right_colors = {tuple(c) for c in right[np.any(right != 255, axis=1)]}
    assert len(left_colors) == 1 and len(right_colors) == 1
    assert left_colors != right_colors


def test_normal_map_center_pixel(unit_sphere_scene):
    img = render(unit_sphere_scene, head_on_camera(64), mode="normal_map")
    # normal (0, 0, -1) encodes to (0.5, 0.5, 0)
    center = img[32, 32].astype(int)
    assert abs(center[0] - 128) <= 1
    assert abs(center[1] - 128) <= 1
    assert center[2] <= 1


def test_unknown_mode_rejected(unit_sphere_scene):
    assert MODES == ("lambert", "primitive_id", "normal_map")
    with pytest.raises(ValueError):
        render(unit_sphere_scene, head_on_camera(16), mode="xray")


def test_render_threads_identical(unit_sphere_scene):
    a = render(unit_sphere_scene, head_on_camera(40), mode="lambert", threads=1)
    b = render(unit_sphere_scene, head_on_camera(40), mode="lambert", threads=3)
    assert np.array_equal(a, b)


def test_palette_properties():
    assert PALETTE.shape == (PALETTE_SIZE, 3)
    assert PALETTE_SIZE == 100
    assert PALETTE.min() >= 0.0 and PALETTE.max() <= 1.0
    assert len({tuple(c) for c in PALETTE}) == PALETTE_SIZE
    assert np.array_equal(primitive_color(103), PALETTE[3])


def test_ppm_roundtrip(tmp_path):
    rng = np.random.default_rng(81)
    img = rng.integers(0, 256, (17, 23, 3), dtype=np.uint8)
    path = tmp_path / "img.ppm"
    write_ppm(img, str(path))
    back = read_ppm(str(path))
    assert np.array_equal(back, img)
    raw = path.read_bytes()
    assert raw.startswith(b"P6")


def test_ppm_errors(tmp_path):
    bad_magic = tmp_path / "bad.ppm"
    bad_magic.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
    with pytest.raises(ValueError):
        read_ppm(str(bad_magic))
    truncated = tmp_path / "short.ppm"
    truncated.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
    with pytest.raises(ValueError):
        read_ppm(str(truncated))
    with pytest.raises(ValueError):
        write_ppm(np.zeros((4, 4), dtype=np.uint8), str(tmp_path / "grey.ppm"))


def test_write_image_png(tmp_path, unit_sphere_scene):
    PIL = pytest.importorskip("PIL.Image")
    from ias.render import write_image

    img = render(unit_sphere_scene, head_on_camera(24), mode="lambert")
    path = tmp_path / "out.png"
    write_image(img, str(path))
    back = np.asarray(PIL.open(str(path)).convert("RGB"))
    assert np.array_equal(back, img)
