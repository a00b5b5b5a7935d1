"""Direct rendering of union surfaces by closed-form ray tracing.

Each pixel casts one ray; hits come from the quartic root solver, so there is
no marching or SDF sphere tracing.  Pixel (ix, iy) looks through the lattice
point (ix / W, iy / H): with even sizes the exact optical axis is one of the
rays, and halving the resolution keeps every remaining ray identical.
"""

from __future__ import annotations

import colorsys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .quartic import ray_intersect_batch
from .scene import Scene

MODES = ("lambert", "primitive_id", "normal_map")
BACKGROUND = np.array([255, 255, 255], dtype=np.uint8)

PALETTE_SIZE = 100
_GOLDEN = 0.6180339887498949

# Pixel rows per work chunk.  Fixed, so the image never depends on threads.
_ROWS_PER_CHUNK = 16


@dataclass
class Camera:
    eye: np.ndarray
    look_at: np.ndarray = field(default_factory=lambda: np.zeros(3))
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    vertical_fov: float = 40.0
    width: int = 256
    height: int = 256

    def __post_init__(self):
        self.eye = np.asarray(self.eye, dtype=np.float64)
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        if not 0.0 < self.vertical_fov < 180.0:
            raise ValueError("field of view must lie in (0, 180) degrees")

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """(origins, directions) for all H*W pixels in row-major order."""
        forward = self.look_at - self.eye
        fn = np.linalg.norm(forward)
        if fn == 0.0:
            raise ValueError("camera eye and look_at coincide")
        forward = forward / fn
        right = np.cross(forward, self.up)
        rn = np.linalg.norm(right)
        if rn == 0.0:
            raise ValueError("camera up vector is parallel to the view direction")
        right = right / rn
        true_up = np.cross(right, forward)

        half = np.tan(np.radians(self.vertical_fov) / 2.0)
        aspect = self.width / self.height
        u = np.arange(self.width) / self.width
        v = np.arange(self.height) / self.height
        sx = (2.0 * u - 1.0) * half * aspect
        sy = (1.0 - 2.0 * v) * half
        dirs = (forward[None, None, :]
                + sx[None, :, None] * right[None, None, :]
                + sy[:, None, None] * true_up[None, None, :]).reshape(-1, 3)
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        origins = np.broadcast_to(self.eye, dirs.shape).copy()
        return origins, dirs


def _build_palette() -> np.ndarray:
    """100 fixed colors: hue steps of (360/100) * golden ratio conjugate degrees."""
    pal = np.empty((PALETTE_SIZE, 3))
    for i in range(PALETTE_SIZE):
        hue = (i * (360.0 / PALETTE_SIZE) * _GOLDEN) % 360.0
        pal[i] = colorsys.hsv_to_rgb(hue / 360.0, 0.65, 0.95)
    return pal


PALETTE = _build_palette()


def primitive_color(index: int) -> np.ndarray:
    """Stable color for a primitive index, from the fixed 100-entry palette."""
    return PALETTE[index % PALETTE_SIZE].copy()


def _shade(batch, dirs, mode: str) -> np.ndarray:
    n = len(dirs)
    img = np.tile(BACKGROUND.astype(np.float64) / 255.0, (n, 1))
    rows = np.flatnonzero(batch.hit)
    if rows.size == 0:
        return img
    normals = batch.normals[rows]
    if mode == "lambert":
        # headlight at the eye: the light direction is the reversed ray
        lambert = np.maximum(0.0, -np.einsum("nk,nk->n", normals, dirs[rows]))
        img[rows] = (0.1 + 0.9 * lambert)[:, None]
    elif mode == "primitive_id":
        img[rows] = PALETTE[batch.index[rows] % PALETTE_SIZE]
    elif mode == "normal_map":
        img[rows] = 0.5 * (normals + 1.0)
    else:
        raise ValueError(f"unknown render mode {mode!r}; expected one of {MODES}")
    return img


def render(scene: Scene, camera: Camera, mode: str = "lambert",
           t_max: float = np.inf, threads: int = 1) -> np.ndarray:
    """Render to an (H, W, 3) uint8 image; misses show the white background.

    Work splits into fixed groups of pixel rows computed independently, so
    the image is identical whatever the thread count.
    """
    if mode not in MODES:
        raise ValueError(f"unknown render mode {mode!r}; expected one of {MODES}")
    origins, dirs = camera.rays()
    n = len(dirs)
    flat = np.empty((n, 3))
    step = _ROWS_PER_CHUNK * camera.width
    ranges = [(s, min(s + step, n)) for s in range(0, n, step)]

    def work(rg) -> None:
        lo, hi = rg
        batch = ray_intersect_batch(scene, origins[lo:hi], dirs[lo:hi], t_max=t_max)
        flat[lo:hi] = _shade(batch, dirs[lo:hi], mode)

    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, ranges))
    else:
        for rg in ranges:
            work(rg)

    img = np.clip(flat * 255.0 + 0.5, 0.0, 255.0).astype(np.uint8)
    return img.reshape(camera.height, camera.width, 3)


def write_ppm(image: np.ndarray, path: str) -> None:
    """Binary P6 PPM, 8 bits per channel."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("image must be (H, W, 3) uint8")
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if fields[0] != b"P6" or fields[3] != b"255":
        raise ValueError(f"{path}: not an 8-bit P6 PPM file")
    w, h = int(fields[1]), int(fields[2])
    data = blob[pos + 1 : pos + 1 + 3 * w * h]
    if len(data) != 3 * w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()


def write_image(image: np.ndarray, path: str) -> None:
    """Write PPM directly or PNG via Pillow when the extension asks for it."""
    if path.lower().endswith(".png"):
        try:
            from PIL import Image
        except ImportError as exc:
            raise RuntimeError(
                "PNG output needs Pillow; install the png extra or write a .ppm file"
            ) from exc
        Image.fromarray(image, mode="RGB").save(path)
    else:
        write_ppm(image, path)
