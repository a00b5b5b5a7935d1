"""Isosurface extraction from union fields, plus small topology checks.

The union value is sampled on a regular grid and the zero level set is
triangulated with marching cubes.  Face windings are then aligned with the
analytic outward normals (the field's sign convention already encodes which
side is inside, so a majority vote over sampled faces settles orientation).
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from skimage import measure

from . import _kernels
from .mesh import TriMesh, face_geometry
from .scene import Scene

DEFAULT_BOUNDS = (-1.1, 1.1)
DEFAULT_RESOLUTION = 128
_CHUNK = 1 << 18


@dataclass
class LabeledMesh:
    """Extracted mesh with the argmin primitive index at each vertex."""

    mesh: TriMesh
    labels: np.ndarray  # (V,) int64

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if len(self.labels) != len(self.mesh.vertices):
            raise ValueError("one label per vertex required")


def grid_eval(scene: Scene, resolution: int, bounds: tuple[float, float] = DEFAULT_BOUNDS,
              threads: int = 1) -> np.ndarray:
    """Union values on a (res, res, res) grid over bounds^3, indexed [ix, iy, iz].

    Chunk boundaries are fixed by the grid size alone, and every chunk writes
    a disjoint slice, so the result is identical for any thread count.
    """
    if resolution < 2:
        raise ValueError("grid resolution must be at least 2")
    lo, hi = bounds
    axis = np.linspace(lo, hi, resolution)
    xs, ys, zs = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)
    vals = np.empty(len(pts))
    ranges = [(s, min(s + _CHUNK, len(pts))) for s in range(0, len(pts), _CHUNK)]

    def run(rg):
        start, stop = rg
        v, _ = _kernels.union_eval(scene.A_stack, scene.center_stack,
                                   np.ascontiguousarray(pts[start:stop]))
        vals[start:stop] = v

    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, ranges))
    else:
        for rg in ranges:
            run(rg)
    return vals.reshape(resolution, resolution, resolution)


def extract_mesh(scene: Scene, resolution: int = DEFAULT_RESOLUTION,
                 bounds: tuple[float, float] = DEFAULT_BOUNDS,
                 threads: int = 1) -> TriMesh:
    """Triangulate the zero level set of the union field.

    A field with uniform sign over the grid yields an empty mesh and a
    warning rather than an error.
    """
    if resolution < 8:
        raise ValueError("extraction resolution must be at least 8")
    vol = grid_eval(scene, resolution, bounds, threads=threads)
    if vol.min() >= 0.0 or vol.max() <= 0.0:
        side = "positive" if vol.min() >= 0.0 else "negative"
        warnings.warn(f"union field is uniformly {side} over the grid; "
                      "extraction yields an empty mesh", stacklevel=2)
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    lo, hi = bounds
    h = (hi - lo) / (resolution - 1)
    verts, faces, _, _ = measure.marching_cubes(vol, level=0.0, spacing=(h, h, h))
    verts = verts + lo
    mesh = TriMesh(np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64))
    return _orient_outward(scene, mesh)


def _orient_outward(scene: Scene, mesh: TriMesh, probe: int = 256) -> TriMesh:
    """Flip every face if wound normals mostly oppose the analytic normals."""
    areas, normals = face_geometry(mesh)
    take = np.linspace(0, len(mesh.faces) - 1, min(probe, len(mesh.faces))).astype(np.int64)
    take = take[areas[take] > 0.0]
    if take.size == 0:
        return mesh
    centroids = mesh.vertices[mesh.faces[take]].mean(axis=1)
    _, _, grads = scene.eval_union_grad(centroids)
    gn = np.linalg.norm(grads, axis=1)
    ok = gn > 1e-12
    if not np.any(ok):
        return mesh
    agree = np.einsum("fk,fk->f", normals[take][ok], grads[ok] / gn[ok, None])
    if np.median(agree) < 0.0:
        return TriMesh(mesh.vertices, mesh.faces[:, ::-1].copy())
    return mesh


def label_vertices(scene: Scene, mesh: TriMesh) -> LabeledMesh:
    """Label each vertex with its argmin primitive index (the semantic label)."""
    if len(mesh.vertices) == 0:
        return LabeledMesh(mesh=mesh, labels=np.zeros(0, dtype=np.int64))
    _, idx = scene.eval_union(np.asarray(mesh.vertices, dtype=np.float64))
    return LabeledMesh(mesh=mesh, labels=idx)


def save_labels(labeled: LabeledMesh, path: str) -> None:
    """Sidecar label file: one primitive index per vertex line."""
    with open(path, "w", encoding="ascii") as fh:
        for v in labeled.labels:
            fh.write(f"{int(v)}\n")


def euler_characteristic(mesh: TriMesh) -> int:
    """V - E + F with E counted over unique undirected edges."""
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    n_edges = len(np.unique(edges, axis=0))
    used = np.unique(f)
    return int(len(used) - n_edges + len(f))


def connected_components(mesh: TriMesh) -> int:
    """Number of vertex-connected components among used vertices."""
    parent = np.arange(len(mesh.vertices))

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for a, b, c in mesh.faces:
        ra, rb, rc = find(a), find(b), find(c)
        parent[rb] = ra
        parent[find(rc)] = find(ra)
    used = np.unique(mesh.faces)
    return len({find(int(v)) for v in used})


def total_genus(mesh: TriMesh) -> int:
    """Sum of genera over components of a closed orientable triangle mesh."""
    chi = euler_characteristic(mesh)
    comps = connected_components(mesh)
    if chi % 2 != 0:
        raise ValueError(f"odd Euler characteristic {chi}; surface is not closed")
    return comps - chi // 2
