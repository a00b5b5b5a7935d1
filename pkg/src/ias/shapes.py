"""Procedural watertight meshes used by tests, benchmarks and demos."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh, face_geometry


def _flip_inward_faces(mesh: TriMesh) -> TriMesh:
    """Make windings outward for star-shaped solids centered at the origin."""
    _, normals = face_geometry(mesh)
    centroids = mesh.vertices[mesh.faces].mean(axis=1)
    flip = np.einsum("fk,fk->f", centroids, normals) < 0.0
    faces = mesh.faces.copy()
    faces[flip] = faces[flip][:, ::-1]
    return TriMesh(mesh.vertices, faces)


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Geodesic sphere: icosahedron refined `subdivisions` times (20 * 4^n faces)."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v / np.linalg.norm(v) for v in verts]

    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        next_faces = []
        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            next_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = next_faces

    mesh = TriMesh(radius * np.array(verts), np.array(faces, dtype=np.int64))
    return _flip_inward_faces(mesh)


def box(half_extents=(1.0, 1.0, 1.0)) -> TriMesh:
    hx, hy, hz = (float(v) for v in half_extents)
    corners = np.array(
        [[sx * hx, sy * hy, sz * hz]
         for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
        dtype=np.float64,
    )
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5),  # x- and x+ sides
        (0, 4, 5, 1), (2, 3, 7, 6),  # y- and y+
        (0, 2, 6, 4), (1, 5, 7, 3),  # z- and z+
    ]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return _flip_inward_faces(TriMesh(corners, np.array(faces, dtype=np.int64)))


def torus(major: float = 0.7, minor: float = 0.25,
          n_major: int = 48, n_minor: int = 24) -> TriMesh:
    """Torus around the z axis; winding follows du x dv, which points outward."""
    if not 0.0 < minor < major:
        raise ValueError("torus needs 0 < minor < major")
    u = 2.0 * np.pi * np.arange(n_major) / n_major
    v = 2.0 * np.pi * np.arange(n_minor) / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ring = major + minor * np.cos(vv)
    verts = np.stack([ring * np.cos(uu), ring * np.sin(uu), minor * np.sin(vv)], axis=-1)
    verts = verts.reshape(-1, 3)

    def vid(i: int, j: int) -> int:
        return (i % n_major) * n_minor + (j % n_minor)

    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            p00 = vid(i, j)
            p10 = vid(i + 1, j)
            p11 = vid(i + 1, j + 1)
            p01 = vid(i, j + 1)
            faces += [(p00, p10, p11), (p00, p11, p01)]
    return TriMesh(verts, np.array(faces, dtype=np.int64))
