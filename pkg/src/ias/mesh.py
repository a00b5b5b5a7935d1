"""Triangle meshes and the sample sets derived from them.

This module covers the data path from a watertight OBJ file to the point
samples a fit consumes: normalization into the canonical cube, area-weighted
surface sampling with normals, axis-parity inside/outside classification for
volume points, and a small binary cache so large sample sets load fast.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

CACHE_MAGIC = b"IASS"
CACHE_VERSION = 1

DEFAULT_DOMAIN = (-1.1, 1.1)


class SampleCacheError(ValueError):
    """Sample cache file is malformed or truncated."""


class WatertightnessError(ValueError):
    """Parity votes disagree too often for the mesh to be trusted as watertight."""


@dataclass
class TriMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray     # (F, 3) int64, indices into vertices

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError(f"vertices must be (V, 3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError(f"faces must be (F, 3), got {self.faces.shape}")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("non-finite vertex coordinate")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")

    @property
    def bounds(self) -> np.ndarray:
        """(2, 3) array [lo, hi] of the axis-aligned bounding box."""
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def is_watertight(self) -> bool:
        """Heuristic: every undirected edge is shared by exactly two faces."""
        if len(self.faces) == 0:
            return False
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


def drop_degenerate_faces(mesh: TriMesh) -> TriMesh:
    """Remove zero-area triangles (repeated vertices or collinear corners)."""
    areas, _ = face_geometry(mesh)
    keep = areas > 0.0
    if keep.all():
        return mesh
    return TriMesh(mesh.vertices, mesh.faces[keep])


def surface_area(mesh: TriMesh) -> float:
    areas, _ = face_geometry(mesh)
    return float(areas.sum())


def enclosed_volume(mesh: TriMesh) -> float:
    """Volume bounded by a closed, outward-oriented mesh (signed tetrahedra)."""
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def load_obj(path: str) -> TriMesh:
    """Read vertices and faces from a Wavefront OBJ file.

    Only v and f records are used; texture/normal fields in face entries are
    ignored and polygons with more than three vertices are fan-triangulated.
    """
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad vertex coordinate") from None
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    try:
                        raw = int(tok.split("/")[0])
                    except ValueError:
                        raise ValueError(f"{path}:{lineno}: bad face index {tok!r}") from None
                    k = raw - 1 if raw > 0 else len(verts) + raw
                    if not 0 <= k < len(verts):
                        raise ValueError(f"{path}:{lineno}: face index {raw} out of range")
                    idx.append(k)
                if len(idx) < 3:
                    raise ValueError(f"{path}:{lineno}: face needs at least 3 vertices")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise ValueError(f"{path}: no triangles found")
    mesh = drop_degenerate_faces(TriMesh(np.array(verts), np.array(faces)))
    if not mesh.is_watertight():
        warnings.warn(f"{path}: mesh has boundary or over-shared edges; "
                      "inside/outside labels may be unreliable", stacklevel=2)
    return mesh


def save_obj(mesh: TriMesh, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


@dataclass
class NormalizeTransform:
    """Map applied to a mesh: x_norm = (x - offset) * scale."""

    scale: float
    offset: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.offset) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale + self.offset


def normalize(mesh: TriMesh, extent: float = 1.0) -> tuple[TriMesh, NormalizeTransform]:
    """Center the mesh and scale its longest bounding-box axis to [-extent, extent]."""
    lo, hi = mesh.bounds
    longest = float((hi - lo).max())
    if longest <= 0.0:
        raise ValueError("degenerate mesh: zero bounding-box extent")
    tf = NormalizeTransform(scale=2.0 * extent / longest, offset=(lo + hi) / 2.0)
    return TriMesh(tf.apply(mesh.vertices), mesh.faces.copy()), tf


def face_geometry(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """(areas (F,), unit normals (F, 3)); zero-area faces get a zero normal."""
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    cross = np.cross(b - a, c - a)
    norms = np.linalg.norm(cross, axis=1)
    areas = 0.5 * norms
    safe = np.where(norms > 0.0, norms, 1.0)
    normals = cross / safe[:, None]
    normals[norms == 0.0] = 0.0
    return areas, normals


def sample_surface(mesh: TriMesh, n: int, rng: np.random.Generator,
                   verify_orientation: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """n area-weighted surface points with their outward face normals.

    Winding is assumed consistent but not trusted blindly: when the mesh is
    watertight, a 1% subsample is pushed a little along its normal and the
    parity test checks the pushed points land outside; a majority landing
    inside flips every normal.
    """
    areas, normals = face_geometry(mesh)
    total = areas.sum()
    if total <= 0.0:
        raise ValueError("mesh has zero surface area")
    fi = rng.choice(len(areas), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    su = np.sqrt(u)
    w0 = 1.0 - su
    w1 = su * (1.0 - v)
    w2 = su * v
    tri = mesh.vertices[mesh.faces[fi]]
    pts = w0[:, None] * tri[:, 0] + w1[:, None] * tri[:, 1] + w2[:, None] * tri[:, 2]
    nrm = normals[fi].copy()
    if verify_orientation and mesh.is_watertight():
        k = min(max(n // 100, 8), 256, n)
        check_rng = np.random.default_rng(0xFACE5)
        sub = check_rng.choice(n, size=k, replace=False)
        scale = float((mesh.bounds[1] - mesh.bounds[0]).max())
        probes = pts[sub] + 1e-3 * scale * nrm[sub]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sgn = point_sign(mesh, probes, rng=check_rng)
        if (sgn < 0).mean() > 0.5:
            nrm = -nrm
    return pts, nrm


class _AxisCaster:
    """Counts +axis ray crossings for query points against a fixed mesh.

    Triangles are binned on their projection perpendicular to the cast axis;
    a query visits one cell.  Crossings whose barycentric coordinates graze an
    edge, or whose hit parameter grazes the query itself, invalidate the vote
    instead of guessing.
    """

    GRID = 32
    BARY_TOL = 1e-9

    def __init__(self, mesh: TriMesh, axis: int):
        self.axis = axis
        i, j = [d for d in range(3) if d != axis]
        self.dims = (i, j)
        v = mesh.vertices
        f = mesh.faces
        self.a2 = v[f[:, 0]][:, [i, j]]
        self.b2 = v[f[:, 1]][:, [i, j]]
        self.c2 = v[f[:, 2]][:, [i, j]]
        # signed projected area (x2) in (i, j) coordinates, for barycentrics
        self.s = ((self.b2[:, 0] - self.a2[:, 0]) * (self.c2[:, 1] - self.a2[:, 1])
                  - (self.b2[:, 1] - self.a2[:, 1]) * (self.c2[:, 0] - self.a2[:, 0]))
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        self.plane_d = np.einsum("fk,fk->f", cross, v[f[:, 0]])
        self.n2 = cross[:, [i, j]]
        self.n_axis = np.ascontiguousarray(cross[:, axis])

        lo, hi = mesh.bounds
        self.lo = lo[[i, j]] - 1e-9
        span = hi[[i, j]] - lo[[i, j]]
        self.inv = self.GRID / np.where(span > 0.0, span + 2e-9, 1.0)
        self.scale = float(max(span.max(), 1e-12))
        self.degenerate = np.abs(self.n_axis) <= 1e-14 * self.scale * self.scale

        fmin = np.minimum(np.minimum(self.a2, self.b2), self.c2)
        fmax = np.maximum(np.maximum(self.a2, self.b2), self.c2)
        lo_cell = np.clip(((fmin - self.lo) * self.inv).astype(np.int64), 0, self.GRID - 1)
        hi_cell = np.clip(((fmax - self.lo) * self.inv).astype(np.int64), 0, self.GRID - 1)
        buckets: list[list[int]] = [[] for _ in range(self.GRID * self.GRID)]
        for fidx in range(len(f)):
            for cx in range(lo_cell[fidx, 0], hi_cell[fidx, 0] + 1):
                base = cx * self.GRID
                for cy in range(lo_cell[fidx, 1], hi_cell[fidx, 1] + 1):
                    buckets[base + cy].append(fidx)
        self.buckets = [np.array(bk, dtype=np.int64) for bk in buckets]

    def cast(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(votes in {-1, +1}, valid mask) for each point."""
        i, j = self.dims
        p2 = points[:, [i, j]]
        pr = points[:, self.axis]
        cell = np.clip(((p2 - self.lo) * self.inv).astype(np.int64), 0, self.GRID - 1)
        cell_id = cell[:, 0] * self.GRID + cell[:, 1]

        odd = np.zeros(len(points), dtype=bool)
        valid = np.ones(len(points), dtype=bool)
        order = np.argsort(cell_id, kind="stable")
        sorted_ids = cell_id[order]
        starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
        ends = np.r_[starts[1:], len(sorted_ids)]
        for s0, s1 in zip(starts, ends):
            rows = order[s0:s1]
            fidx = self.buckets[sorted_ids[s0]]
            if fidx.size == 0:
                continue
            self._cast_cell(rows, fidx, p2[rows], pr[rows], odd, valid)
        return np.where(odd, -1, 1).astype(np.int8), valid

    def _cast_cell(self, rows, fidx, p2, pr, odd, valid):
        a, b, c = self.a2[fidx], self.b2[fidx], self.c2[fidx]
        s = self.s[fidx]
        px = p2[:, 0:1]
        py = p2[:, 1:2]
        d0 = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (b[:, 1] - a[:, 1]) * (px - a[:, 0])
        d1 = (c[:, 0] - b[:, 0]) * (py - b[:, 1]) - (c[:, 1] - b[:, 1]) * (px - b[:, 0])
        d2 = (a[:, 0] - c[:, 0]) * (py - c[:, 1]) - (a[:, 1] - c[:, 1]) * (px - c[:, 0])
        degen = self.degenerate[fidx]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = d0 / s
            v = d1 / s
            w = d2 / s
        inside_loose = (u >= -self.BARY_TOL) & (v >= -self.BARY_TOL) & (w >= -self.BARY_TOL) & ~degen
        inside_strict = (u > self.BARY_TOL) & (v > self.BARY_TOL) & (w > self.BARY_TOL) & ~degen

        # hit parameter along the cast axis from the face plane equation
        n2 = self.n2[fidx]
        with np.errstate(divide="ignore", invalid="ignore"):
            hit = (self.plane_d[fidx] - n2[:, 0] * px - n2[:, 1] * py) / self.n_axis[fidx]
        eps = 1e-9 * max(self.scale, 1.0)
        crossing = inside_strict & (hit > pr[:, None] + eps)
        graze = (inside_loose & ~inside_strict) | (inside_strict & (np.abs(hit - pr[:, None]) <= eps))
        if degen.any():
            # a degenerate face projects to a segment; only rays passing within
            # eps of that segment are uncertain, not the whole projected bbox
            lo = np.minimum(np.minimum(a, b), c)
            hi = np.maximum(np.maximum(a, b), c)
            in_box = ((px >= lo[:, 0] - eps) & (px <= hi[:, 0] + eps)
                      & (py >= lo[:, 1] - eps) & (py <= hi[:, 1] + eps))
            lens = np.stack([
                np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]),
                np.hypot(c[:, 0] - b[:, 0], c[:, 1] - b[:, 1]),
                np.hypot(a[:, 0] - c[:, 0], a[:, 1] - c[:, 1]),
            ])
            with np.errstate(divide="ignore", invalid="ignore"):
                dists = np.abs(np.stack([d0, d1, d2]).transpose(0, 2, 1)) / lens[:, :, None]
            dist_line = np.nanmin(np.where(lens[:, :, None] > 0.0, dists, np.inf), axis=0)
            graze |= in_box & degen & (dist_line.T <= eps)
        odd[rows] ^= (crossing.sum(axis=1) % 2).astype(bool)
        valid[rows] = ~graze.any(axis=1)  # each point visits exactly one cell


def point_sign(mesh: TriMesh, points: np.ndarray, rng: np.random.Generator | None = None,
               max_retries: int = 8, escalate_disagreement: bool = False) -> np.ndarray:
    """Classify points as inside (-1) or outside (+1) a watertight mesh.

    Each point gets three independent parity votes, one per coordinate axis.
    Votes invalidated by grazing hits, and ties between the survivors, are
    settled by re-casting from a slightly jittered copy of the point.  Points
    exactly on the surface are not meaningful inputs here.

    A disagreement rate above 0.1% among fully-valid votes normally warns;
    with escalate_disagreement it raises WatertightnessError instead, which
    is what batch calibration during sampling wants.
    """
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    if len(points) == 0:
        return np.zeros(0, dtype=np.int8)
    if rng is None:
        rng = np.random.default_rng(0x1A5)
    casters = [_AxisCaster(mesh, axis) for axis in range(3)]
    scale = float((mesh.bounds[1] - mesh.bounds[0]).max())

    votes = np.zeros((len(points), 3), dtype=np.int8)
    valid = np.zeros((len(points), 3), dtype=bool)
    for axis, caster in enumerate(casters):
        votes[:, axis], valid[:, axis] = caster.cast(points)

    vote_sum = (votes * valid).sum(axis=1)
    n_valid = valid.sum(axis=1)
    resolved = (n_valid == 3) | ((n_valid == 2) & (vote_sum != 0))

    full = n_valid == 3
    if full.sum() > 0:
        split = np.abs(vote_sum[full]) == 1
        frac = split.mean()
        if frac > 1e-3:
            msg = (f"{frac:.2%} of inside/outside queries got disagreeing axis votes; "
                   "the mesh may not be watertight")
            if escalate_disagreement:
                raise WatertightnessError(msg)
            warnings.warn(msg, stacklevel=2)

    signs = np.where(vote_sum < 0, -1, 1).astype(np.int8)
    pending = np.flatnonzero(~resolved)
    jitter = 1e-7 * scale
    for _ in range(max_retries):
        if pending.size == 0:
            break
        moved = points[pending] + rng.normal(0.0, jitter, size=(pending.size, 3))
        v2 = np.zeros((pending.size, 3), dtype=np.int8)
        ok2 = np.zeros((pending.size, 3), dtype=bool)
        for axis, caster in enumerate(casters):
            v2[:, axis], ok2[:, axis] = caster.cast(moved)
        s2 = (v2 * ok2).sum(axis=1)
        nv2 = ok2.sum(axis=1)
        done = (nv2 == 3) | ((nv2 == 2) & (s2 != 0))
        signs[pending[done]] = np.where(s2[done] < 0, -1, 1)
        pending = pending[~done]
        jitter *= 4.0
    if pending.size:
        warnings.warn(f"{pending.size} points kept ambiguous parity after retries; "
                      "treating majority of raw votes as the answer", stacklevel=2)
        signs[pending] = np.where(vote_sum[pending] < 0, -1, 1)
    return signs


@dataclass
class SampleSet:
    """Classified point samples for one shape, in the normalized frame."""

    on_points: np.ndarray    # (S, 3)
    on_normals: np.ndarray   # (S, 3) unit outward
    in_points: np.ndarray    # (I, 3)
    out_points: np.ndarray   # (O, 3)
    domain: np.ndarray       # (2, 3) [lo, hi] volume sampling box

    def __post_init__(self):
        for name in ("on_points", "on_normals", "in_points", "out_points"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64).reshape(-1, 3)
            setattr(self, name, arr)
        self.domain = np.ascontiguousarray(self.domain, dtype=np.float64).reshape(2, 3)
        if len(self.on_points) != len(self.on_normals):
            raise ValueError("on_points and on_normals disagree in length")
        lo, hi = self.domain
        for name in ("on_points", "in_points", "out_points"):
            pts = getattr(self, name)
            if len(pts) and (np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12)):
                raise ValueError(f"{name} fall outside the sampling domain")

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.on_points), len(self.in_points), len(self.out_points)


def build_sample_set(mesh: TriMesh, n_volume: int = 100_000, n_surface: int = 10_000,
                     seed: int = 0,
                     domain: tuple[float, float] = DEFAULT_DOMAIN) -> SampleSet:
    """Sample a normalized watertight mesh into on/in/out point sets.

    Volume points are drawn uniformly from the domain box and labeled by the
    parity test; a disagreement rate over 0.1% on that batch is treated as
    proof the mesh is not watertight and raises.  Deterministic under seed.
    """
    rng = np.random.default_rng(seed)
    on_pts, on_nrm = sample_surface(mesh, n_surface, rng)
    lo, hi = domain
    vol = rng.uniform(lo, hi, size=(n_volume, 3))
    sgn = point_sign(mesh, vol, rng=rng, escalate_disagreement=True)
    return SampleSet(
        on_points=on_pts,
        on_normals=on_nrm,
        in_points=vol[sgn < 0],
        out_points=vol[sgn > 0],
        domain=np.array([[lo] * 3, [hi] * 3]),
    )


def save_sample_set(ss: SampleSet, path: str) -> None:
    """Write the little-endian binary cache (IASS magic, version, counts, payload)."""
    n_on, n_in, n_out = ss.counts
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", CACHE_VERSION))
        fh.write(struct.pack("<3Q", n_on, n_in, n_out))
        fh.write(ss.domain.astype("<f8").tobytes())
        for arr in (ss.on_points, ss.on_normals, ss.in_points, ss.out_points):
            fh.write(arr.astype("<f8").tobytes())


def load_sample_set(path: str) -> SampleSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 80 or blob[:4] != CACHE_MAGIC:
        raise SampleCacheError(f"{path}: not a sample cache file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CACHE_VERSION:
        raise SampleCacheError(f"{path}: unsupported cache version {version}")
    n_on, n_in, n_out = struct.unpack_from("<3Q", blob, 8)
    domain = np.frombuffer(blob, dtype="<f8", count=6, offset=32).reshape(2, 3)
    expected = 80 + 8 * 3 * (2 * n_on + n_in + n_out)
    if len(blob) != expected:
        raise SampleCacheError(f"{path}: expected {expected} bytes, found {len(blob)}")
    off = 80
    out = []
    for count in (n_on, n_on, n_in, n_out):
        arr = np.frombuffer(blob, dtype="<f8", count=3 * count, offset=off).reshape(count, 3)
        out.append(arr.astype(np.float64))
        off += 8 * 3 * count
    ss = SampleSet(out[0], out[1], out[2], out[3], domain=domain.astype(np.float64))
    for name in ("on_points", "on_normals", "in_points", "out_points"):
        if not np.all(np.isfinite(getattr(ss, name))):
            raise SampleCacheError(f"{path}: non-finite values in {name}")
    return ss
