"""Closed-form ray intersection with quartic union surfaces.

Restricting one primitive to a ray x(t) = o + t d gives a univariate quartic
in t; its real roots are the only places that primitive's surface can cross
the ray.  A union hit must additionally be a union surface point (no other
primitive already negative there) and must enter the solid: union sign is
non-negative just before the hit and negative just after.  Everything is
closed form; there is no marching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .scene import Scene

T_MIN = 1e-6           # hits closer than this are treated as self-intersection
SURFACE_TOL = 1e-6     # |S| at an accepted hit must fall below this
SIGN_PROBE = 1e-5      # step along the ray used to classify entering hits


class NoRealRootError(ValueError):
    """Raised by solve_quartic when the polynomial has no real root."""


@dataclass
class RayHit:
    t: float
    point: np.ndarray
    normal: np.ndarray
    primitive_index: int


@dataclass
class RayHitBatch:
    """Structure-of-arrays result for a batch of rays; miss rows hold NaN/-1."""

    hit: np.ndarray       # (N,) bool
    t: np.ndarray         # (N,) float64, NaN where miss
    points: np.ndarray    # (N, 3)
    normals: np.ndarray   # (N, 3)
    index: np.ndarray     # (N,) int64 argmin primitive, -1 where miss


def solve_quartic(c4: float, c3: float, c2: float, c1: float, c0: float) -> np.ndarray:
    """Real roots of c4 t^4 + ... + c0, ascending, deduplicated.

    Degenerate leading coefficients fall through to the cubic, quadratic and
    linear formulas.  An identically zero polynomial raises ValueError; a
    polynomial with no real root raises NoRealRootError.
    """
    c = np.array([[c4, c3, c2, c1, c0]], dtype=np.float64)
    if not np.all(np.isfinite(c)):
        raise ValueError("non-finite quartic coefficient")
    if np.all(c == 0.0):
        raise ValueError("all coefficients are zero; every t is a root")
    roots, counts = _kernels.solve_quartics(c)
    n = int(counts[0])
    if n == 0:
        raise NoRealRootError("quartic has no real roots")
    return roots[0, :n].copy()


def restrict_primitive(coeffs: np.ndarray, center: np.ndarray,
                       origin: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Coefficients [c4, c3, c2, c1, c0] of p(o + t d) for one primitive."""
    o = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    d = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    out = _kernels.restrict_rays(np.ascontiguousarray(coeffs, dtype=np.float64),
                                 np.ascontiguousarray(center, dtype=np.float64), o, d)
    return out[0]


def _union_values(scene: Scene, pts: np.ndarray) -> np.ndarray:
    vals, _ = _kernels.union_eval(scene.A_stack, scene.center_stack, np.ascontiguousarray(pts))
    return vals


def ray_intersect_batch(scene: Scene, origins: np.ndarray, directions: np.ndarray,
                        t_max: float = np.inf) -> RayHitBatch:
    """First entering union hit for each ray; directions must be unit length."""
    origins = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
    directions = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
    n = origins.shape[0]
    nrm = np.linalg.norm(directions, axis=1)
    if np.any(np.abs(nrm - 1.0) > 1e-9):
        raise ValueError("ray directions must be unit length")

    miss = RayHitBatch(
        hit=np.zeros(n, dtype=bool),
        t=np.full(n, np.nan),
        points=np.full((n, 3), np.nan),
        normals=np.full((n, 3), np.nan),
        index=np.full(n, -1, dtype=np.int64),
    )
    # empty primitives have no surface on the union, so their roots are noise
    live = np.flatnonzero(~scene.empty_mask)
    m = live.size
    if m == 0:
        return miss

    polys = np.empty((m, n, 5), dtype=np.float64)
    for k, pi in enumerate(live):
        sp = scene.primitives[pi]
        polys[k] = _kernels.restrict_rays(sp.assembled.coeffs, sp.assembled.center,
                                          origins, directions)
    roots, _ = _kernels.solve_quartics(polys.reshape(m * n, 5))
    # candidate matrix per ray: every primitive's roots, ascending, inf-padded
    cand = roots.reshape(m, n, 4).transpose(1, 0, 2).reshape(n, 4 * m)
    cand = np.where(np.isnan(cand) | (cand <= T_MIN) | (cand > t_max), np.inf, cand)
    cand = np.sort(cand, axis=1)

    ray_id, col = np.nonzero(np.isfinite(cand))
    if ray_id.size == 0:
        return miss
    ts = cand[ray_id, col]
    pts = origins[ray_id] + ts[:, None] * directions[ray_id]
    on = _union_values(scene, pts)
    before = _union_values(scene, pts - SIGN_PROBE * directions[ray_id])
    after = _union_values(scene, pts + SIGN_PROBE * directions[ray_id])
    ok = (np.abs(on) <= SURFACE_TOL) & (before >= 0.0) & (after < 0.0)

    accept = np.zeros(cand.shape, dtype=bool)
    accept[ray_id, col] = ok
    any_hit = accept.any(axis=1)
    if not np.any(any_hit):
        return miss
    first = np.argmax(accept, axis=1)  # columns are t-sorted, so first True wins

    out = miss
    rows = np.flatnonzero(any_hit)
    out.hit[rows] = True
    out.t[rows] = cand[rows, first[rows]]
    out.points[rows] = origins[rows] + out.t[rows, None] * directions[rows]
    vals_idx = scene.eval_union_grad(out.points[rows])
    _, idx, grads = vals_idx
    gn = np.linalg.norm(grads, axis=1)
    gn = np.where(gn > 0.0, gn, 1.0)
    out.normals[rows] = grads / gn[:, None]
    out.index[rows] = idx
    return out


def ray_intersect(scene: Scene, origin: np.ndarray, direction: np.ndarray,
                  t_max: float = np.inf) -> RayHit | None:
    """First entering hit of one ray with the union surface, or None."""
    if not scene.primitives:
        return None
    batch = ray_intersect_batch(scene, np.asarray(origin, dtype=np.float64)[None, :],
                                np.asarray(direction, dtype=np.float64)[None, :], t_max)
    if not batch.hit[0]:
        return None
    return RayHit(
        t=float(batch.t[0]),
        point=batch.points[0].copy(),
        normal=batch.normals[0].copy(),
        primitive_index=int(batch.index[0]),
    )
