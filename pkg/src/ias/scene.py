"""Scenes: ordered unions of primitives combined by pointwise minimum.

The union field is S(p) = min_m p_m(p); a point is inside where S < 0, on the
surface where S = 0.  The argmin index doubles as the semantic label and
carries the surface gradient.  Scenes serialize to JSON storing only raw
parameters (plus an informational derived block); load re-assembles and
verifies integrity, so a scene file round-trips bitwise.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .polynomial import expand_to_monomials
from .primitive import (
    AssembledPrimitive,
    DEFAULT_ALPHA,
    RawPrimitiveParams,
    assemble,
    closedness_margin,
    is_empty,
    min_eigenvalue,
)

SCHEMA_VERSION = 1
FILE_SUFFIX = ".ias.json"

DEGENERATE_GRAD_NORM = 1e-9
MAX_PRIMITIVES = 100


class SchemaError(ValueError):
    """Scene file deviates from the expected schema."""


class IntegrityError(ValueError):
    """Scene file content fails verification against its own declarations."""


class DegenerateGradientError(ValueError):
    """Surface normal requested where the union gradient is numerically zero."""


@dataclass
class ScenePrimitive:
    raw: RawPrimitiveParams | None  # None for hand-built analysis scenes
    assembled: AssembledPrimitive


@dataclass
class Scene:
    primitives: list[ScenePrimitive]
    alpha: float = DEFAULT_ALPHA
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= len(self.primitives) <= MAX_PRIMITIVES:
            raise ValueError(
                f"scene must hold 1..{MAX_PRIMITIVES} primitives, got {len(self.primitives)}"
            )

    @classmethod
    def from_raw(
        cls,
        raws: list[RawPrimitiveParams],
        alpha: float = DEFAULT_ALPHA,
        meta: dict[str, str] | None = None,
    ) -> "Scene":
        prims = [ScenePrimitive(raw=r, assembled=assemble(r, alpha)) for r in raws]
        return cls(primitives=prims, alpha=alpha, meta=dict(meta or {}))

    @classmethod
    def from_matrices(cls, mats: list[tuple[np.ndarray, np.ndarray]], alpha: float = DEFAULT_ALPHA) -> "Scene":
        """Hand-built scene from (A, center) pairs; not saveable (no raw params)."""
        prims = []
        for A, center in mats:
            A = np.asarray(A, dtype=np.float64)
            center = np.asarray(center, dtype=np.float64)
            coeffs = expand_to_monomials(A)
            prims.append(
                ScenePrimitive(
                    raw=None,
                    assembled=AssembledPrimitive(A=A, center=center, R=float("nan"), coeffs=coeffs),
                )
            )
        return cls(primitives=prims, alpha=alpha)

    def __len__(self) -> int:
        return len(self.primitives)

    @cached_property
    def A_stack(self) -> np.ndarray:
        return np.ascontiguousarray([p.assembled.A for p in self.primitives])

    @cached_property
    def center_stack(self) -> np.ndarray:
        return np.ascontiguousarray([p.assembled.center for p in self.primitives])

    @cached_property
    def coeff_stack(self) -> np.ndarray:
        return np.ascontiguousarray([p.assembled.coeffs for p in self.primitives])

    @cached_property
    def empty_mask(self) -> np.ndarray:
        """True where a primitive has no interior (A positive semidefinite)."""
        return np.array([is_empty(p.assembled) for p in self.primitives], dtype=bool)

    def eval_union(self, points: np.ndarray):
        """(values, argmin indices); scalar input gives (float, int)."""
        if not self.primitives:
            raise ValueError("cannot evaluate an empty scene")
        p = np.asarray(points, dtype=np.float64)
        if p.ndim == 1:
            vals, idx = _kernels.union_eval(self.A_stack, self.center_stack, p[None, :])
            return float(vals[0]), int(idx[0])
        return _kernels.union_eval(self.A_stack, self.center_stack, np.ascontiguousarray(p))

    def eval_union_grad(self, points: np.ndarray):
        if not self.primitives:
            raise ValueError("cannot evaluate an empty scene")
        p = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.float64)))
        return _kernels.union_eval_grad(self.A_stack, self.center_stack, p)

    def surface_normal(self, points: np.ndarray) -> np.ndarray:
        """Outward unit normal(s): normalized gradient of the argmin primitive."""
        p = np.asarray(points, dtype=np.float64)
        squeeze = p.ndim == 1
        _, _, grads = self.eval_union_grad(np.atleast_2d(p))
        norms = np.linalg.norm(grads, axis=1)
        bad = norms <= DEGENERATE_GRAD_NORM
        if np.any(bad):
            where = np.atleast_2d(p)[np.flatnonzero(bad)[0]]
            raise DegenerateGradientError(f"vanishing union gradient at point {where.tolist()}")
        out = grads / norms[:, None]
        return out[0] if squeeze else out


def prune(scene: Scene, tol: float = 1e-9) -> Scene:
    """Drop primitives whose A is positive semidefinite (no interior anywhere).

    Order is preserved.  A scene never prunes to nothing: if every primitive
    is empty, the one with the most negative eigenvalue is kept and the
    result's meta carries a prune_warning.
    """
    kept = [sp for sp in scene.primitives if not is_empty(sp.assembled, tol)]
    meta = dict(scene.meta)
    if not kept:
        eigs = [min_eigenvalue(sp.assembled) for sp in scene.primitives]
        kept = [scene.primitives[int(np.argmin(eigs))]]
        meta["prune_warning"] = "all primitives empty; kept the least-empty one"
    return Scene(primitives=list(kept), alpha=scene.alpha, meta=meta)


def _primitive_payload(scene: Scene) -> list[dict]:
    payload = []
    for i, sp in enumerate(scene.primitives):
        if sp.raw is None:
            raise ValueError(f"primitive {i} has no raw parameters; hand-built scenes cannot be saved")
        payload.append(
            {
                "b": [float(v) for v in sp.raw.b],
                "r_raw": float(sp.raw.r_raw),
                "c_raw": [float(v) for v in sp.raw.c_raw],
            }
        )
    return payload


def _checksum(version: int, alpha: float, payload: list[dict]) -> str:
    canon = json.dumps(
        {"version": version, "alpha": alpha, "primitives": payload},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canon.encode("ascii")).hexdigest()


def save_scene(scene: Scene, path: str) -> None:
    payload = _primitive_payload(scene)
    meta = {str(k): str(v) for k, v in scene.meta.items()}
    meta["checksum"] = _checksum(SCHEMA_VERSION, scene.alpha, payload)
    derived = []
    for sp in scene.primitives:
        a = sp.assembled
        derived.append(
            {
                "coeffs": [float(v) for v in a.coeffs],
                "R": float(a.R),
                "center": [float(v) for v in a.center],
                "closedness_margin": closedness_margin(a),
                "min_eigenvalue": min_eigenvalue(a),
                "empty": is_empty(a),
            }
        )
    doc = {
        "version": SCHEMA_VERSION,
        "alpha": float(scene.alpha),
        "primitives": payload,
        "meta": meta,
        "derived": derived,
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scene(path: str) -> Scene:
    try:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IntegrityError(f"unreadable scene file {path}: {exc}") from exc

    if not isinstance(doc, dict):
        raise SchemaError("scene file must contain a JSON object")
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})")
    for key in ("alpha", "primitives", "meta"):
        if key not in doc:
            raise SchemaError(f"scene file missing required key {key!r}")
    alpha = doc["alpha"]
    if not isinstance(alpha, (int, float)) or not np.isfinite(alpha) or alpha <= 0:
        raise SchemaError(f"invalid alpha: {alpha!r}")

    entries = doc["primitives"]
    if not isinstance(entries, list) or not 1 <= len(entries) <= MAX_PRIMITIVES:
        raise SchemaError(
            f"scene file must hold 1..{MAX_PRIMITIVES} primitives, "
            f"got {len(entries) if isinstance(entries, list) else type(entries)}"
        )

    raws = []
    for i, entry in enumerate(doc["primitives"]):
        if set(entry.keys()) != {"b", "r_raw", "c_raw"}:
            raise SchemaError(f"primitive {i}: expected keys b, r_raw, c_raw, got {sorted(entry)}")
        b = entry["b"]
        c_raw = entry["c_raw"]
        if not isinstance(b, list) or len(b) != 55:
            raise SchemaError(f"primitive {i}: b must hold 55 values, got {len(b) if isinstance(b, list) else type(b)}")
        if not isinstance(c_raw, list) or len(c_raw) != 3:
            raise SchemaError(f"primitive {i}: c_raw must hold 3 values")
        raws.append(
            RawPrimitiveParams(
                b=np.array(b, dtype=np.float64),
                r_raw=float(entry["r_raw"]),
                c_raw=np.array(c_raw, dtype=np.float64),
            )
        )

    meta = {str(k): str(v) for k, v in dict(doc["meta"]).items()}
    stored_sum = meta.pop("checksum", None)
    payload = [
        {"b": [float(v) for v in r.b], "r_raw": float(r.r_raw), "c_raw": [float(v) for v in r.c_raw]}
        for r in raws
    ]
    expect = _checksum(version, float(alpha), payload)
    if stored_sum is None:
        raise IntegrityError("scene file carries no checksum; was it written by save_scene?")
    if stored_sum != expect:
        raise IntegrityError("scene file checksum mismatch; the file was modified after saving")

    scene = Scene.from_raw(raws, alpha=float(alpha), meta=meta)
    for i, sp in enumerate(scene.primitives):
        margin = closedness_margin(sp.assembled)
        if margin < scene.alpha * (1.0 - 1e-9):
            raise IntegrityError(
                f"primitive {i}: closedness margin {margin:.3e} below alpha {scene.alpha:.3e}"
            )
    return scene
