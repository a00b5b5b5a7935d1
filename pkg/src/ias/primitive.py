"""Raw parameterization and assembly of one closed quartic primitive.

A primitive is stored as 59 raw reals: 55 entries of a symmetric 10x10
factor B (lower triangle, row-major), one scale logit r_raw, and three
center pre-activations c_raw.  Assembly builds

    A = B B^T + alpha * I + Q(R)

where Q adds +1 on the x^4, y^4, z^4 diagonal and -R at the constant slot,
R = sigmoid(r_raw) in (0, 1) and center = tanh(c_raw) in (-1, 1)^3.  The
first two terms make the fourth-degree block positive definite, so the zero
set is bounded; the Q term caps the zero set inside {x^4 + y^4 + z^4 <= R}
around the center.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .polynomial import expand_to_monomials, fourth_block

DEFAULT_ALPHA = 1e-4

# Pre-activation clamp; tanh/sigmoid are numerically saturated far earlier.
RAW_CLAMP = 40.0

# Lower-triangle (row-major) index pairs mapping b[55] into symmetric B.
TRIL_ROWS, TRIL_COLS = np.tril_indices(10)

N_RAW_PARAMS = 59


@dataclass
class RawPrimitiveParams:
    b: np.ndarray  # (55,) symmetric factor entries, lower triangle row-major
    r_raw: float
    c_raw: np.ndarray  # (3,)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.b, [self.r_raw], self.c_raw]).astype(np.float64)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "RawPrimitiveParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (N_RAW_PARAMS,):
            raise ValueError(f"expected {N_RAW_PARAMS} raw parameters, got shape {vec.shape}")
        return cls(b=vec[:55].copy(), r_raw=float(vec[55]), c_raw=vec[56:59].copy())


@dataclass(frozen=True)
class AssembledPrimitive:
    A: np.ndarray  # (10, 10) symmetric
    center: np.ndarray  # (3,)
    R: float
    coeffs: np.ndarray = field(repr=False)  # (35,) cached expansion of A


def symmetric_from_tril(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (55,):
        raise ValueError(f"expected 55 factor entries, got shape {b.shape}")
    B = np.zeros((10, 10), dtype=np.float64)
    B[TRIL_ROWS, TRIL_COLS] = b
    B[TRIL_COLS, TRIL_ROWS] = b
    return B


def scale_matrix(R: float) -> np.ndarray:
    """Q(R): +1 at the x^4, y^4, z^4 diagonal slots, -R at the constant slot."""
    Q = np.zeros((10, 10), dtype=np.float64)
    Q[4, 4] = Q[5, 5] = Q[6, 6] = 1.0
    Q[0, 0] = -R
    return Q


def assemble(raw: RawPrimitiveParams, alpha: float = DEFAULT_ALPHA) -> AssembledPrimitive:
    vec = raw.as_vector()
    if not np.all(np.isfinite(vec)):
        bad = int(np.flatnonzero(~np.isfinite(vec))[0])
        raise ValueError(f"non-finite raw parameter at index {bad}")
    if not 0.0 < alpha:
        raise ValueError(f"alpha must be positive, got {alpha}")
    B = symmetric_from_tril(raw.b)
    r = float(np.clip(raw.r_raw, -RAW_CLAMP, RAW_CLAMP))
    R = 1.0 / (1.0 + np.exp(-r))
    center = np.tanh(np.clip(raw.c_raw, -RAW_CLAMP, RAW_CLAMP))
    A = B @ B + alpha * np.eye(10) + scale_matrix(R)
    A.flags.writeable = False
    center.flags.writeable = False
    coeffs = expand_to_monomials(A)
    coeffs.flags.writeable = False
    return AssembledPrimitive(A=A, center=center, R=R, coeffs=coeffs)


def closedness_margin(prim: AssembledPrimitive) -> float:
    """Smallest eigenvalue of the fourth-degree block; >= alpha by construction."""
    return float(np.linalg.eigvalsh(fourth_block(prim.A))[0])


def is_empty(prim: AssembledPrimitive, tol: float = 1e-9) -> bool:
    """True when A is positive semidefinite (up to tol): no interior anywhere.

    v A v^T >= lambda_min ||v||^2, so a non-negative spectrum leaves no point
    with a negative value.  The converse does not hold (not every 10-vector is
    a monomial vector), so a false result does not guarantee interior exists.
    """
    return bool(np.linalg.eigvalsh(prim.A)[0] >= -tol)


def min_eigenvalue(prim: AssembledPrimitive) -> float:
    return float(np.linalg.eigvalsh(prim.A)[0])
