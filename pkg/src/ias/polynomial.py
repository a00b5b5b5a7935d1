"""Quartic trivariate polynomials as quadratic forms over a monomial basis.

A surface polynomial is p(x, y, z) = v A v^T where

    v = [1, x, y, z, x^2, y^2, z^2, xy, yz, zx]

and A is a symmetric 10x10 coefficient matrix.  Products of basis entries
reach total degree 4, so p is a general quartic with 35 distinct monomial
coefficients.  This module owns the basis ordering, the expansion from A to
dense monomial coefficients, evaluation and differentiation of the expanded
form about a center, and the restriction of the quartic to a ray.
"""

from __future__ import annotations

from math import comb

import numpy as np

# Exponent triples (i, j, k) for the 10 basis monomials of v, in order.
BASIS_EXPONENTS = np.array(
    [
        (0, 0, 0),
        (1, 0, 0),
        (0, 1, 0),
        (0, 0, 1),
        (2, 0, 0),
        (0, 2, 0),
        (0, 0, 2),
        (1, 1, 0),
        (0, 1, 1),
        (1, 0, 1),
    ],
    dtype=np.int64,
)

# Indices of the degree-2 basis entries; the 6x6 trailing block of A over
# [x^2, y^2, z^2, xy, yz, zx] is the quadratic form of the quartic's
# fourth-degree part.
FOURTH_BLOCK = slice(4, 10)


def _graded_lex_exponents() -> np.ndarray:
    out = []
    for degree in range(5):
        for i in range(degree, -1, -1):
            for j in range(degree - i, -1, -1):
                out.append((i, j, degree - i - j))
    return np.array(out, dtype=np.int64)


# The 35 quartic monomials in canonical graded-lex order: ascending total
# degree, lexicographic descending (x > y > z) within a degree.
QUARTIC_EXPONENTS = _graded_lex_exponents()
N_QUARTIC_COEFFS = len(QUARTIC_EXPONENTS)

_EXPONENT_INDEX = {tuple(e): t for t, e in enumerate(QUARTIC_EXPONENTS)}

# PRODUCT_INDEX[i, j] is the slot in QUARTIC_EXPONENTS of basis_i * basis_j.
PRODUCT_INDEX = np.array(
    [
        [_EXPONENT_INDEX[tuple(BASIS_EXPONENTS[i] + BASIS_EXPONENTS[j])] for j in range(10)]
        for i in range(10)
    ],
    dtype=np.int64,
)


def coeff_index(i: int, j: int, k: int) -> int:
    """Slot of the monomial x^i y^j z^k in the canonical coefficient vector."""
    return _EXPONENT_INDEX[(i, j, k)]


def coeffs_as_dict(coeffs: np.ndarray) -> dict[tuple[int, int, int], float]:
    return {tuple(int(e) for e in exp): float(c) for exp, c in zip(QUARTIC_EXPONENTS, coeffs)}


def monomial_vector(points: np.ndarray) -> np.ndarray:
    """Basis values v at each point; points (N, 3) -> (N, 10)."""
    p = np.asarray(points, dtype=np.float64)
    squeeze = p.ndim == 1
    p = np.atleast_2d(p)
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    v = np.empty((len(p), 10), dtype=np.float64)
    v[:, 0] = 1.0
    v[:, 1] = x
    v[:, 2] = y
    v[:, 3] = z
    v[:, 4] = x * x
    v[:, 5] = y * y
    v[:, 6] = z * z
    v[:, 7] = x * y
    v[:, 8] = y * z
    v[:, 9] = z * x
    return v[0] if squeeze else v


def eval_form(A: np.ndarray, points: np.ndarray) -> np.ndarray | float:
    """Evaluate v A v^T directly from the quadratic form."""
    v = monomial_vector(points)
    if v.ndim == 1:
        return float(v @ A @ v)
    return np.einsum("ni,ij,nj->n", v, A, v)


def expand_to_monomials(A: np.ndarray) -> np.ndarray:
    """Dense 35-vector of monomial coefficients of v A v^T, graded-lex order."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (10, 10):
        raise ValueError(f"expected a 10x10 coefficient matrix, got {A.shape}")
    coeffs = np.zeros(N_QUARTIC_COEFFS, dtype=np.float64)
    np.add.at(coeffs, PRODUCT_INDEX.ravel(), A.ravel())
    return coeffs


def _power_table(t: np.ndarray, max_degree: int = 4) -> np.ndarray:
    """pows[n, m] = t[n] ** m for m = 0..max_degree."""
    out = np.empty((len(t), max_degree + 1), dtype=np.float64)
    out[:, 0] = 1.0
    for m in range(1, max_degree + 1):
        out[:, m] = out[:, m - 1] * t
    return out


def eval_centered(coeffs: np.ndarray, center: np.ndarray, points: np.ndarray) -> np.ndarray | float:
    """Evaluate sum_t coeffs[t] * prod (p - center)^exp[t] at each point."""
    p = np.asarray(points, dtype=np.float64)
    squeeze = p.ndim == 1
    d = np.atleast_2d(p) - np.asarray(center, dtype=np.float64)
    px = _power_table(d[:, 0])
    py = _power_table(d[:, 1])
    pz = _power_table(d[:, 2])
    ii, jj, kk = QUARTIC_EXPONENTS.T
    terms = px[:, ii] * py[:, jj] * pz[:, kk]
    vals = terms @ np.asarray(coeffs, dtype=np.float64)
    return float(vals[0]) if squeeze else vals


def grad_centered(coeffs: np.ndarray, center: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Analytic spatial gradient of the centered expansion; (N, 3) or (3,)."""
    p = np.asarray(points, dtype=np.float64)
    squeeze = p.ndim == 1
    d = np.atleast_2d(p) - np.asarray(center, dtype=np.float64)
    c = np.asarray(coeffs, dtype=np.float64)
    px = _power_table(d[:, 0])
    py = _power_table(d[:, 1])
    pz = _power_table(d[:, 2])
    ii, jj, kk = QUARTIC_EXPONENTS.T
    grad = np.zeros((len(d), 3), dtype=np.float64)
    mx = ii > 0
    grad[:, 0] = (px[:, ii[mx] - 1] * py[:, jj[mx]] * pz[:, kk[mx]]) @ (ii[mx] * c[mx])
    my = jj > 0
    grad[:, 1] = (px[:, ii[my]] * py[:, jj[my] - 1] * pz[:, kk[my]]) @ (jj[my] * c[my])
    mz = kk > 0
    grad[:, 2] = (px[:, ii[mz]] * py[:, jj[mz]] * pz[:, kk[mz] - 1]) @ (kk[mz] * c[mz])
    return grad[0] if squeeze else grad


# Binomial coefficients up to degree 4, used by the ray restriction.
_BINOM = np.array([[comb(n, m) if m <= n else 0 for m in range(5)] for n in range(5)], dtype=np.float64)


def restrict_to_ray(
    coeffs: np.ndarray,
    center: np.ndarray,
    origin: np.ndarray,
    direction: np.ndarray,
) -> np.ndarray:
    """Univariate quartic in the ray parameter t, descending order [c4..c0].

    Substitutes x = origin + t * direction into the centered quartic.  Each
    axis contributes (u_a + t e_a)^n expanded binomially; per-monomial the
    three short polynomials are convolved and accumulated.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    u = np.asarray(origin, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    e = np.asarray(direction, dtype=np.float64)

    # axis_poly[a][n] = coefficients (ascending in t, length n+1) of (u_a + t e_a)^n
    axis_poly = []
    for a in range(3):
        upow = [u[a] ** m for m in range(5)]
        epow = [e[a] ** m for m in range(5)]
        polys = []
        for n in range(5):
            polys.append(np.array([_BINOM[n, m] * upow[n - m] * epow[m] for m in range(n + 1)]))
        axis_poly.append(polys)

    out = np.zeros(5, dtype=np.float64)
    for t, (i, j, k) in enumerate(QUARTIC_EXPONENTS):
        if c[t] == 0.0:
            continue
        q = np.convolve(np.convolve(axis_poly[0][i], axis_poly[1][j]), axis_poly[2][k])
        out[: len(q)] += c[t] * q
    return out[::-1].copy()


def fourth_block(A: np.ndarray) -> np.ndarray:
    """The 6x6 quadratic form of the degree-4 part, over [x^2,y^2,z^2,xy,yz,zx]."""
    return np.asarray(A, dtype=np.float64)[FOURTH_BLOCK, FOURTH_BLOCK]
