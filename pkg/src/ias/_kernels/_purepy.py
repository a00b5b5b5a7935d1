"""Pure numpy implementation of the hot kernels.

Mirrors the compiled core in ias._kernels._core.  Reductions use einsum and
fixed-order numpy sums, so repeated calls are deterministic; agreement with
the compiled core is to rounding, not bitwise.

Data layout shared by both backends:
  A        (M, 10, 10) assembled coefficient matrices
  B        (M, 10, 10) symmetric factors (only loss_grad needs them)
  centers  (M, 3)
  pts      (N, 3)
  kinds    (N,) uint8: 0 = on surface, 1 = inside, 2 = outside
  normals  (N, 3) unit normals for on-points, zeros elsewhere
  lams     (4,) loss weights: on, in, out, normal
"""

from __future__ import annotations

import numpy as np

_TARGETS = np.array([0.0, -1.0, 1.0])
_TRIL_ROWS, _TRIL_COLS = np.tril_indices(10)
_OFFDIAG = (_TRIL_ROWS != _TRIL_COLS).astype(np.float64)

DEGENERATE_GRAD_NORM = 1e-9
LEAD_EPS = 1e-14
ROOT_DEDUP_TOL = 1e-7
POLISH_STEPS = 5


def _monomials(d: np.ndarray) -> np.ndarray:
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    w = np.empty((len(d), 10), dtype=np.float64)
    w[:, 0] = 1.0
    w[:, 1] = x
    w[:, 2] = y
    w[:, 3] = z
    w[:, 4] = x * x
    w[:, 5] = y * y
    w[:, 6] = z * z
    w[:, 7] = x * y
    w[:, 8] = y * z
    w[:, 9] = z * x
    return w


def _grad_from_aw(aw: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Spatial gradient 2 w^T A J_k given aw = w @ A and displacements d."""
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    g = np.empty((len(d), 3), dtype=np.float64)
    g[:, 0] = 2.0 * (aw[:, 1] + 2.0 * x * aw[:, 4] + y * aw[:, 7] + z * aw[:, 9])
    g[:, 1] = 2.0 * (aw[:, 2] + 2.0 * y * aw[:, 5] + x * aw[:, 7] + z * aw[:, 8])
    g[:, 2] = 2.0 * (aw[:, 3] + 2.0 * z * aw[:, 6] + y * aw[:, 8] + x * aw[:, 9])
    return g


def _jacobian(d: np.ndarray) -> np.ndarray:
    """J[n, k, i] = d(v_i)/d(y_k) at displacement d[n]; sparse rows of dv."""
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    J = np.zeros((len(d), 3, 10), dtype=np.float64)
    J[:, 0, 1] = 1.0
    J[:, 0, 4] = 2.0 * x
    J[:, 0, 7] = y
    J[:, 0, 9] = z
    J[:, 1, 2] = 1.0
    J[:, 1, 5] = 2.0 * y
    J[:, 1, 7] = x
    J[:, 1, 8] = z
    J[:, 2, 3] = 1.0
    J[:, 2, 6] = 2.0 * z
    J[:, 2, 8] = y
    J[:, 2, 9] = x
    return J


def union_eval(A: np.ndarray, centers: np.ndarray, pts: np.ndarray):
    """Min over primitives of v A v^T; returns (values (N,), argmin (N,) int64).

    Ties keep the lowest primitive index (strict < update).
    """
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    n = len(pts)
    M = len(A)
    vals = np.empty(n, dtype=np.float64)
    idx = np.zeros(n, dtype=np.int64)
    for m in range(M):
        w = _monomials(pts - centers[m])
        vm = np.sum((w @ A[m]) * w, axis=1)
        if m == 0:
            vals[:] = vm
        else:
            better = vm < vals
            vals[better] = vm[better]
            idx[better] = m
    return vals, idx


def union_eval_grad(A: np.ndarray, centers: np.ndarray, pts: np.ndarray):
    """union_eval plus the spatial gradient of the argmin primitive."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    vals, idx = union_eval(A, centers, pts)
    grads = np.empty((len(pts), 3), dtype=np.float64)
    for m in np.unique(idx):
        sel = idx == m
        d = pts[sel] - centers[m]
        aw = _monomials(d) @ A[m]
        grads[sel] = _grad_from_aw(aw, d)
    return vals, idx, grads


def loss_grad(
    A: np.ndarray,
    B: np.ndarray,
    centers: np.ndarray,
    pts: np.ndarray,
    kinds: np.ndarray,
    normals: np.ndarray,
    lams: np.ndarray,
    want_grad: bool = True,
):
    """Sign and normal losses of the union field, with analytic raw gradients.

    Returns (sign_loss, normal_loss, n_on_used, n_on_degenerate, grad) where
    grad is (M, 59) with per-primitive layout [dB tril (55), dR, dcenter (3)]
    or None when want_grad is false.  normal_loss is unweighted; the caller
    forms total = sign_loss + lams[3] * normal_loss.  The gradient of the
    total is routed through the argmin primitive only.
    """
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    kinds = np.asarray(kinds)
    n = len(pts)
    M = len(A)
    lam_on, lam_in, lam_out, lam_n = (float(v) for v in lams)

    vals, idx = union_eval(A, centers, pts)
    counts = np.bincount(kinds, minlength=3).astype(np.float64)
    tanh_s = np.tanh(vals)
    diff = tanh_s - _TARGETS[kinds]
    lam_by_kind = np.array([lam_on, lam_in, lam_out])
    class_w = np.zeros(3)
    nz = counts > 0
    class_w[nz] = lam_by_kind[nz] / counts[nz]
    sign_loss = float(np.sum(class_w[kinds] * diff * diff))
    dLdS = class_w[kinds] * 2.0 * diff * (1.0 - tanh_s * tanh_s)

    # Normal term: gradient direction of the argmin primitive at on-points.
    on_mask = kinds == 0
    dLdG = np.zeros((n, 3), dtype=np.float64)
    used_mask = np.zeros(n, dtype=bool)
    normal_loss = 0.0
    n_on_used = 0
    n_on_degenerate = 0
    if np.any(on_mask):
        g_on = np.zeros((n, 3), dtype=np.float64)
        for m in np.unique(idx[on_mask]):
            sel = on_mask & (idx == m)
            d = pts[sel] - centers[m]
            aw = _monomials(d) @ A[m]
            g_on[sel] = _grad_from_aw(aw, d)
        gnorm = np.linalg.norm(g_on, axis=1)
        used_mask = on_mask & (gnorm > DEGENERATE_GRAD_NORM)
        n_on_used = int(np.count_nonzero(used_mask))
        n_on_degenerate = int(np.count_nonzero(on_mask)) - n_on_used
        if n_on_used:
            nhat = g_on[used_mask] / gnorm[used_mask, None]
            e = nhat - normals[used_mask]
            normal_loss = float(np.sum(e * e) / n_on_used)
            scale = 2.0 * lam_n / (n_on_used * gnorm[used_mask])
            dLdG[used_mask] = scale[:, None] * (e - np.sum(e * nhat, axis=1)[:, None] * nhat)

    if not want_grad:
        return sign_loss, normal_loss, n_on_used, n_on_degenerate, None

    grad = np.zeros((M, 59), dtype=np.float64)
    for m in range(M):
        sel = idx == m
        if not np.any(sel):
            continue
        d = pts[sel] - centers[m]
        w = _monomials(d)
        aw = w @ A[m]
        g = _grad_from_aw(aw, d)
        ds = dLdS[sel]

        dA = np.einsum("n,ni,nj->ij", ds, w, w)
        dc = -np.einsum("n,nk->k", ds, g)
        dR = -float(np.sum(ds))

        sel_used = sel & used_mask
        if np.any(sel_used):
            local = used_mask[sel]
            dg = dLdG[sel_used]
            wu = w[local]
            du = d[local]
            awu = aw[local]
            J = _jacobian(du)
            dA += 2.0 * np.einsum("nk,ni,nkj->ij", dg, wu, J)
            # Spatial Hessian H_kl = 2 (J_k^T A J_l + (A w) . d2v/dy_k dy_l)
            AJ = np.einsum("ij,nkj->nki", A[m], J)
            H = 2.0 * np.einsum("nki,nli->nkl", J, AJ)
            x4, y4, z4 = 2.0 * awu[:, 4], 2.0 * awu[:, 5], 2.0 * awu[:, 6]
            xy, yz, zx = awu[:, 7], awu[:, 8], awu[:, 9]
            H[:, 0, 0] += 2.0 * x4
            H[:, 1, 1] += 2.0 * y4
            H[:, 2, 2] += 2.0 * z4
            H[:, 0, 1] += 2.0 * xy
            H[:, 1, 0] += 2.0 * xy
            H[:, 1, 2] += 2.0 * yz
            H[:, 2, 1] += 2.0 * yz
            H[:, 0, 2] += 2.0 * zx
            H[:, 2, 0] += 2.0 * zx
            dc -= np.einsum("nkl,nk->l", H, dg)

        dB = dA @ B[m] + B[m] @ dA
        grad[m, :55] = dB[_TRIL_ROWS, _TRIL_COLS] + _OFFDIAG * dB[_TRIL_COLS, _TRIL_ROWS]
        grad[m, 55] = dR
        grad[m, 56:59] = dc

    return sign_loss, normal_loss, n_on_used, n_on_degenerate, grad


def _horner(C: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate rows of descending coefficients at t; t is (N,) or (N, K)."""
    t2 = t if t.ndim == 2 else t[:, None]
    acc = np.broadcast_to(C[:, :1], t2.shape).copy()
    for k in range(1, C.shape[1]):
        acc = acc * t2 + C[:, k : k + 1]
    return acc if t.ndim == 2 else acc[:, 0]


def _cubic_real_roots(b: np.ndarray, c: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Real roots of monic cubics t^3 + b t^2 + c t + d, (N, 3) NaN-padded."""
    P = c - b * b / 3.0
    Q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = (Q / 2.0) ** 2 + (P / 3.0) ** 3
    roots = np.full((len(b), 3), np.nan)

    one = disc > 0.0
    if np.any(one):
        sq = np.sqrt(disc[one])
        roots[one, 0] = np.cbrt(-Q[one] / 2.0 + sq) + np.cbrt(-Q[one] / 2.0 - sq)

    three = ~one
    if np.any(three):
        Pm, Qm = P[three], Q[three]
        m = 2.0 * np.sqrt(np.maximum(-Pm / 3.0, 0.0))
        m3 = m**3
        with np.errstate(divide="ignore", invalid="ignore"):
            cos3 = np.where(m3 > 0.0, np.clip(-4.0 * Qm / np.where(m3 > 0.0, m3, 1.0), -1.0, 1.0), 1.0)
        phi = np.arccos(cos3) / 3.0
        for k in range(3):
            roots[three, k] = m * np.cos(phi - 2.0 * np.pi * k / 3.0)

    return roots - b[:, None] / 3.0


def _largest_real_cubic_root(b: np.ndarray, c: np.ndarray, d: np.ndarray) -> np.ndarray:
    roots = _cubic_real_roots(b, c, d)
    return np.nanmax(roots, axis=1)


def _polish(C: np.ndarray, roots: np.ndarray) -> np.ndarray:
    """Newton-polish NaN-padded roots against the row polynomials, accept-if-improve."""
    dC = C[:, :-1] * np.arange(C.shape[1] - 1, 0, -1)[None, :]
    t = roots.copy()
    live = ~np.isnan(t)
    t_work = np.where(live, t, 0.0)
    f = np.abs(_horner(C, t_work))
    for _ in range(POLISH_STEPS):
        fp = _horner(dC, t_work)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.abs(fp) > 1e-300, _horner(C, t_work) / fp, 0.0)
        cand = t_work - step
        fc = np.abs(_horner(C, cand))
        better = live & (fc < f)
        t_work = np.where(better, cand, t_work)
        f = np.where(better, fc, f)
    return np.where(live, t_work, np.nan)


def _dedup_sorted(roots: np.ndarray) -> np.ndarray:
    """Collapse roots within ROOT_DEDUP_TOL along sorted rows (NaN-padded)."""
    roots = np.sort(roots, axis=1)  # NaN sorts to the end
    last = roots[:, 0].copy()
    for col in range(1, roots.shape[1]):
        cur = roots[:, col]
        dup = np.abs(cur - last) <= ROOT_DEDUP_TOL
        roots[dup, col] = np.nan
        keep = ~dup & ~np.isnan(cur)
        last = np.where(keep, cur, last)
    return np.sort(roots, axis=1)


def solve_quartics(C: np.ndarray):
    """Real roots of rows of [c4, c3, c2, c1, c0], ascending, NaN-padded.

    Ferrari resolvent factorization into two quadratics using the largest
    real resolvent root, complex-arithmetic branch handling, Newton polish,
    dedup within ROOT_DEDUP_TOL.  Rows with |c4| < LEAD_EPS fall through to
    cubic / quadratic / linear; an exactly all-zero row is an error.
    """
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    n = len(C)
    if np.any(np.all(C == 0.0, axis=1)):
        raise ValueError("all-zero coefficient vector has no defined root set")
    roots = np.full((n, 4), np.nan)

    absC = np.abs(C)
    deg4 = absC[:, 0] >= LEAD_EPS
    deg3 = ~deg4 & (absC[:, 1] >= LEAD_EPS)
    deg2 = ~deg4 & ~deg3 & (absC[:, 2] >= LEAD_EPS)
    deg1 = ~deg4 & ~deg3 & ~deg2 & (absC[:, 3] >= LEAD_EPS)

    if np.any(deg4):
        Cq = C[deg4]
        a = Cq[:, 1] / Cq[:, 0]
        b = Cq[:, 2] / Cq[:, 0]
        c = Cq[:, 3] / Cq[:, 0]
        d = Cq[:, 4] / Cq[:, 0]
        p = b - 3.0 * a * a / 8.0
        q = c - a * b / 2.0 + a**3 / 8.0
        r = d - a * c / 4.0 + a * a * b / 16.0 - 3.0 * a**4 / 256.0

        s = np.full((len(Cq), 4), np.nan, dtype=np.complex128)
        biq = np.abs(q) <= 1e-14 * (1.0 + np.abs(p) + np.abs(r))
        if np.any(biq):
            pb, rb = p[biq], r[biq]
            dsc = np.sqrt(pb.astype(np.complex128) ** 2 - 4.0 * rb)
            y1 = (-pb + dsc) / 2.0
            y2 = (-pb - dsc) / 2.0
            s[biq, 0] = np.sqrt(y1)
            s[biq, 1] = -np.sqrt(y1)
            s[biq, 2] = np.sqrt(y2)
            s[biq, 3] = -np.sqrt(y2)
        gen = ~biq
        if np.any(gen):
            pg, qg, rg = p[gen], q[gen], r[gen]
            # Resolvent cubic in z = alpha^2: z^3 + 2p z^2 + (p^2 - 4r) z - q^2 = 0
            z = _largest_real_cubic_root(2.0 * pg, pg * pg - 4.0 * rg, -qg * qg)
            z = np.maximum(z, 0.0)
            al = np.sqrt(z)
            # q / alpha through the resolvent identity
            # q^2 = z (z^2 + 2 p z + p^2 - 4 r): finite even when the tiny
            # resolvent root of a near-biquadratic underflows to zero
            qa = np.sign(qg) * np.sqrt(
                np.maximum(z * z + 2.0 * pg * z + pg * pg - 4.0 * rg, 0.0))
            gam = (pg + z + qa) / 2.0
            bet = (pg + z - qa) / 2.0
            d1 = np.sqrt((al * al - 4.0 * bet).astype(np.complex128))
            d2 = np.sqrt((al * al - 4.0 * gam).astype(np.complex128))
            s[gen, 0] = (-al + d1) / 2.0
            s[gen, 1] = (-al - d1) / 2.0
            s[gen, 2] = (al + d2) / 2.0
            s[gen, 3] = (al - d2) / 2.0

        t = s - (a / 4.0)[:, None]
        real = np.abs(t.imag) <= 1e-8 * (1.0 + np.abs(t.real))
        roots[deg4] = np.where(real, t.real, np.nan)

    if np.any(deg3):
        Cc = C[deg3]
        r3 = _cubic_real_roots(Cc[:, 2] / Cc[:, 1], Cc[:, 3] / Cc[:, 1], Cc[:, 4] / Cc[:, 1])
        roots[deg3, :3] = r3

    if np.any(deg2):
        Cs = C[deg2]
        dsc = np.sqrt((Cs[:, 3] ** 2 - 4.0 * Cs[:, 2] * Cs[:, 4]).astype(np.complex128))
        t1 = (-Cs[:, 3] + dsc) / (2.0 * Cs[:, 2])
        t2 = (-Cs[:, 3] - dsc) / (2.0 * Cs[:, 2])
        for col, tt in enumerate((t1, t2)):
            ok = np.abs(tt.imag) <= 1e-8 * (1.0 + np.abs(tt.real))
            roots[deg2, col] = np.where(ok, tt.real, np.nan)

    if np.any(deg1):
        roots[deg1, 0] = -C[deg1, 4] / C[deg1, 3]

    roots = _polish(C, roots)
    roots = _dedup_sorted(roots)
    counts = np.count_nonzero(~np.isnan(roots), axis=1).astype(np.int64)
    return roots, counts


def _restrict_table():
    from ..polynomial import QUARTIC_EXPONENTS

    from math import comb

    entries = []
    for t, (i, j, k) in enumerate(QUARTIC_EXPONENTS):
        for m1 in range(i + 1):
            for m2 in range(j + 1):
                for m3 in range(k + 1):
                    entries.append(
                        (
                            t,
                            m1 + m2 + m3,
                            int(i - m1),
                            m1,
                            int(j - m2),
                            m2,
                            int(k - m3),
                            m3,
                            float(comb(int(i), m1) * comb(int(j), m2) * comb(int(k), m3)),
                        )
                    )
    return entries


_RESTRICT_ENTRIES = None


def restrict_rays(coeffs: np.ndarray, center: np.ndarray, origins: np.ndarray, dirs: np.ndarray):
    """Batch restriction of one centered quartic to rays; (N, 5) descending."""
    global _RESTRICT_ENTRIES
    if _RESTRICT_ENTRIES is None:
        _RESTRICT_ENTRIES = _restrict_table()
    coeffs = np.asarray(coeffs, dtype=np.float64)
    u = np.asarray(origins, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    e = np.asarray(dirs, dtype=np.float64)
    n = len(u)

    upow = np.ones((3, n, 5))
    epow = np.ones((3, n, 5))
    for axis in range(3):
        for mdeg in range(1, 5):
            upow[axis, :, mdeg] = upow[axis, :, mdeg - 1] * u[:, axis]
            epow[axis, :, mdeg] = epow[axis, :, mdeg - 1] * e[:, axis]

    out = np.zeros((n, 5))
    for t, m, iu, ie, ju, je, ku, ke, binom in _RESTRICT_ENTRIES:
        ct = coeffs[t]
        if ct == 0.0:
            continue
        out[:, m] += (ct * binom) * (
            upow[0, :, iu] * epow[0, :, ie] * upow[1, :, ju] * epow[1, :, je] * upow[2, :, ku] * epow[2, :, ke]
        )
    return out[:, ::-1].copy()
