# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; scalar mirrors of ias._kernels._purepy."""

import numpy as np

from libc.math cimport INFINITY, M_PI, acos, cbrt, cos, fabs, fmax, sqrt, tanh

DEGENERATE_GRAD_NORM = 1e-9
LEAD_EPS = 1e-14
ROOT_DEDUP_TOL = 1e-7
POLISH_STEPS = 5

cdef double _DEG_NORM = 1e-9
cdef double _LEAD_EPS = 1e-14
cdef double _DEDUP = 1e-7
cdef int _POLISH = 5


def _c64(a, dtype=np.float64):
    """Contiguous writable array of the given dtype (copies frozen inputs)."""
    a = np.ascontiguousarray(a, dtype=dtype)
    if not a.flags.writeable:
        a = a.copy()
    return a



cdef inline void _mono(double x, double y, double z, double* w) noexcept nogil:
    w[0] = 1.0
    w[1] = x
    w[2] = y
    w[3] = z
    w[4] = x * x
    w[5] = y * y
    w[6] = z * z
    w[7] = x * y
    w[8] = y * z
    w[9] = z * x


cdef inline double _form_val(const double* Am, const double* w) noexcept nogil:
    # v A v^T with A a row-major 10x10 block
    cdef double p = 0.0, row
    cdef int a, b
    for a in range(10):
        row = 0.0
        for b in range(10):
            row += Am[a * 10 + b] * w[b]
        p += w[a] * row
    return p


cdef inline void _aw_vec(const double* Am, const double* w, double* aw) noexcept nogil:
    cdef double acc
    cdef int a, b
    for a in range(10):
        acc = 0.0
        for b in range(10):
            acc += Am[a * 10 + b] * w[b]
        aw[a] = acc


cdef inline void _grad_from_aw(const double* aw, double x, double y, double z, double* g) noexcept nogil:
    g[0] = 2.0 * (aw[1] + 2.0 * x * aw[4] + y * aw[7] + z * aw[9])
    g[1] = 2.0 * (aw[2] + 2.0 * y * aw[5] + x * aw[7] + z * aw[8])
    g[2] = 2.0 * (aw[3] + 2.0 * z * aw[6] + y * aw[8] + x * aw[9])


def union_eval(A, centers, pts):
    A = _c64(A)
    centers = _c64(centers)
    pts = _c64(pts)
    cdef double[:, :, ::1] Av = A
    cdef double[:, ::1] cv = centers
    cdef double[:, ::1] pv = pts
    cdef Py_ssize_t n = pv.shape[0], M = Av.shape[0]
    vals = np.empty(n, dtype=np.float64)
    idx = np.zeros(n, dtype=np.int64)
    cdef double[::1] vv = vals
    cdef long long[::1] iv = idx
    cdef Py_ssize_t i, m
    cdef double w[10]
    cdef double p, best
    cdef long long bestm
    with nogil:
        for i in range(n):
            best = INFINITY
            bestm = 0
            for m in range(M):
                _mono(pv[i, 0] - cv[m, 0], pv[i, 1] - cv[m, 1], pv[i, 2] - cv[m, 2], w)
                p = _form_val(&Av[m, 0, 0], w)
                if p < best:
                    best = p
                    bestm = m
            vv[i] = best
            iv[i] = bestm
    return vals, idx


def union_eval_grad(A, centers, pts):
    A = _c64(A)
    centers = _c64(centers)
    pts = _c64(pts)
    cdef double[:, :, ::1] Av = A
    cdef double[:, ::1] cv = centers
    cdef double[:, ::1] pv = pts
    cdef Py_ssize_t n = pv.shape[0], M = Av.shape[0]
    vals = np.empty(n, dtype=np.float64)
    idx = np.zeros(n, dtype=np.int64)
    grads = np.empty((n, 3), dtype=np.float64)
    cdef double[::1] vv = vals
    cdef long long[::1] iv = idx
    cdef double[:, ::1] gv = grads
    cdef Py_ssize_t i, m
    cdef double w[10]
    cdef double aw[10]
    cdef double g[3]
    cdef double p, best, x, y, z
    cdef long long bestm
    with nogil:
        for i in range(n):
            best = INFINITY
            bestm = 0
            for m in range(M):
                _mono(pv[i, 0] - cv[m, 0], pv[i, 1] - cv[m, 1], pv[i, 2] - cv[m, 2], w)
                p = _form_val(&Av[m, 0, 0], w)
                if p < best:
                    best = p
                    bestm = m
            x = pv[i, 0] - cv[bestm, 0]
            y = pv[i, 1] - cv[bestm, 1]
            z = pv[i, 2] - cv[bestm, 2]
            _mono(x, y, z, w)
            _aw_vec(&Av[bestm, 0, 0], w, aw)
            _grad_from_aw(aw, x, y, z, g)
            vv[i] = best
            iv[i] = bestm
            gv[i, 0] = g[0]
            gv[i, 1] = g[1]
            gv[i, 2] = g[2]
    return vals, idx, grads


# Sparse structure of dv/dy: columns and values depend on the displacement.
cdef inline void _jac_cols(int* jc) noexcept nogil:
    jc[0] = 1; jc[1] = 4; jc[2] = 7; jc[3] = 9    # d/dx
    jc[4] = 2; jc[5] = 5; jc[6] = 7; jc[7] = 8    # d/dy
    jc[8] = 3; jc[9] = 6; jc[10] = 8; jc[11] = 9  # d/dz


cdef inline void _jac_vals(double x, double y, double z, double* jv) noexcept nogil:
    jv[0] = 1.0; jv[1] = 2.0 * x; jv[2] = y; jv[3] = z
    jv[4] = 1.0; jv[5] = 2.0 * y; jv[6] = x; jv[7] = z
    jv[8] = 1.0; jv[9] = 2.0 * z; jv[10] = y; jv[11] = x


def loss_grad(A, B, centers, pts, kinds, normals, lams, bint want_grad=True):
    A = _c64(A)
    B = _c64(B)
    centers = _c64(centers)
    pts = _c64(pts)
    kinds = _c64(kinds, dtype=np.uint8)
    normals = _c64(normals)
    lams = _c64(lams)

    cdef double[:, :, ::1] Av = A
    cdef double[:, :, ::1] Bv = B
    cdef double[:, ::1] cv = centers
    cdef double[:, ::1] pv = pts
    cdef unsigned char[::1] kv = kinds
    cdef double[:, ::1] nv = normals
    cdef Py_ssize_t n = pv.shape[0], M = Av.shape[0]

    vals = np.empty(n, dtype=np.float64)
    idx = np.zeros(n, dtype=np.int64)
    dLdS_arr = np.zeros(n, dtype=np.float64)
    gon = np.zeros((n, 3), dtype=np.float64)
    used = np.zeros(n, dtype=np.uint8)
    dLdG_arr = np.zeros((n, 3), dtype=np.float64)
    cdef double[::1] vv = vals
    cdef long long[::1] iv = idx
    cdef double[::1] dls = dLdS_arr
    cdef double[:, ::1] gv = gon
    cdef unsigned char[::1] uv = used
    cdef double[:, ::1] dgv = dLdG_arr

    cdef double lam_on = lams[0], lam_in = lams[1], lam_out = lams[2], lam_n = lams[3]
    cdef double counts[3]
    cdef double class_w[3]
    cdef double targets[3]
    targets[0] = 0.0; targets[1] = -1.0; targets[2] = 1.0

    cdef Py_ssize_t i, m, a, b, k, l, jnz
    cdef double w[10]
    cdef double aw[10]
    cdef double g[3]
    cdef double p, best, x, y, z, th, dd
    cdef long long bestm
    cdef double sign_loss = 0.0, normal_sum = 0.0
    cdef long long n_used = 0, n_on = 0
    cdef double gn, inv, edotn, sc
    cdef double nhat[3]
    cdef double e[3]

    with nogil:
        counts[0] = 0.0; counts[1] = 0.0; counts[2] = 0.0
        for i in range(n):
            best = INFINITY
            bestm = 0
            for m in range(M):
                _mono(pv[i, 0] - cv[m, 0], pv[i, 1] - cv[m, 1], pv[i, 2] - cv[m, 2], w)
                p = _form_val(&Av[m, 0, 0], w)
                if p < best:
                    best = p
                    bestm = m
            vv[i] = best
            iv[i] = bestm
            counts[kv[i]] += 1.0

        class_w[0] = lam_on / counts[0] if counts[0] > 0.0 else 0.0
        class_w[1] = lam_in / counts[1] if counts[1] > 0.0 else 0.0
        class_w[2] = lam_out / counts[2] if counts[2] > 0.0 else 0.0

        for i in range(n):
            th = tanh(vv[i])
            dd = th - targets[kv[i]]
            sign_loss += class_w[kv[i]] * dd * dd
            dls[i] = class_w[kv[i]] * 2.0 * dd * (1.0 - th * th)

        # gradient direction at on-points, degenerate ones skipped
        for i in range(n):
            if kv[i] != 0:
                continue
            n_on += 1
            bestm = iv[i]
            x = pv[i, 0] - cv[bestm, 0]
            y = pv[i, 1] - cv[bestm, 1]
            z = pv[i, 2] - cv[bestm, 2]
            _mono(x, y, z, w)
            _aw_vec(&Av[bestm, 0, 0], w, aw)
            _grad_from_aw(aw, x, y, z, g)
            gv[i, 0] = g[0]
            gv[i, 1] = g[1]
            gv[i, 2] = g[2]
            gn = sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2])
            if gn > _DEG_NORM:
                uv[i] = 1
                n_used += 1

        if n_used > 0:
            for i in range(n):
                if uv[i] == 0:
                    continue
                gn = sqrt(gv[i, 0] ** 2 + gv[i, 1] ** 2 + gv[i, 2] ** 2)
                inv = 1.0 / gn
                nhat[0] = gv[i, 0] * inv
                nhat[1] = gv[i, 1] * inv
                nhat[2] = gv[i, 2] * inv
                e[0] = nhat[0] - nv[i, 0]
                e[1] = nhat[1] - nv[i, 1]
                e[2] = nhat[2] - nv[i, 2]
                normal_sum += e[0] * e[0] + e[1] * e[1] + e[2] * e[2]
                edotn = e[0] * nhat[0] + e[1] * nhat[1] + e[2] * nhat[2]
                sc = 2.0 * lam_n / (n_used * gn)
                dgv[i, 0] = sc * (e[0] - edotn * nhat[0])
                dgv[i, 1] = sc * (e[1] - edotn * nhat[1])
                dgv[i, 2] = sc * (e[2] - edotn * nhat[2])

    normal_loss = float(normal_sum / n_used) if n_used > 0 else 0.0

    if not want_grad:
        return float(sign_loss), normal_loss, int(n_used), int(n_on - n_used), None

    dA_buf = np.zeros((M, 10, 10), dtype=np.float64)
    grad = np.zeros((M, 59), dtype=np.float64)
    cdef double[:, :, ::1] dAv = dA_buf
    cdef double[:, ::1] grv = grad
    cdef int jc[12]
    cdef double jv[12]
    cdef double AJ[3][10]
    cdef double H[3][3]
    cdef double dB[10][10]
    cdef double ds, colfac, acc
    cdef Py_ssize_t col, row, t55

    with nogil:
        _jac_cols(jc)
        for i in range(n):
            bestm = iv[i]
            ds = dls[i]
            x = pv[i, 0] - cv[bestm, 0]
            y = pv[i, 1] - cv[bestm, 1]
            z = pv[i, 2] - cv[bestm, 2]
            _mono(x, y, z, w)
            _aw_vec(&Av[bestm, 0, 0], w, aw)
            _grad_from_aw(aw, x, y, z, g)
            # value part: dA += ds * w w^T, dc -= ds * G, dR -= ds
            for a in range(10):
                for b in range(10):
                    dAv[bestm, a, b] += ds * w[a] * w[b]
            grv[bestm, 56] -= ds * g[0]
            grv[bestm, 57] -= ds * g[1]
            grv[bestm, 58] -= ds * g[2]
            grv[bestm, 55] -= ds
            if uv[i] == 1:
                _jac_vals(x, y, z, jv)
                # dA += 2 sum_k dLdG_k * w (J_k)^T over the sparse columns
                for k in range(3):
                    for jnz in range(4):
                        colfac = 2.0 * dgv[i, k] * jv[4 * k + jnz]
                        col = jc[4 * k + jnz]
                        for a in range(10):
                            dAv[bestm, a, col] += colfac * w[a]
                # AJ[l] = A @ J_l via sparsity
                for l in range(3):
                    for a in range(10):
                        acc = 0.0
                        for jnz in range(4):
                            acc += Av[bestm, a, jc[4 * l + jnz]] * jv[4 * l + jnz]
                        AJ[l][a] = acc
                # H_kl = 2 J_k . AJ_l + second-derivative term
                for k in range(3):
                    for l in range(3):
                        acc = 0.0
                        for jnz in range(4):
                            acc += jv[4 * k + jnz] * AJ[l][jc[4 * k + jnz]]
                        H[k][l] = 2.0 * acc
                H[0][0] += 4.0 * aw[4]
                H[1][1] += 4.0 * aw[5]
                H[2][2] += 4.0 * aw[6]
                H[0][1] += 2.0 * aw[7]; H[1][0] += 2.0 * aw[7]
                H[1][2] += 2.0 * aw[8]; H[2][1] += 2.0 * aw[8]
                H[0][2] += 2.0 * aw[9]; H[2][0] += 2.0 * aw[9]
                for l in range(3):
                    acc = 0.0
                    for k in range(3):
                        acc += H[k][l] * dgv[i, k]
                    grv[bestm, 56 + l] -= acc

        # chain dA -> dB = dA B + B dA, then pack the lower triangle
        for m in range(M):
            for a in range(10):
                for b in range(10):
                    acc = 0.0
                    for k in range(10):
                        acc += dAv[m, a, k] * Bv[m, k, b] + Bv[m, a, k] * dAv[m, k, b]
                    dB[a][b] = acc
            t55 = 0
            for row in range(10):
                for col in range(row + 1):
                    if row == col:
                        grv[m, t55] += dB[row][col]
                    else:
                        grv[m, t55] += dB[row][col] + dB[col][row]
                    t55 += 1

    return float(sign_loss), normal_loss, int(n_used), int(n_on - n_used), grad


cdef int _cubic_real_roots(double b, double c, double d, double* out) noexcept nogil:
    cdef double P = c - b * b / 3.0
    cdef double Q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d
    cdef double disc = (Q / 2.0) * (Q / 2.0) + (P / 3.0) * (P / 3.0) * (P / 3.0)
    cdef double sq, mm, m3, cos3, phi
    cdef int k
    if disc > 0.0:
        sq = sqrt(disc)
        out[0] = cbrt(-Q / 2.0 + sq) + cbrt(-Q / 2.0 - sq) - b / 3.0
        return 1
    mm = 2.0 * sqrt(fmax(-P / 3.0, 0.0))
    m3 = mm * mm * mm
    if m3 > 0.0:
        cos3 = -4.0 * Q / m3
        if cos3 > 1.0:
            cos3 = 1.0
        elif cos3 < -1.0:
            cos3 = -1.0
    else:
        cos3 = 1.0
    phi = acos(cos3) / 3.0
    for k in range(3):
        out[k] = mm * cos(phi - 2.0 * M_PI * k / 3.0) - b / 3.0
    return 3


cdef int _quartic_candidates(double c4, double c3, double c2, double c1, double c0, double* out) noexcept nogil:
    cdef double a = c3 / c4, b = c2 / c4, c = c1 / c4, d = c0 / c4
    cdef double p = b - 3.0 * a * a / 8.0
    cdef double q = c - a * b / 2.0 + a * a * a / 8.0
    cdef double r = d - a * c / 4.0 + a * a * b / 16.0 - 3.0 * a * a * a * a / 256.0
    cdef double shift = a / 4.0
    cdef int cnt = 0
    cdef double sq, y1, y2, z, al, qa, gam, bet, dsc, im, re
    cdef double cub[3]
    cdef int nc, k

    if fabs(q) <= 1e-14 * (1.0 + fabs(p) + fabs(r)):
        dsc = p * p - 4.0 * r
        if dsc < 0.0:
            return 0
        sq = sqrt(dsc)
        y1 = (-p + sq) / 2.0
        y2 = (-p - sq) / 2.0
        if y1 >= 0.0:
            out[cnt] = sqrt(y1) - shift; cnt += 1
            out[cnt] = -sqrt(y1) - shift; cnt += 1
        elif y1 >= -1e-16:
            out[cnt] = -shift; cnt += 1
        if y2 >= 0.0:
            out[cnt] = sqrt(y2) - shift; cnt += 1
            out[cnt] = -sqrt(y2) - shift; cnt += 1
        elif y2 >= -1e-16:
            out[cnt] = -shift; cnt += 1
        return cnt

    nc = _cubic_real_roots(2.0 * p, p * p - 4.0 * r, -q * q, cub)
    z = cub[0]
    for k in range(1, nc):
        if cub[k] > z:
            z = cub[k]
    if z < 0.0:
        z = 0.0
    al = sqrt(z)
    # q / alpha through the resolvent identity
    # q^2 = z (z^2 + 2 p z + p^2 - 4 r): finite even when the tiny
    # resolvent root of a near-biquadratic underflows to zero
    qa = z * z + 2.0 * p * z + p * p - 4.0 * r
    if qa < 0.0:
        qa = 0.0
    qa = sqrt(qa)
    if q < 0.0:
        qa = -qa
    gam = (p + z + qa) / 2.0
    bet = (p + z - qa) / 2.0

    dsc = al * al - 4.0 * bet
    if dsc >= 0.0:
        sq = sqrt(dsc)
        out[cnt] = (-al + sq) / 2.0 - shift; cnt += 1
        out[cnt] = (-al - sq) / 2.0 - shift; cnt += 1
    else:
        im = sqrt(-dsc) / 2.0
        re = -al / 2.0 - shift
        if im <= 1e-8 * (1.0 + fabs(re)):
            out[cnt] = re; cnt += 1
    dsc = al * al - 4.0 * gam
    if dsc >= 0.0:
        sq = sqrt(dsc)
        out[cnt] = (al + sq) / 2.0 - shift; cnt += 1
        out[cnt] = (al - sq) / 2.0 - shift; cnt += 1
    else:
        im = sqrt(-dsc) / 2.0
        re = al / 2.0 - shift
        if im <= 1e-8 * (1.0 + fabs(re)):
            out[cnt] = re; cnt += 1
    return cnt


cdef inline double _horner5(const double* C, double t) noexcept nogil:
    return (((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]


cdef inline double _horner5d(const double* C, double t) noexcept nogil:
    return ((4.0 * C[0] * t + 3.0 * C[1]) * t + 2.0 * C[2]) * t + C[3]


def solve_quartics(C):
    C = _c64(np.atleast_2d(C))
    if np.any(np.all(C == 0.0, axis=1)):
        raise ValueError("all-zero coefficient vector has no defined root set")
    cdef double[:, ::1] cvv = C
    cdef Py_ssize_t n = cvv.shape[0]
    roots = np.full((n, 4), np.nan)
    counts = np.zeros(n, dtype=np.int64)
    cdef double[:, ::1] rv = roots
    cdef long long[::1] cnv = counts
    cdef Py_ssize_t i
    cdef int cnt, k, j, step, kept
    cdef double cand[6]
    cdef double tmp, f, fp, tc, fc
    cdef double last = 0.0
    cdef const double* row

    with nogil:
        for i in range(n):
            row = &cvv[i, 0]
            cnt = 0
            if fabs(row[0]) >= _LEAD_EPS:
                cnt = _quartic_candidates(row[0], row[1], row[2], row[3], row[4], cand)
            elif fabs(row[1]) >= _LEAD_EPS:
                cnt = _cubic_real_roots(row[2] / row[1], row[3] / row[1], row[4] / row[1], cand)
            elif fabs(row[2]) >= _LEAD_EPS:
                tmp = row[3] * row[3] - 4.0 * row[2] * row[4]
                if tmp >= 0.0:
                    tmp = sqrt(tmp)
                    cand[0] = (-row[3] + tmp) / (2.0 * row[2])
                    cand[1] = (-row[3] - tmp) / (2.0 * row[2])
                    cnt = 2
                elif sqrt(-tmp) / (2.0 * fabs(row[2])) <= 1e-8 * (1.0 + fabs(row[3] / (2.0 * row[2]))):
                    cand[0] = -row[3] / (2.0 * row[2])
                    cnt = 1
            elif fabs(row[3]) >= _LEAD_EPS:
                cand[0] = -row[4] / row[3]
                cnt = 1

            # Newton polish, accept-if-improve
            for k in range(cnt):
                f = fabs(_horner5(row, cand[k]))
                for step in range(_POLISH):
                    fp = _horner5d(row, cand[k])
                    if fabs(fp) <= 1e-300:
                        break
                    tc = cand[k] - _horner5(row, cand[k]) / fp
                    fc = fabs(_horner5(row, tc))
                    if fc < f:
                        cand[k] = tc
                        f = fc

            # insertion sort ascending
            for k in range(1, cnt):
                tmp = cand[k]
                j = k - 1
                while j >= 0 and cand[j] > tmp:
                    cand[j + 1] = cand[j]
                    j -= 1
                cand[j + 1] = tmp

            # dedup within tolerance, keep the first of each cluster
            kept = 0
            for k in range(cnt):
                if kept == 0 or cand[k] - last > _DEDUP:
                    last = cand[k]
                    if kept < 4:
                        rv[i, kept] = last
                    kept += 1
            cnv[i] = kept if kept < 4 else 4

    return roots, counts


_RESTRICT_TABLE = None


def _build_restrict_table():
    from math import comb

    from ias.polynomial import QUARTIC_EXPONENTS

    rows = []
    for t, (i, j, k) in enumerate(QUARTIC_EXPONENTS):
        for m1 in range(i + 1):
            for m2 in range(j + 1):
                for m3 in range(k + 1):
                    rows.append(
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
    ints = np.array([r[:8] for r in rows], dtype=np.int32)
    fl = np.array([r[8] for r in rows], dtype=np.float64)
    return ints, fl


def restrict_rays(coeffs, center, origins, dirs):
    global _RESTRICT_TABLE
    if _RESTRICT_TABLE is None:
        _RESTRICT_TABLE = _build_restrict_table()
    tab_i, tab_f = _RESTRICT_TABLE
    coeffs = _c64(coeffs)
    center = _c64(center)
    origins = _c64(origins)
    dirs = _c64(dirs)
    cdef double[::1] co = coeffs
    cdef double[::1] ce = center
    cdef double[:, ::1] ov = origins
    cdef double[:, ::1] dv = dirs
    cdef int[:, ::1] ti = tab_i
    cdef double[::1] tf = tab_f
    cdef Py_ssize_t n = ov.shape[0], ne = ti.shape[0]
    out = np.zeros((n, 5), dtype=np.float64)
    cdef double[:, ::1] outv = out
    cdef Py_ssize_t i, r
    cdef double up[3][5]
    cdef double ep[3][5]
    cdef int axis, mdeg
    cdef double ct, term

    with nogil:
        for i in range(n):
            for axis in range(3):
                up[axis][0] = 1.0
                ep[axis][0] = 1.0
            for mdeg in range(1, 5):
                up[0][mdeg] = up[0][mdeg - 1] * (ov[i, 0] - ce[0])
                up[1][mdeg] = up[1][mdeg - 1] * (ov[i, 1] - ce[1])
                up[2][mdeg] = up[2][mdeg - 1] * (ov[i, 2] - ce[2])
                ep[0][mdeg] = ep[0][mdeg - 1] * dv[i, 0]
                ep[1][mdeg] = ep[1][mdeg - 1] * dv[i, 1]
                ep[2][mdeg] = ep[2][mdeg - 1] * dv[i, 2]
            for r in range(ne):
                ct = co[ti[r, 0]]
                if ct == 0.0:
                    continue
                term = ct * tf[r]
                term *= up[0][ti[r, 2]] * ep[0][ti[r, 3]]
                term *= up[1][ti[r, 4]] * ep[1][ti[r, 5]]
                term *= up[2][ti[r, 6]] * ep[2][ti[r, 7]]
                # slot 4 - m gives descending order [c4..c0]
                outv[i, 4 - ti[r, 1]] += term
    return out
