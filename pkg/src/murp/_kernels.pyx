# cython: language_level=3
"""Compiled scoring and gradient kernels.

Mirrors ``murp._fallback`` function for function; see that module for the
shape contract.  Loops are sequential so results are bitwise reproducible.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, tanh, atanh, log1p, exp, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()

NAME = "cython"

cdef double EPS_BALL = 1e-5
cdef double SERIES_CUTOFF = 1e-3


cdef inline double _dot(const double* a, const double* b, Py_ssize_t d) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t j
    for j in range(d):
        s += a[j] * b[j]
    return s


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _softplus(double x) noexcept nogil:
    return (x if x > 0 else 0.0) + log1p(exp(-fabs(x)))


cdef inline double _clip(double* x, Py_ssize_t d, double sqrt_c, double* norm_out) noexcept nogil:
    # rescale x in place if it sits on or outside the margin; returns scale
    cdef double norm = sqrt(_dot(x, x, d))
    cdef double max_norm = (1.0 - EPS_BALL) / sqrt_c
    cdef double scale = 1.0
    cdef Py_ssize_t j
    norm_out[0] = norm
    if norm >= max_norm:
        scale = max_norm / norm
        for j in range(d):
            x[j] *= scale
    return scale


cdef inline void _clip_backward(double* g, const double* clipped_x, double scale,
                                Py_ssize_t d) noexcept nogil:
    # clipped_x is the post-clip point, parallel to the pre-clip one
    cdef double n = sqrt(_dot(clipped_x, clipped_x, d))
    cdef double proj = _dot(clipped_x, g, d) / (n * n)
    cdef Py_ssize_t j
    for j in range(d):
        g[j] = scale * (g[j] - proj * clipped_x[j])


cdef inline void _subject_forward(const double* hs, const double* w, Py_ssize_t d,
                                  double c, double sqrt_c, double* m, double* z,
                                  double* u, double* coeffs) noexcept nogil:
    # coeffs: a, da, b, db, su (u scale), clipped flag
    cdef double n = sqrt(_dot(hs, hs, d))
    cdef double p = sqrt_c * n
    cdef double a, da, q, b, db, t, k, unorm, su
    cdef Py_ssize_t j
    if p < SERIES_CUTOFF:
        a = 1.0 + p * p / 3.0
        da = 2.0 / 3.0 + 0.8 * p * p
    else:
        a = atanh(p) / p
        da = (p / (1.0 - p * p) - atanh(p)) / (p * p * p)
    for j in range(d):
        m[j] = a * hs[j]
        z[j] = w[j] * m[j]
    k = sqrt(_dot(z, z, d))
    q = sqrt_c * k
    if q < SERIES_CUTOFF:
        b = 1.0 - q * q / 3.0
        db = -2.0 / 3.0 + 8.0 / 15.0 * q * q
    else:
        t = tanh(q)
        b = t / q
        db = (q * (1.0 - t * t) - t) / (q * q * q)
    for j in range(d):
        u[j] = b * z[j]
    su = _clip(u, d, sqrt_c, &unorm)
    coeffs[0] = a
    coeffs[1] = c * da
    coeffs[2] = b
    coeffs[3] = c * db
    coeffs[4] = su
    coeffs[5] = 1.0 if su != 1.0 else 0.0


cdef inline void _mobius(const double* x, const double* y, Py_ssize_t d, double c,
                         double* v, double* parts) noexcept nogil:
    # parts: x2, y2, A, B, den, clip scale, clipped flag
    cdef double xy = _dot(x, y, d)
    cdef double x2 = _dot(x, x, d)
    cdef double y2 = _dot(y, y, d)
    cdef double big_a = 1.0 + 2.0 * c * xy + c * y2
    cdef double big_b = 1.0 - c * x2
    cdef double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    cdef Py_ssize_t j
    for j in range(d):
        v[j] = (big_a * x[j] + big_b * y[j]) / den
    parts[0] = x2
    parts[1] = y2
    parts[2] = big_a
    parts[3] = big_b
    parts[4] = den


cdef inline double _ball_sq_dist(const double* u, const double* v, Py_ssize_t d,
                                 double c, double* dist_parts) noexcept nogil:
    # dist_parts: alpha, beta, delta, f = acosh(1+x)/sqrt(x(x+2))
    cdef double alpha = 1.0 - c * _dot(u, u, d)
    cdef double beta = 1.0 - c * _dot(v, v, d)
    cdef double delta = 0.0
    cdef double diff, x, root, acosh
    cdef Py_ssize_t j
    for j in range(d):
        diff = u[j] - v[j]
        delta += diff * diff
    x = 2.0 * c * delta / (alpha * beta)
    root = sqrt(x * (x + 2.0))
    acosh = log1p(x + root)
    dist_parts[0] = alpha
    dist_parts[1] = beta
    dist_parts[2] = delta
    if x < 1e-12:
        dist_parts[3] = 1.0 - x / 3.0
    else:
        dist_parts[3] = acosh / root
    return acosh * acosh / c


def score_triples(double[:, ::1] ent, double[:, ::1] rdiag, double[:, ::1] rtrans,
                  double[::1] bs, double[::1] bo, subj, rel, obj, double c, bint poincare):
    """Raw scores phi for N triples."""
    cdef long long[::1] s_ = np.ascontiguousarray(subj, dtype=np.int64)
    cdef long long[::1] r_ = np.ascontiguousarray(rel, dtype=np.int64)
    cdef long long[::1] o_ = np.ascontiguousarray(obj, dtype=np.int64)
    cdef Py_ssize_t n = s_.shape[0], d = ent.shape[1], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] phi = out
    cdef double* scratch = <double*> malloc(4 * d * sizeof(double))
    cdef double coeffs[6]
    cdef double parts[5]
    cdef double dparts[4]
    cdef double sqrt_c = sqrt(c) if poincare else 0.0
    cdef double vnorm, d2, diff
    cdef Py_ssize_t j
    try:
        with nogil:
            for i in range(n):
                if poincare:
                    _subject_forward(&ent[s_[i], 0], &rdiag[r_[i], 0], d, c, sqrt_c,
                                     scratch, scratch + d, scratch + 2 * d, coeffs)
                    _mobius(&ent[o_[i], 0], &rtrans[r_[i], 0], d, c, scratch + 3 * d, parts)
                    _clip(scratch + 3 * d, d, sqrt_c, &vnorm)
                    d2 = _ball_sq_dist(scratch + 2 * d, scratch + 3 * d, d, c, dparts)
                else:
                    d2 = 0.0
                    for j in range(d):
                        diff = (rdiag[r_[i], j] * ent[s_[i], j] - rtrans[r_[i], j]) - ent[o_[i], j]
                        d2 += diff * diff
                phi[i] = -d2 + bs[s_[i]] + bo[o_[i]]
    finally:
        free(scratch)
    return out


def forward_backward(double[:, ::1] ent, double[:, ::1] rdiag, double[:, ::1] rtrans,
                     double[::1] bs, double[::1] bo, subj, rel, obj, labels,
                     double c, bint poincare):
    """Per-sample Bernoulli NLL and its gradients (see ``_fallback``)."""
    cdef long long[::1] s_ = np.ascontiguousarray(subj, dtype=np.int64)
    cdef long long[::1] r_ = np.ascontiguousarray(rel, dtype=np.int64)
    cdef long long[::1] o_ = np.ascontiguousarray(obj, dtype=np.int64)
    cdef double[::1] y_ = np.ascontiguousarray(labels, dtype=np.float64)
    cdef Py_ssize_t n = s_.shape[0], d = ent.shape[1], i, j

    loss_a = np.empty(n)
    phi_a = np.empty(n)
    gb_a = np.empty(n)
    gs_a = np.empty((n, d))
    go_a = np.empty((n, d))
    gw_a = np.empty((n, d))
    gt_a = np.empty((n, d))
    cdef double[::1] loss = loss_a, phi = phi_a, gb = gb_a
    cdef double[:, ::1] gs = gs_a, go = go_a, gw = gw_a, gt = gt_a

    cdef double* scratch = <double*> malloc(7 * d * sizeof(double))
    cdef double* m = scratch
    cdef double* z = scratch + d
    cdef double* u = scratch + 2 * d
    cdef double* v = scratch + 3 * d
    cdef double* gu = scratch + 4 * d
    cdef double* gv = scratch + 5 * d
    cdef double* gm = scratch + 6 * d
    cdef double coeffs[6]
    cdef double parts[5]
    cdef double dparts[4]
    cdef double sqrt_c = sqrt(c) if poincare else 0.0
    cdef double d2, p, g, coef, cu, cv, sv, vnorm, gnx, gny, gden, zg, hg, diff
    cdef double x2, y2, big_a, big_b, den, alpha, beta, delta
    cdef const double* hs
    cdef const double* ho
    cdef const double* w
    cdef const double* t
    try:
        with nogil:
            for i in range(n):
                hs = &ent[s_[i], 0]
                ho = &ent[o_[i], 0]
                w = &rdiag[r_[i], 0]
                t = &rtrans[r_[i], 0]
                if poincare:
                    _subject_forward(hs, w, d, c, sqrt_c, m, z, u, coeffs)
                    _mobius(ho, t, d, c, v, parts)
                    sv = _clip(v, d, sqrt_c, &vnorm)
                    d2 = _ball_sq_dist(u, v, d, c, dparts)
                else:
                    d2 = 0.0
                    for j in range(d):
                        diff = (w[j] * hs[j] - t[j]) - ho[j]
                        gu[j] = diff
                        d2 += diff * diff
                p = -d2 + bs[s_[i]] + bo[o_[i]]
                phi[i] = p
                loss[i] = _softplus(p) - y_[i] * p
                g = _sigmoid(p) - y_[i]
                gb[i] = g
                if not poincare:
                    for j in range(d):
                        diff = -2.0 * g * gu[j]
                        gs[i, j] = diff * w[j]
                        gw[i, j] = diff * hs[j]
                        go[i, j] = -diff
                        gt[i, j] = -diff
                    continue

                alpha = dparts[0]
                beta = dparts[1]
                delta = dparts[2]
                coef = -g * 8.0 * dparts[3] / (alpha * beta)
                cu = c * delta / alpha
                cv = c * delta / beta
                for j in range(d):
                    diff = u[j] - v[j]
                    gu[j] = coef * (diff + cu * u[j])
                    gv[j] = coef * (-diff + cv * v[j])

                # object side: clip, then Mobius addition h_o (+) r_h
                if sv != 1.0:
                    _clip_backward(gv, v, sv, d)
                    for j in range(d):
                        v[j] /= sv
                x2 = parts[0]
                y2 = parts[1]
                big_a = parts[2]
                big_b = parts[3]
                den = parts[4]
                gden = -_dot(gv, v, d) / den
                gnx = _dot(gv, ho, d) / den
                gny = _dot(gv, t, d) / den
                for j in range(d):
                    go[i, j] = (big_a * gv[j] / den + 2.0 * c * gnx * t[j]
                                - 2.0 * c * gny * ho[j]
                                + gden * (2.0 * c * t[j] + 2.0 * c * c * y2 * ho[j]))
                    gt[i, j] = (big_b * gv[j] / den + 2.0 * c * gnx * (ho[j] + t[j])
                                + gden * (2.0 * c * ho[j] + 2.0 * c * c * x2 * t[j]))

                # subject side: clip, exp_0, diagonal, log_0
                if coeffs[5] != 0.0:
                    _clip_backward(gu, u, coeffs[4], d)
                zg = coeffs[3] * _dot(z, gu, d)
                for j in range(d):
                    gu[j] = coeffs[2] * gu[j] + zg * z[j]
                    gw[i, j] = gu[j] * m[j]
                    gm[j] = gu[j] * w[j]
                hg = coeffs[1] * _dot(hs, gm, d)
                for j in range(d):
                    gs[i, j] = coeffs[0] * gm[j] + hg * hs[j]
    finally:
        free(scratch)
    return loss_a, phi_a, gs_a, go_a, gw_a, gt_a, gb_a


def score_candidates(double[:, ::1] ent, double[:, ::1] rdiag, double[:, ::1] rtrans,
                     double[::1] bs, double[::1] bo, subj, rel, cand, double c,
                     bint poincare, out=None):
    """Scores of (subj[q], rel[q], cand[j]) as a (Q, len(cand)) matrix."""
    cdef long long[::1] s_ = np.ascontiguousarray(subj, dtype=np.int64)
    cdef long long[::1] r_ = np.ascontiguousarray(rel, dtype=np.int64)
    cdef long long[::1] e_ = np.ascontiguousarray(cand, dtype=np.int64)
    cdef Py_ssize_t nq = s_.shape[0], ne = e_.shape[0], d = ent.shape[1]
    cdef Py_ssize_t q, k, j
    if out is None:
        out = np.empty((nq, ne), dtype=np.float64)
    cdef double[:, ::1] res = out
    cdef double* scratch = <double*> malloc(4 * d * sizeof(double))
    cdef double coeffs[6]
    cdef double parts[5]
    cdef double dparts[4]
    cdef double sqrt_c = sqrt(c) if poincare else 0.0
    cdef double vnorm, d2, diff, base
    try:
        with nogil:
            for q in range(nq):
                if poincare:
                    _subject_forward(&ent[s_[q], 0], &rdiag[r_[q], 0], d, c, sqrt_c,
                                     scratch, scratch + d, scratch + 2 * d, coeffs)
                else:
                    for j in range(d):
                        scratch[2 * d + j] = rdiag[r_[q], j] * ent[s_[q], j] - rtrans[r_[q], j]
                base = bs[s_[q]]
                for k in range(ne):
                    if poincare:
                        _mobius(&ent[e_[k], 0], &rtrans[r_[q], 0], d, c, scratch + 3 * d, parts)
                        _clip(scratch + 3 * d, d, sqrt_c, &vnorm)
                        d2 = _ball_sq_dist(scratch + 2 * d, scratch + 3 * d, d, c, dparts)
                    else:
                        d2 = 0.0
                        for j in range(d):
                            diff = scratch[2 * d + j] - ent[e_[k], j]
                            d2 += diff * diff
                    res[q, k] = -d2 + base + bo[e_[k]]
    finally:
        free(scratch)
    return out


def scatter_add(double[:, ::1] out, index, double[:, ::1] values):
    """out[index[i]] += values[i], rows accumulated in order."""
    cdef long long[::1] idx = np.ascontiguousarray(index, dtype=np.int64)
    cdef Py_ssize_t n = idx.shape[0], d = out.shape[1], i, j
    with nogil:
        for i in range(n):
            for j in range(d):
                out[idx[i], j] += values[i, j]
