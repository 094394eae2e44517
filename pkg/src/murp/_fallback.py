"""Pure numpy kernels.

Same contract as the compiled ``_kernels`` module; selected automatically
when the extension is not built or ``MURP_PURE_PYTHON`` is set.

The Poincare distance is evaluated in its arcosh form,
``d^2 = arcosh(1 + x)^2 / c`` with ``x = 2c|u-v|^2 / ((1-c|u|^2)(1-c|v|^2))``,
which is algebraically identical to the artanh/Mobius form but
differentiates cleanly at ``u == v``.
"""

import numpy as np

from .geometry import EPS_BALL

NAME = "numpy"

_SERIES_CUTOFF = 1e-3


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _log0_coeffs(norm, sqrt_c, c):
    # a = artanh(p)/p and a'(n)/n, p = sqrt(c) n
    p = sqrt_c * norm
    small = p < _SERIES_CUTOFF
    ps = np.where(small, 0.5, p)
    a = np.where(small, 1.0 + p * p / 3.0, np.arctanh(ps) / ps)
    da = np.where(
        small,
        2.0 / 3.0 + 0.8 * p * p,
        (ps / (1.0 - ps * ps) - np.arctanh(ps)) / (ps * ps * ps),
    )
    return a, c * da


def _exp0_coeffs(norm, sqrt_c, c):
    # b = tanh(q)/q and b'(k)/k, q = sqrt(c) k
    q = sqrt_c * norm
    small = q < _SERIES_CUTOFF
    qs = np.where(small, 1.0, q)
    t = np.tanh(qs)
    b = np.where(small, 1.0 - q * q / 3.0, t / qs)
    db = np.where(
        small,
        -2.0 / 3.0 + 8.0 / 15.0 * q * q,
        (qs * (1.0 - t * t) - t) / (qs * qs * qs),
    )
    return b, c * db


def _clip_scale(x, sqrt_c):
    norm = np.sqrt(_dot(x, x))
    max_norm = (1.0 - EPS_BALL) / sqrt_c
    clipped = norm >= max_norm
    scale = np.where(clipped, max_norm / np.where(clipped, norm, 1.0), 1.0)
    return scale, clipped, norm


def _clip_backward(grad, pre, scale, clipped, norm):
    safe = np.where(clipped, norm, 1.0)[:, None]
    unit = pre / safe
    proj = grad - unit * _dot(unit, grad)[:, None]
    return np.where(clipped[:, None], scale[:, None] * proj, grad)


def _murp_subject(hs, w, c, sqrt_c):
    n = np.sqrt(_dot(hs, hs))
    a, da = _log0_coeffs(n, sqrt_c, c)
    m = a[:, None] * hs
    z = w * m
    k = np.sqrt(_dot(z, z))
    b, db = _exp0_coeffs(k, sqrt_c, c)
    u_pre = b[:, None] * z
    su, u_clip, u_norm = _clip_scale(u_pre, sqrt_c)
    u = su[:, None] * u_pre
    return u, (a, da, m, z, b, db, u_pre, su, u_clip, u_norm)


def _mobius_parts(x, y, c):
    xy = _dot(x, y)
    x2 = _dot(x, x)
    y2 = _dot(y, y)
    big_a = 1.0 + 2.0 * c * xy + c * y2
    big_b = 1.0 - c * x2
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    v = (big_a[:, None] * x + big_b[:, None] * y) / den[:, None]
    return v, (x2, y2, big_a, big_b, den)


def _sq_dist_ball(u, v, c):
    alpha = 1.0 - c * _dot(u, u)
    beta = 1.0 - c * _dot(v, v)
    diff = u - v
    delta = _dot(diff, diff)
    x = 2.0 * c * delta / (alpha * beta)
    root = np.sqrt(x * (x + 2.0))
    acosh = np.log1p(x + root)
    return acosh * acosh / c, (alpha, beta, diff, delta, x, root, acosh)


def _murp_forward(ent, rdiag, rtrans, subj, rel, obj, c):
    sqrt_c = np.sqrt(c)
    hs = ent[subj]
    ho = ent[obj]
    w = rdiag[rel]
    t = rtrans[rel]
    u, subj_cache = _murp_subject(hs, w, c, sqrt_c)
    v_pre, mob_cache = _mobius_parts(ho, t, c)
    sv, v_clip, v_norm = _clip_scale(v_pre, sqrt_c)
    v = sv[:, None] * v_pre
    d2, dist_cache = _sq_dist_ball(u, v, c)
    cache = (hs, ho, w, t, u, v, v_pre, sv, v_clip, v_norm, subj_cache, mob_cache, dist_cache)
    return d2, cache


def _murp_backward(gphi, cache, c):
    hs, ho, w, t, u, v, v_pre, sv, v_clip, v_norm, subj_cache, mob_cache, dist_cache = cache
    a, da, m, z, b, db, u_pre, su, u_clip, u_norm = subj_cache
    x2, y2, big_a, big_b, den = mob_cache
    alpha, beta, diff, delta, x, root, acosh = dist_cache

    f = np.where(x < 1e-12, 1.0 - x / 3.0, acosh / np.where(x < 1e-12, 1.0, root))
    coef = -gphi * 8.0 * f / (alpha * beta)
    gu = coef[:, None] * (diff + (c * delta / alpha)[:, None] * u)
    gv = coef[:, None] * (-diff + (c * delta / beta)[:, None] * v)

    gv = _clip_backward(gv, v_pre, sv, v_clip, v_norm)
    g_n = gv / den[:, None]
    g_den = -_dot(gv, v_pre) / den
    g_nx = _dot(g_n, ho)
    g_ny = _dot(g_n, t)
    g_obj = (
        big_a[:, None] * g_n
        + (2.0 * c * g_nx)[:, None] * t
        - (2.0 * c * g_ny)[:, None] * ho
        + g_den[:, None] * (2.0 * c * t + (2.0 * c * c * y2)[:, None] * ho)
    )
    g_trans = (
        big_b[:, None] * g_n
        + (2.0 * c * g_nx)[:, None] * (ho + t)
        + g_den[:, None] * (2.0 * c * ho + (2.0 * c * c * x2)[:, None] * t)
    )

    gu = _clip_backward(gu, u_pre, su, u_clip, u_norm)
    gz = b[:, None] * gu + (db * _dot(z, gu))[:, None] * z
    g_diag = gz * m
    gm = gz * w
    g_subj = a[:, None] * gm + (da * _dot(hs, gm))[:, None] * hs
    return g_subj, g_obj, g_diag, g_trans


def _mure_forward(ent, rdiag, rtrans, subj, rel, obj):
    es = ent[subj]
    w = rdiag[rel]
    diff = (w * es - rtrans[rel]) - ent[obj]
    return _dot(diff, diff), (es, w, diff)


def _as_index(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def score_triples(ent, rdiag, rtrans, bs, bo, subj, rel, obj, c, poincare):
    """Raw scores phi for N triples."""
    subj, rel, obj = _as_index(subj), _as_index(rel), _as_index(obj)
    if poincare:
        d2, _ = _murp_forward(ent, rdiag, rtrans, subj, rel, obj, c)
    else:
        d2, _ = _mure_forward(ent, rdiag, rtrans, subj, rel, obj)
    return -d2 + bs[subj] + bo[obj]


def forward_backward(ent, rdiag, rtrans, bs, bo, subj, rel, obj, labels, c, poincare):
    """Per-sample Bernoulli NLL and its gradients.

    Returns ``(loss, phi, g_subject, g_object, g_diag, g_trans, g_bias)``
    where each gradient row is d(loss_i)/d(parameter row) for sample i and
    ``g_bias`` is shared by the subject and object bias.
    """
    subj, rel, obj = _as_index(subj), _as_index(rel), _as_index(obj)
    y = np.asarray(labels, dtype=np.float64)
    if poincare:
        d2, cache = _murp_forward(ent, rdiag, rtrans, subj, rel, obj, c)
    else:
        d2, cache = _mure_forward(ent, rdiag, rtrans, subj, rel, obj)
    phi = -d2 + bs[subj] + bo[obj]
    loss = softplus(phi) - y * phi
    gphi = sigmoid(phi) - y
    if poincare:
        g_subj, g_obj, g_diag, g_trans = _murp_backward(gphi, cache, c)
    else:
        es, w, diff = cache
        gu = (-2.0 * gphi)[:, None] * diff
        g_subj = gu * w
        g_diag = gu * es
        g_obj = -gu
        g_trans = -gu
    return loss, phi, g_subj, g_obj, g_diag, g_trans, gphi


def score_candidates(ent, rdiag, rtrans, bs, bo, subj, rel, cand, c, poincare, out=None):
    """Scores of (subj[q], rel[q], cand[j]) as a (Q, len(cand)) matrix."""
    subj, rel, cand = _as_index(subj), _as_index(rel), _as_index(cand)
    if out is None:
        out = np.empty((len(subj), len(cand)), dtype=np.float64)
    cand_emb = ent[cand]
    cand_bias = bo[cand]
    if poincare:
        sqrt_c = np.sqrt(c)
        u, _ = _murp_subject(ent[subj], rdiag[rel], c, sqrt_c)
    else:
        u = rdiag[rel] * ent[subj] - rtrans[rel]
    for q in range(len(subj)):
        t = rtrans[rel[q]]
        if poincare:
            v_pre, _ = _mobius_parts(cand_emb, np.broadcast_to(t, cand_emb.shape), c)
            sv, _, _ = _clip_scale(v_pre, sqrt_c)
            v = sv[:, None] * v_pre
            d2, _ = _sq_dist_ball(np.broadcast_to(u[q], v.shape), v, c)
        else:
            diff = u[q] - cand_emb
            d2 = _dot(diff, diff)
        out[q] = -d2 + bs[subj[q]] + cand_bias
    return out


def scatter_add(out, index, values):
    """out[index[i]] += values[i], rows accumulated in order."""
    np.add.at(out, _as_index(index), values)
