"""Poincare-ball operations.

Every function accepts a single vector or a batch of vectors stacked along
the leading axes; the last axis is always the embedding dimension.  All
arithmetic is float64.

Curvature ``c > 0`` gives a ball of radius ``1/sqrt(c)``.
"""

import numpy as np

EPS_BALL = 1e-5
EPS_CLAMP = 1e-15
EPS_ZERO = 1e-15


def _sqnorm(x):
    return np.sum(x * x, axis=-1, keepdims=True)


def _norm(x):
    return np.sqrt(_sqnorm(x))


def _artanh(x):
    return np.arctanh(np.minimum(x, 1.0 - EPS_CLAMP))


def check_curvature(c):
    if not c > 0:
        raise ValueError(f"curvature must be positive, got {c!r}")
    return float(c)


def project(x, c):
    """Radially pull points back to norm ``(1 - EPS_BALL)/sqrt(c)`` when they
    reach or cross it; points already inside are returned unchanged."""
    x = np.asarray(x, dtype=np.float64)
    sqrt_c = np.sqrt(c)
    norm = _norm(x)
    max_norm = (1.0 - EPS_BALL) / sqrt_c
    outside = norm >= max_norm
    if not np.any(outside):
        return x
    scale = np.where(outside, max_norm / np.maximum(norm, EPS_ZERO), 1.0)
    return x * scale


def conformal_factor(x, c):
    """lambda_x = 2 / (1 - c|x|^2).  Returns shape ``x.shape[:-1]``."""
    x = np.asarray(x, dtype=np.float64)
    return 2.0 / (1.0 - c * np.sum(x * x, axis=-1))


def _mobius_add(x, y, c):
    xy = np.sum(x * y, axis=-1, keepdims=True)
    x2 = _sqnorm(x)
    y2 = _sqnorm(y)
    num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    return num / np.maximum(den, EPS_ZERO)


def mobius_add(x, y, c):
    """Mobius addition x (+)_c y, projected back inside the ball."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return project(_mobius_add(x, y, c), c)


def poincare_distance(x, y, c):
    """Geodesic distance (2/sqrt(c)) artanh(sqrt(c) |(-x) (+)_c y|)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sqrt_c = np.sqrt(c)
    diff = _mobius_add(-x, y, c)
    return 2.0 / sqrt_c * _artanh(sqrt_c * np.linalg.norm(diff, axis=-1))


def exp_map(x, v, c):
    """Exponential map at ``x`` applied to tangent vector ``v``."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    sqrt_c = np.sqrt(c)
    v_norm = _norm(v)
    small = v_norm < EPS_ZERO
    safe = np.where(small, 1.0, v_norm)
    lam = 2.0 / (1.0 - c * _sqnorm(x))
    second = np.tanh(sqrt_c * lam * safe / 2.0) * v / (sqrt_c * safe)
    out = project(_mobius_add(x, second, c), c)
    return np.where(small, x, out)


def log_map(x, y, c):
    """Logarithmic map at ``x`` of ball point ``y``; inverse of ``exp_map``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sqrt_c = np.sqrt(c)
    w = _mobius_add(-x, y, c)
    w_norm = _norm(w)
    small = w_norm < EPS_ZERO
    safe = np.where(small, 1.0, w_norm)
    lam = 2.0 / (1.0 - c * _sqnorm(x))
    out = 2.0 / (sqrt_c * lam) * _artanh(sqrt_c * safe) * w / safe
    return np.where(small, 0.0, out)


def exp_map0(v, c):
    v = np.asarray(v, dtype=np.float64)
    sqrt_c = np.sqrt(c)
    v_norm = _norm(v)
    safe = np.maximum(v_norm, EPS_ZERO)
    out = np.tanh(sqrt_c * safe) * v / (sqrt_c * safe)
    return project(np.where(v_norm < EPS_ZERO, v, out), c)


def log_map0(y, c):
    y = np.asarray(y, dtype=np.float64)
    sqrt_c = np.sqrt(c)
    y_norm = _norm(y)
    safe = np.maximum(y_norm, EPS_ZERO)
    out = _artanh(sqrt_c * safe) * y / (sqrt_c * safe)
    return np.where(y_norm < EPS_ZERO, y, out)


def mobius_matvec(m_diag, x, c):
    """Diagonal Mobius matrix-vector product exp_0(M log_0(x))."""
    return exp_map0(np.asarray(m_diag, dtype=np.float64) * log_map0(x, c), c)


def riemannian_scale(grad, x, c):
    """Convert an ambient gradient to the Riemannian one: grad / lambda_x^2."""
    grad = np.asarray(grad, dtype=np.float64)
    lam = conformal_factor(x, c)[..., None]
    return grad / (lam * lam)
