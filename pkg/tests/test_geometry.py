import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from murp import geometry as g
from oracles import mp_distance, mp_exp, mp_log, mp_mobius_add, to_float

CURVATURES = st.sampled_from([0.5, 1.0, 2.0])


@st.composite
def ball_point(draw, c, frac=0.9, dim=None):
    d = dim or draw(st.integers(1, 6))
    raw = np.array(draw(st.lists(st.floats(-1, 1), min_size=d, max_size=d)))
    n = np.linalg.norm(raw)
    if n < 1e-12:
        return np.zeros(d)
    r = draw(st.floats(0, frac))
    return raw / n * r / np.sqrt(c)


@st.composite
def point_pair(draw, frac=0.9):
    c = draw(CURVATURES)
    d = draw(st.integers(1, 6))
    return c, draw(ball_point(c, frac, d)), draw(ball_point(c, frac, d))


# ---- conformal factor -------------------------------------------------------

def test_conformal_factor_examples():
    assert g.conformal_factor(np.zeros(3), 1.0) == 2.0
    assert g.conformal_factor(np.array([0.5, 0.0]), 1.0) == pytest.approx(2.6666666666666667, rel=1e-15)
    x = np.array([0.5, 0.5])  # |x|^2 = 0.5
    assert g.conformal_factor(x, 1.0) == pytest.approx(4.0, rel=1e-15)


def test_conformal_factor_batch_shape():
    x = np.zeros((4, 3, 2))
    assert g.conformal_factor(x, 1.0).shape == (4, 3)


def test_curvature_must_be_positive():
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(ValueError):
            g.check_curvature(bad)


# ---- mobius addition --------------------------------------------------------

def test_mobius_add_identity_and_inverse():
    x = np.array([0.3, -0.2, 0.1])
    zero = np.zeros(3)
    np.testing.assert_array_equal(g.mobius_add(x, zero, 1.0), x)
    np.testing.assert_array_equal(g.mobius_add(zero, x, 1.0), x)
    assert np.linalg.norm(g.mobius_add(-x, x, 1.0)) < 1e-12


def test_mobius_add_collinear_example():
    # (0.3) (+) (0.4) on a line is (x + y)/(1 + xy) = 0.625
    out = g.mobius_add(np.array([0.3, 0.0]), np.array([0.4, 0.0]), 1.0)
    np.testing.assert_allclose(out, [0.625, 0.0], rtol=1e-15, atol=0)


@settings(max_examples=200, deadline=None)
@given(point_pair())
def test_mobius_add_matches_high_precision(args):
    c, x, y = args
    want = to_float(mp_mobius_add(x, y, c))
    np.testing.assert_allclose(g.mobius_add(x, y, c), want, rtol=1e-12, atol=1e-14)


def test_mobius_add_stays_inside_at_boundary():
    c = 1.0
    r = (1 - g.EPS_BALL)
    x = np.array([r, 0.0])
    out = g.mobius_add(x, x, c)
    assert c * out @ out < 1


# ---- distance ---------------------------------------------------------------

def test_distance_examples():
    x = np.array([0.2, -0.4])
    assert g.poincare_distance(x, x, 1.0) == 0.0
    d = g.poincare_distance(np.zeros(2), np.array([0.5, 0.0]), 1.0)
    assert d == pytest.approx(1.0986122886681098, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(point_pair())
def test_distance_matches_high_precision_and_is_symmetric(args):
    c, x, y = args
    want = float(mp_distance(x, y, c))
    got = g.poincare_distance(x, y, c)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-12)
    assert abs(got - g.poincare_distance(y, x, c)) <= 1e-12 * max(1.0, got)


def test_distance_shape_is_batch_shape():
    x = np.zeros((5, 3))
    assert g.poincare_distance(x, x, 1.0).shape == (5,)


# ---- exp / log --------------------------------------------------------------

def test_exp_log_examples():
    x = np.array([0.1, 0.2])
    np.testing.assert_array_equal(g.exp_map(x, np.zeros(2), 1.0), x)
    np.testing.assert_array_equal(g.log_map(x, x, 1.0), np.zeros(2))
    e = g.exp_map(np.zeros(2), np.array([0.5, 0.0]), 1.0)
    np.testing.assert_allclose(e, [0.46211715726000974, 0.0], rtol=1e-15)
    l = g.log_map(np.zeros(2), np.array([0.46211715726000974, 0.0]), 1.0)
    np.testing.assert_allclose(l, [0.5, 0.0], rtol=1e-14)


def test_exp_log_at_origin_shortcuts_agree():
    v = np.array([0.3, -0.7, 0.2])
    np.testing.assert_allclose(g.exp_map0(v, 2.0), g.exp_map(np.zeros(3), v, 2.0), rtol=1e-14)
    y = g.exp_map0(v, 2.0)
    np.testing.assert_allclose(g.log_map0(y, 2.0), g.log_map(np.zeros(3), y, 2.0), rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_exp_log_match_high_precision(data):
    c = data.draw(CURVATURES)
    d = data.draw(st.integers(1, 5))
    x = data.draw(ball_point(c, 0.7, d))
    v = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=d, max_size=d)))
    y = g.exp_map(x, v, c)
    np.testing.assert_allclose(y, to_float(mp_exp(x, v, c)), rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(g.log_map(x, y, c), to_float(mp_log(x, y, c)), rtol=1e-8, atol=1e-10)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_log_inverts_exp(data):
    c = data.draw(CURVATURES)
    d = data.draw(st.integers(1, 6))
    x = data.draw(ball_point(c, 0.7, d))
    raw = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=d, max_size=d)))
    n = np.linalg.norm(raw)
    v = raw * data.draw(st.floats(0, 2)) / n if n > 1e-12 else np.zeros(d)
    # past the projection radius exp clips, and no inverse can undo that
    assume(np.sqrt(c) * np.linalg.norm(to_float(mp_exp(x, v, c))) < 1 - 2 * g.EPS_BALL)
    back = g.log_map(x, g.exp_map(x, v, c), c)
    assert np.linalg.norm(back - v) < 1e-9 * max(1.0, np.linalg.norm(v))


@settings(max_examples=200, deadline=None)
@given(point_pair(frac=0.8))
def test_log_norm_matches_distance(args):
    c, x, y = args
    lam = g.conformal_factor(x, c)
    assert np.linalg.norm(g.log_map(x, y, c)) * lam == pytest.approx(
        g.poincare_distance(x, y, c), rel=1e-9, abs=1e-12)


def test_exp_map_tiny_tangent_returns_base_point():
    x = np.array([0.4, 0.1])
    np.testing.assert_array_equal(g.exp_map(x, np.array([1e-17, 0.0]), 1.0), x)


# ---- mobius matvec ----------------------------------------------------------

def test_mobius_matvec_examples():
    x = np.array([0.3, -0.5])
    np.testing.assert_allclose(g.mobius_matvec(np.ones(2), x, 1.0), x, atol=1e-9)
    np.testing.assert_array_equal(g.mobius_matvec(np.array([3.0, -2.0]), np.zeros(2), 1.0), 0)
    out = g.mobius_matvec(np.array([2.0, 2.0]), np.array([0.3, 0.0]), 1.0)
    np.testing.assert_allclose(out, [0.5504587155963303, 0.0], rtol=1e-14)
    composed = g.exp_map0(2.0 * g.log_map0(np.array([0.3, 0.0]), 1.0), 1.0)
    np.testing.assert_allclose(out, composed, rtol=1e-15)


# ---- riemannian scale -------------------------------------------------------

def test_riemannian_scale_examples():
    grad = np.array([1.0, -2.0])
    np.testing.assert_allclose(g.riemannian_scale(grad, np.zeros(2), 1.0), grad / 4)
    np.testing.assert_array_equal(g.riemannian_scale(np.zeros(2), np.array([0.3, 0.1]), 1.0), 0)
    x = np.array([0.5, 0.5])
    np.testing.assert_allclose(g.riemannian_scale(grad, x, 1.0), grad / 16, rtol=1e-14)


# ---- projection and limits --------------------------------------------------

def test_project_leaves_interior_alone_and_clips_outside():
    c = 2.0
    inside = np.array([0.1, 0.2])
    assert g.project(inside, c) is not None
    np.testing.assert_array_equal(g.project(inside, c), inside)
    outside = np.array([3.0, 4.0])
    out = g.project(outside, c)
    assert np.linalg.norm(out) == pytest.approx((1 - g.EPS_BALL) / np.sqrt(c), rel=1e-14)
    np.testing.assert_allclose(out / np.linalg.norm(out), [0.6, 0.8])


def test_euclidean_limit():
    rng = np.random.default_rng(3)
    c = 1e-8
    for _ in range(100):
        x, y = rng.uniform(-1, 1, (2, 4)) / 2
        assert g.poincare_distance(x, y, c) == pytest.approx(2 * np.linalg.norm(x - y), rel=1e-3)
        np.testing.assert_allclose(g.mobius_add(x, y, c), x + y, atol=1e-6)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_boundary_inputs_stay_finite_and_inside(data):
    c = data.draw(CURVATURES)
    d = data.draw(st.integers(1, 5))
    raw = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=d, max_size=d)))
    if not np.linalg.norm(raw):
        raw[0] = 1.0
    x = raw / np.linalg.norm(raw) * (1 - g.EPS_BALL) / np.sqrt(c)
    y = -x if data.draw(st.booleans()) else x[::-1].copy()
    v = raw * data.draw(st.floats(0, 50))
    for out in (g.mobius_add(x, y, c), g.exp_map(x, v, c), g.exp_map0(v, c),
                g.mobius_matvec(raw * 10, x, c), g.project(x * 2, c)):
        assert np.all(np.isfinite(out))
        assert c * out @ out < 1
    for val in (g.poincare_distance(x, y, c), g.log_map(x, y, c), g.log_map0(x, c),
                g.conformal_factor(x, c)):
        assert np.all(np.isfinite(val))
