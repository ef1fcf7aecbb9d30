import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drawdown_tracking import DomainError, FreeBoundary, validate
from drawdown_tracking.presets import FIG2, FIG3


@pytest.fixture(scope="module")
def fb():
    return FreeBoundary(validate(FIG2))


@pytest.fixture(scope="module")
def fb_p2():
    return FreeBoundary(validate(FIG2.replace(p=-2.0, mu_Z=0.5, sigma_Z=0.5)))


def test_analytic_branch_below_kink(fb_p2):
    c = fb_p2.consts
    m = np.geomspace(c.m_floor, c.m_kink * (1 - 1e-9), 25)
    assert c.m_floor == pytest.approx(2.0 ** (-1.0 / 3.0), rel=1e-15)
    np.testing.assert_allclose(fb_p2.y_star_array(m), m ** -3.0, rtol=1e-15)


def test_floor_maps_to_beta(fb):
    assert fb.y_star(fb.consts.m_floor) == pytest.approx(2.0, rel=1e-15)


def test_residual_vanishes_at_root(fb):
    for m in fb.consts.m_kink * np.array([1.01, 2.0, 10.0, 1e3]):
        y = fb.y_star(m)
        scale = fb.beta / fb.consts.ar
        assert abs(fb.residual(y, m)) <= 1e-13 * scale
        # the term-by-term transcription agrees up to cancellation
        assert abs(fb.literal_residual(y, m)) <= 1e-9 * (1 + abs(math.log(m)))


def test_residual_positive_near_zero_and_decreasing(fb):
    m = 5 * fb.consts.m_kink
    y2 = m ** (fb.p - 1)
    ys = np.geomspace(1e-12 * y2, y2, 200)
    r = fb.residual(ys, m)
    assert r[0] > 0
    assert np.all(np.diff(r) < 0)


def test_residual_domain(fb):
    with pytest.raises(DomainError):
        fb.residual(0.1, 0.5 * fb.consts.m_kink)
    m = 2 * fb.consts.m_kink
    with pytest.raises(DomainError):
        fb.residual(2 * m ** (fb.p - 1), m)


def test_y_star_domain(fb):
    with pytest.raises(DomainError):
        fb.y_star(0.5 * fb.consts.m_floor)


def test_strictly_decreasing_and_below_analytic(fb):
    m = np.geomspace(fb.consts.m_floor, 1e6, 400)
    y = fb.y_star_array(m)
    assert np.all(np.diff(y) < 0)
    assert np.all(y <= m ** (fb.p - 1) * (1 + 1e-15))


def test_tends_to_zero(fb):
    assert fb.y_star(1e6) < 1e-3
    assert fb.y_star(fb.m_max) < 1e-10 * fb.beta


def test_continuity_at_kink(fb):
    k = fb.consts.m_kink
    below = fb.y_star(k * (1 - 1e-12))
    above = fb.y_star(k)
    assert abs(below - above) / above <= 1e-8


def test_derivative_matches_finite_difference(fb):
    m = fb.consts.m_kink * np.array([1.5, 4.0, 30.0, 1e3])
    h = 1e-6
    fd = (np.log(fb.y_star_array(m * math.exp(h))) - np.log(fb.y_star_array(m * math.exp(-h)))) / (2 * h)
    np.testing.assert_allclose(fb.dlog_y_star(m), fd, rtol=1e-6)
    assert np.all(fb.dlog_y_star(m) < 0)


def test_interpolant_matches_fresh_solve(fb):
    rng = np.random.default_rng(3)
    m = np.exp(rng.uniform(math.log(fb.consts.m_kink), math.log(fb.m_max), 100))
    np.testing.assert_allclose(fb.y_star_interp(m), [fb.y_star(x) for x in m], rtol=1e-8)


def test_vectorized_matches_scalar(fb):
    m = np.geomspace(fb.consts.m_kink, 1e8, 40)
    np.testing.assert_allclose(fb.y_star_array(m), [fb.y_star(x) for x in m], rtol=1e-14)


def test_inverse_endpoint_and_round_trip(fb):
    assert fb.m_star_of_y(fb.beta) == pytest.approx(fb.consts.m_floor, rel=1e-15)
    m = np.geomspace(fb.consts.m_floor, 1e8, 50)
    back = np.array([fb.m_star_of_y(fb.y_star(x)) for x in m])
    np.testing.assert_allclose(back, m, rtol=1e-8)
    with pytest.raises(DomainError):
        fb.m_star_of_y(3.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-9, 2.0), st.floats(1e-9, 2.0))
def test_inverse_is_decreasing(y1, y2):
    fbh = _shared()
    if y1 == y2:
        return
    lo, hi = min(y1, y2), max(y1, y2)
    assert fbh.m_star_of_y(lo) >= fbh.m_star_of_y(hi)


_cache = {}


def _shared():
    if "fb" not in _cache:
        _cache["fb"] = FreeBoundary(validate(FIG3))
    return _cache["fb"]


def test_no_root_branch_without_drawdown():
    f = FreeBoundary(validate(FIG2.replace(lam=0.0)))
    assert f.table is None
    m = np.geomspace(f.consts.m_floor, 1e6, 20)
    np.testing.assert_allclose(f.y_star_array(m), m ** (f.p - 1), rtol=1e-15)
    with pytest.raises(DomainError):
        f.residual(0.1, 10.0)
