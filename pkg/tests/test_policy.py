import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from drawdown_tracking import DomainError, OutOfRegion, PrimalPolicy, Region
from drawdown_tracking.presets import FIG2


def _zm(policy, n=6):
    c = policy.consts
    zs = np.array([0.0, 1.0, 10.0, 100.0])
    ms = np.geomspace(c.m_floor, 300 * c.m_floor, n)
    Z, M = np.meshgrid(zs, ms)
    return Z.ravel(), M.ravel()


def test_threshold_ordering(fig2_policy):
    z, m = _zm(fig2_policy, 12)
    F1, F2, F3, _ = fig2_policy.thresholds_array(z, m)
    assert np.all(F1 >= 0)
    assert np.all(F1 <= F2 * (1 + 1e-12) + 1e-14)
    assert np.all(F2 <= F3 * (1 + 1e-12) + 1e-14)


def test_f1_zero_below_kink_and_f3_zero_at_floor(fig2_policy):
    c = fig2_policy.consts
    for z in (0.0, 5.0, 50.0):
        F1, _, _ = fig2_policy.thresholds(z, 0.9 * c.m_kink)
        assert F1 == 0.0
        _, _, F3 = fig2_policy.thresholds(z, c.m_floor)
        assert abs(F3) <= 1e-12


def test_m_star_at_zero_wealth(fig2_policy):
    for z in (0.0, 3.0, 30.0):
        assert fig2_policy.m_star(0.0, z) == pytest.approx(2.0 ** (1 / (-1.1)), rel=1e-15)


def test_m_star_increasing_and_inverse_of_f3(fig2_policy):
    x = np.linspace(0.0, 500.0, 60)
    for z in (0.0, 10.0):
        m = fig2_policy.m_star_array(x, np.full(x.size, z))
        assert np.all(np.diff(m) > 0)
        F3 = fig2_policy.thresholds_array(np.full(x.size, z), m)[2]
        np.testing.assert_allclose(F3, x, rtol=1e-10, atol=1e-12)


def test_m_star_growth(fig2_policy):
    x = np.geomspace(1.0, 1e4, 30)
    m = fig2_policy.m_star_array(x, np.full(x.size, 10.0))
    ratio = m * np.log(2.0 * m ** 1.1) / (1 + x)
    # bounded ratio: the tail stays within a small factor of its running max
    assert ratio[-1] <= 2 * ratio[:10].max() + 1.0
    assert np.all(np.isfinite(ratio))


def test_dual_state_endpoints(fig2_policy):
    p = fig2_policy.params.p
    for z, m in ((0.0, 3.0), (10.0, 20.0), (50.0, 200.0)):
        F1, F2, F3 = fig2_policy.thresholds(z, m)
        assert fig2_policy.dual_state(0.0, z, m) == 2.0
        assert fig2_policy.dual_state(F2, z, m) == pytest.approx(m ** (p - 1), rel=1e-10)
        ys = fig2_policy.dual.boundary.y_star(m)
        assert fig2_policy.dual_state(F3, z, m) == pytest.approx(ys, rel=1e-10)
        with pytest.raises(OutOfRegion):
            fig2_policy.dual_state(F3 * 1.01 + 1.0, z, m)


def test_dual_state_inverts_gradient(fig2_policy):
    rng = np.random.default_rng(1)
    for _ in range(50):
        z = rng.uniform(0, 50)
        m = math.exp(rng.uniform(-0.6, 6))
        F3 = fig2_policy.thresholds(z, m)[2]
        x = rng.uniform(0, 1) * F3
        y = fig2_policy.dual_state(x, z, m)
        dy = fig2_policy.dual.dual_value(y, z, m).dy
        assert -dy == pytest.approx(x, rel=1e-10, abs=1e-12)


def test_consumption_pieces(fig2_policy):
    pr = fig2_policy.params
    c = fig2_policy.consts
    m = 20.0
    z = 10.0
    F1, F2, F3 = fig2_policy.thresholds(z, m)
    assert m > c.m_kink and F1 > 0
    assert fig2_policy.consumption(0.0, z, m) == pytest.approx(pr.lam * m, rel=1e-15)
    assert fig2_policy.region_classify(0.0, z, m) is Region.R1
    xm = 0.5 * (F2 + F3)
    assert fig2_policy.consumption(xm, z, m) == pytest.approx(m, rel=1e-15)
    assert fig2_policy.region_classify(xm, z, m) is Region.R3
    xi = 0.5 * (F1 + F2)
    y = fig2_policy.dual_state(xi, z, m)
    assert fig2_policy.consumption(xi, z, m) == pytest.approx(y ** (1 / (pr.p - 1)), rel=1e-14)
    assert fig2_policy.region_classify(xi, z, m) is Region.R2
    assert fig2_policy.region_classify(F3, z, m) is Region.R4


def test_consumption_at_zero_below_kink(fig2_policy):
    c = fig2_policy.consts
    m = 0.5 * (c.m_floor + c.m_kink)
    # middle branch at the Neumann point
    assert fig2_policy.consumption(0.0, 5.0, m) == pytest.approx(2.0 ** (1 / (-1.1)), rel=1e-14)


def test_jump_region(fig2_policy):
    z, m = 10.0, 20.0
    F3 = fig2_policy.thresholds(z, m)[2]
    x = 2 * F3
    pt = fig2_policy.evaluate(x, z, m)
    assert pt.region is Region.R5
    assert pt.m_eff == pytest.approx(fig2_policy.m_star(x, z), rel=1e-12)
    assert pt.c == pytest.approx(pt.m_eff, rel=1e-14)
    assert pt.v == pytest.approx(fig2_policy.value(x, z, pt.m_eff), rel=1e-14)


def test_low_running_max_is_lifted(fig2_policy):
    pt = fig2_policy.evaluate(0.0, 5.0, 0.1)
    assert pt.m_eff == pytest.approx(fig2_policy.consts.m_floor, rel=1e-15)
    assert pt.region is Region.R5


@settings(max_examples=80, deadline=None)
@given(x=st.floats(0.0, 1e3), z=st.floats(0.0, 100.0), lm=st.floats(-3.0, 7.0))
@example(x=0.0, z=0.0, lm=7.0)
def test_policy_invariants(fig2_policy, x, z, lm):
    m = math.exp(lm)
    pt = fig2_policy.evaluate(x, z, m)
    lam = fig2_policy.params.lam
    assert 0 < pt.y <= 2.0
    assert lam * pt.m_eff * (1 - 1e-12) <= pt.c <= pt.m_eff * (1 + 1e-12)
    assert np.all(np.isfinite(pt.theta))
    # one asset with positive premium and a benchmark loading of +1
    assert pt.theta[0] > 0
    # at zero wealth the floor lambda * m is financed by the risky position,
    # so the natural scale includes the running max
    assert np.linalg.norm(pt.theta) / (1 + x + z + pt.m_eff) < 1e3


def test_hjb_residual(fig2_policy):
    rng = np.random.default_rng(2)
    z = rng.uniform(0, 50, 200)
    m = np.exp(rng.uniform(-0.6, 6, 200))
    F3 = fig2_policy.thresholds_array(z, m)[2]
    x = rng.uniform(0, 1, 200) * F3
    assert fig2_policy.hjb_residual_array(x, z, m).max() <= 1e-10


def test_hjb_needs_no_jump_region(fig2_policy):
    with pytest.raises(OutOfRegion):
        fig2_policy.hjb_residual(1e4, 1.0, 1.0)


def test_original_value(fig2_policy):
    beta = fig2_policy.params.beta
    assert fig2_policy.original_value(15.0, 10.0, 20.0) == pytest.approx(fig2_policy.value(5.0, 10.0, 20.0))
    assert fig2_policy.original_value(4.0, 10.0, 20.0) == pytest.approx(
        fig2_policy.value(0.0, 10.0, 20.0) - beta * 6.0
    )


def test_negative_state_rejected(fig2_policy):
    with pytest.raises(DomainError):
        fig2_policy.evaluate(-1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        fig2_policy.m_star(-1.0, 1.0)


def test_value_is_nonincreasing_in_lambda():
    pols = [PrimalPolicy(FIG2.replace(lam=l)) for l in (0.0, 0.1, 0.5, 1.0)]
    for x, z, m in ((0.0, 10.0, 20.0), (10.0, 10.0, 20.0), (100.0, 5.0, 3.0)):
        v = [p.value(x, z, m) for p in pols]
        assert all(a >= b - 1e-12 * abs(a) for a, b in zip(v, v[1:]))
