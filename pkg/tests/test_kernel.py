import os
import subprocess
import sys

import numpy as np
import pytest

from drawdown_tracking import _kernel_py as kp
from drawdown_tracking.kernel import BACKEND, get_backend
from drawdown_tracking.tables import SimTables


@pytest.fixture(scope="module")
def tab(fig2_policy):
    return SimTables.from_dual(fig2_policy.dual)


def test_forced_python_backend():
    env = dict(os.environ, DT_KERNEL="python")
    out = subprocess.run(
        [sys.executable, "-c", "from drawdown_tracking.kernel import BACKEND; print(BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


def test_backend_names():
    assert BACKEND in ("compiled", "python")
    assert get_backend("python") is kp
    with pytest.raises(ValueError):
        get_backend("gpu")


def test_table_coefficients_match_dual(fig2_policy, tab):
    c = fig2_policy.consts
    m = np.concatenate([
        np.geomspace(c.m_floor, c.m_kink * 0.999, 5),
        np.geomspace(c.m_kink, c.m_kink * 1e4, 12),
    ])
    co = kp.coefficients(tab, m)
    ref = fig2_policy.dual.coefficients_batch(m)
    np.testing.assert_allclose(co["ys"], ref["ys"], rtol=1e-9)
    for mine, theirs in (("a_m", "a_mid"), ("a_b", "a_bot"), ("b_m", "b_mid"), ("b_b", "b_bot")):
        np.testing.assert_allclose(co[mine], ref[theirs], rtol=1e-8, atol=1e-12 * np.abs(ref[theirs]).max())


def test_table_thresholds_match_policy(fig2_policy, tab):
    c = fig2_policy.consts
    m = np.geomspace(c.m_floor, c.m_kink * 1e3, 15)
    z = np.linspace(0.0, 50.0, 15)
    co = kp.coefficients(tab, m)
    F1, F2, F3, _ = fig2_policy.thresholds_array(z, m)
    np.testing.assert_allclose(co["A2"] + z * co["B2"], F2, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(co["A3"] + z * co["B3"], F3, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(np.maximum(co["A1"] + z * co["B1"], 0), F1, rtol=1e-8, atol=1e-10)


def test_kernel_dual_state_and_mstar(fig2_policy, tab):
    rng = np.random.default_rng(0)
    z = rng.uniform(0, 40, 30)
    m = np.exp(rng.uniform(-0.6, 5, 30))
    F3 = fig2_policy.thresholds_array(z, m)[2]
    x = rng.uniform(0, 1, 30) * F3
    co = kp.coefficients(tab, m)
    y, _ = kp.solve_y(tab, co, x, z)
    np.testing.assert_allclose(y, fig2_policy.dual_state_array(x, z, m), rtol=1e-8)
    xs = rng.uniform(1, 300, 30)
    ms = kp.solve_mstar(tab, xs, z, np.full(30, fig2_policy.consts.m_floor))
    np.testing.assert_allclose(ms, fig2_policy.m_star_array(xs, z), rtol=1e-8)


def test_beyond_table_raises(tab):
    with pytest.raises(OverflowError):
        kp.coefficients(tab, np.array([1e300]))
