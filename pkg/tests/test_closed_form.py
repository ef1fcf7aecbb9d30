import numpy as np
import pytest

from drawdown_tracking import DomainError, NoDrawdownSolution
from drawdown_tracking.presets import FIG2

# fig2 preset at lambda = 0 evaluated with 40-digit arithmetic directly from
# the explicit value, wealth-threshold and feedback formulas:
# (x, z, value, consumption, theta)
FROZEN = [
    (0.0, 10.0, -6.0657684053086471, 0.53252054471998134, 34.597201874821231),
    (1.0, 10.0, -5.1495168459785136, 2.0367463907798395, 53.789989317574584),
    (10.0, 10.0, -4.1024354693643488, 17.954935378010666, 252.46703306151975),
    (50.0, 0.0, -3.479710173842794, 91.958140379430725, 1142.9825357895344),
    (100.0, 50.0, -3.2629017704784533, 176.16195097265812, 2340.5252665016476),
]


@pytest.fixture(scope="module")
def cf():
    return NoDrawdownSolution(FIG2.replace(lam=0.0))


@pytest.mark.parametrize("x, z, v, c, th", FROZEN)
def test_closed_form_matches_frozen(cf, x, z, v, c, th):
    assert cf.value(x, z) == pytest.approx(v, rel=1e-12)
    assert cf.consumption(x, z) == pytest.approx(c, rel=1e-12)
    assert cf.portfolio(x, z)[0] == pytest.approx(th, rel=1e-12)


@pytest.mark.parametrize("x, z, v, c, th", FROZEN)
def test_pipeline_matches_frozen(nodd_policy, x, z, v, c, th):
    for m in (0.6, 5.0, 400.0):
        pt = nodd_policy.evaluate(x, z, m)
        assert pt.v == pytest.approx(v, rel=1e-10)
        assert pt.c == pytest.approx(c, rel=1e-10)
        assert pt.theta[0] == pytest.approx(th, rel=1e-10)


def test_pipeline_matches_closed_form_randomly(nodd_policy, cf):
    rng = np.random.default_rng(8)
    x = rng.uniform(0, 200, 50)
    z = rng.uniform(0, 100, 50)
    m = np.exp(rng.uniform(-0.6, 8, 50))
    ev = nodd_policy.evaluate_array(x, z, m)
    for i in range(50):
        assert ev["v"][i] == pytest.approx(cf.value(x[i], z[i]), rel=1e-10)
        assert ev["c"][i] == pytest.approx(cf.consumption(x[i], z[i]), rel=1e-10)
        assert ev["theta"][i, 0] == pytest.approx(cf.portfolio(x[i], z[i])[0], rel=1e-10)


def test_dual_state_boundary(cf):
    assert cf.dual_state(0.0, 3.0) == 2.0
    with pytest.raises(DomainError):
        cf.dual_state(-1.0, 3.0)


def test_requires_zero_lambda():
    with pytest.raises(DomainError):
        NoDrawdownSolution(FIG2)
