import json

import pytest

from drawdown_tracking import verify as V
from drawdown_tracking.presets import FIG2


@pytest.fixture(scope="module")
def analytic(fig2_policy):
    return V.analytic_suite(fig2_policy.dual)


def test_analytic_suite_passes_on_fig2(analytic):
    names = [r.check_name for r in analytic]
    assert names == [
        "dual_pde_residual", "smooth_fit", "super_contact", "convexity", "neumann", "y_star_monotone",
    ]
    for r in analytic:
        assert r.passed, (r.check_name, r.max_violation, r.findings)


def test_report_invariants(analytic):
    for r in analytic:
        assert r.passed == (r.max_violation <= r.tolerance)
        assert len(r.findings) <= 3
        json.dumps(r.to_dict())


def test_duality_suite_passes_on_fig2(fig2_policy):
    reps = V.duality_suite(fig2_policy)
    for r in reps:
        if r.gating:
            assert r.passed, (r.check_name, r.max_violation, r.findings)
    scan = [r for r in reps if r.check_name == "vhat_m_nonpositive"]
    assert len(scan) == 1 and not scan[0].gating


def test_failures_are_reports(fig2_policy):
    r = V.check_pde_residual(fig2_policy.dual, V.Grids(n_y=4, n_m=3), tol=0.0)
    assert isinstance(r, V.CheckReport)
    assert not r.passed
    assert V.gating_failures([r]) == [r]


def test_analytic_is_deterministic(fig2_policy):
    g = V.Grids(n_y=8, n_m=4)
    a = [r.to_dict() for r in V.analytic_suite(fig2_policy.dual, g)]
    b = [r.to_dict() for r in V.analytic_suite(fig2_policy.dual, g)]
    assert json.dumps(a) == json.dumps(b)


def test_run_suite_by_name():
    reps = V.run_suite(FIG2, "analytic", grids=V.Grids(n_y=8, n_m=4))
    assert len(reps) == 6
    with pytest.raises(ValueError):
        V.run_suite(FIG2, "everything")


def test_default_horizon():
    assert V.default_horizon(2.0) == 6.0
    assert V.default_horizon(1.0) == 12.0
