"""End-to-end acceptance checks, one test per criterion.

Each test records a single ``PASS``/``FAIL`` line, printed in the terminal
summary, before asserting.
"""

import json
import math
import time

import numpy as np
import pytest

from drawdown_tracking import PrimalPolicy, Simulator, cli
from drawdown_tracking import verify as V
from drawdown_tracking.dual import piece_index
from drawdown_tracking.presets import (
    FIG1, FIG1_STATE, FIG2, FIG2_LAMBDAS, FIG3, FIG3_BETAS, FIG4, FIG4_MUS,
)

pytestmark = pytest.mark.acceptance


def summary(reps):
    return "; ".join(f"{r.check_name}={r.max_violation:.2e}/{r.tolerance:g}" for r in reps)


@pytest.fixture(scope="module")
def fig1_mc():
    sim = Simulator(PrimalPolicy(FIG1))
    mc = V.MCSettings(x0=FIG1_STATE.x, z0=FIG1_STATE.z, m0=FIG1_STATE.m, dt=1e-3, n_paths=10_000, seed=0)
    return sim, mc


def test_c01_dual_pde_residual(fig2_dual, fig3_dual, verdict):
    grids = V.Grids(n_y=10, z=(0.0, 1.0, 10.0, 50.0, 100.0), n_m=5)
    reps, covered = [], True
    t0 = time.perf_counter()
    for dual in (fig2_dual, fig3_dual):
        reps.append(V.check_pde_residual(dual, grids))
        y, z, m = V._yzm_grid(dual, grids)
        co = dual.coefficients_batch(m)
        covered &= set(np.unique(piece_index(y, co["y1"], co["y2"]))) == {0, 1, 2}
    elapsed = time.perf_counter() - t0
    ok = all(r.passed for r in reps) and covered and elapsed < 10.0
    verdict(1, ok, f"{summary(reps)}; all pieces {covered}; {elapsed:.2f}s")
    assert ok


def test_c02_smooth_fit_and_contact(fig2_dual, fig3_dual, verdict):
    reps = []
    for dual in (fig2_dual, fig3_dual):
        g = V.Grids()
        reps += [V.check_smooth_fit(dual, g, 1e-8), V.check_super_contact(dual, g, 1e-6),
                 V.check_neumann(dual, g, 1e-8)]
    ok = all(r.passed for r in reps)
    verdict(2, ok, summary(reps))
    assert ok


def test_c03_free_boundary(fig2_dual, fm_dual, verdict):
    reps = [V.check_boundary_monotone(d, n=200, tol=1e-8) for d in (fig2_dual, fm_dual)]
    small = min(float(d.boundary.y_star(d.consts.m_floor * 1e12)) for d in (fig2_dual, fm_dual))
    ok = all(r.passed for r in reps) and small < 1e-3
    verdict(3, ok, f"{summary(reps)}; min y* {small:.2e}")
    assert ok


def test_c04_duality_consistency(fig2_policy, verdict):
    reps = [V.check_vx_equals_f(fig2_policy, n=500, tol=1e-6),
            V.check_lipschitz(fig2_policy, n=10_000),
            V.check_concavity(fig2_policy, n=500)]
    ok = all(r.passed for r in reps)
    verdict(4, ok, summary(reps))
    assert ok


def test_c05_no_drawdown_oracle(verdict):
    reps = V.check_no_drawdown_limit(FIG2, n=50, tol=1e-10, tol_small=1e-3)
    ok = all(r.passed for r in reps)
    verdict(5, ok, summary(reps))
    assert ok


def test_c06_optimality_by_simulation(fig1_mc, verdict):
    sim, mc = fig1_mc
    t0 = time.perf_counter()
    reps = V.check_objective(sim, mc)
    elapsed = time.perf_counter() - t0
    ok = all(r.passed for r in reps) and elapsed < 120.0
    verdict(6, ok, f"{summary(reps)}; {elapsed:.1f}s")
    assert ok


def test_c07_injection_bracket(fig1_mc, verdict):
    sim, mc = fig1_mc
    rep = V.check_injection_bracket(sim, mc)
    pts = rep.findings[0] if rep.findings else {}
    verdict(7, rep.passed, f"{summary([rep])} {pts}")
    assert rep.passed


def test_c08_dual_path_identity(fig1_mc, verdict):
    sim, mc = fig1_mc
    reps = V.check_dual_path(sim, mc)
    ok = all(r.passed for r in reps)
    verdict(8, ok, summary(reps))
    assert ok


def strictly(seq, sign):
    return all(sign * (b - a) > 0 for a, b in zip(seq, seq[1:]))


def test_c09_qualitative_sweeps(verdict):
    # lambda: every lambda > 0 consumes less and invests more than lambda = 0 at large x
    xs = (100.0, 200.0, 400.0, 800.0, 1600.0)
    rows = cli.sensitivity_rows(cli.SweepSpec("lambda", FIG2_LAMBDAS, xs, FIG2, 10.0, 20.0), 0, 1e-2, None, 0)
    tab = {(r["value"], r["x"]): r for r in rows}
    lam_ok = [
        all(tab[(l, x)]["c_star"] < tab[(0.0, x)]["c_star"]
            and tab[(l, x)]["theta_star"] > tab[(0.0, x)]["theta_star"] for l in FIG2_LAMBDAS[1:])
        for x in xs
    ]

    # beta: injection strictly decreasing in beta (common random numbers)
    xb = (20.0, 30.0, 40.0, 60.0, 80.0)
    rows = cli.sensitivity_rows(cli.SweepSpec("beta", FIG3_BETAS, xb, FIG3, 20.0, 6.0), 7, 1e-2, 5.0, 2000)
    inj = {(r["value"], r["x"]): r["injection_estimate"] for r in rows}
    beta_ok = [strictly([inj[(b, x)] for b in FIG3_BETAS], -1) for x in xb]

    # mu: consumption strictly increasing in the asset drift
    xm = (5.0, 10.0, 20.0, 50.0, 100.0)
    rows = cli.sensitivity_rows(cli.SweepSpec("mu", FIG4_MUS, xm, FIG4, 20.0, 6.0), 0, 1e-2, None, 0)
    cs = {(r["value"], r["x"]): r["c_star"] for r in rows}
    mu_ok = [strictly([cs[(u, x)] for u in FIG4_MUS], 1) for x in xm]

    counts = (sum(lam_ok), sum(beta_ok), sum(mu_ok))
    ok = min(counts) >= 5
    verdict(9, ok, f"strict points lambda/beta/mu = {counts}")
    assert ok


def test_c10_determinism(fig1_mc, tmp_path, verdict):
    sim, mc = fig1_mc
    cfg = mc.config(FIG1.rho, n_paths=200, dt=1e-2)
    a = sim.estimate_objective(cfg)
    b = Simulator(PrimalPolicy(FIG1)).estimate_objective(cfg)
    same_mc = (a.mean, a.std_error) == (b.mean, b.std_error)

    outs = []
    for i in range(2):
        p = tmp_path / f"sens{i}.csv"
        cli.main(["sensitivity", "--preset", "fig3", "--param", "beta", "--values", "2", "40",
                  "--x", "10", "40", "--paths", "100", "--dt", "0.02", "--seed", "5", "--out", str(p)])
        q = tmp_path / f"ver{i}.json"
        cli.main(["verify", "--preset", "fig2", "--suite", "analytic", "--out", str(q)])
        outs.append(p.read_bytes() + q.read_bytes())
    same_cli = outs[0] == outs[1]
    json.loads((tmp_path / "ver0.json").read_text())
    ok = same_mc and same_cli
    verdict(10, ok, f"MC repeat identical {same_mc}; CLI bytes identical {same_cli}")
    assert ok
