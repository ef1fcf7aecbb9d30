"""Named correctness checks grouped into suites.

Each check returns a :class:`CheckReport`; failures are data, not
exceptions. The analytic suite never touches the random number generator.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

from .closed_form import NoDrawdownSolution
from .dual import BOTTOM, MID, TOP, DualSolution, evaluate_arrays
from .params import ModelParams
from .policy import PrimalPolicy
from .simulate import SimConfig, Simulator, dual_path_check, suboptimal_policy


class Suite(Enum):
    Analytic = "analytic"
    Duality = "duality"
    MonteCarlo = "montecarlo"
    All = "all"


@dataclass
class CheckReport:
    check_name: str
    grid: str
    max_violation: float
    tolerance: float
    passed: bool
    gating: bool = True
    findings: list[dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _report(
    name: str,
    grid: str,
    viol: np.ndarray,
    tol: float,
    points: dict[str, np.ndarray],
    gating: bool = True,
    worst: int = 3,
) -> CheckReport:
    viol = np.asarray(viol, dtype=float).ravel()
    bad = ~np.isfinite(viol)
    v = np.where(bad, np.inf, viol)
    order = np.argsort(-v)[:worst]
    findings = [
        {k: float(np.asarray(a).ravel()[i]) for k, a in points.items()} | {"violation": float(v[i])}
        for i in order
    ]
    mx = float(v.max()) if v.size else 0.0
    return CheckReport(name, grid, mx, tol, bool(mx <= tol), gating, findings)


@dataclass(frozen=True)
class Grids:
    """Default evaluation grids."""

    n_y: int = 64
    z: tuple[float, ...] = (0.0, 1.0, 10.0, 100.0)
    n_m: int = 32
    m_span: float = 1e3

    def m_values(self, dual: DualSolution) -> np.ndarray:
        lo = dual.consts.m_floor
        return np.geomspace(lo * (1 + 1e-9), lo * self.m_span, self.n_m)

    def describe(self) -> str:
        return f"y {self.n_y}/piece, z {list(self.z)}, m {self.n_m} log points x{self.m_span:g}"


def _piece_grid(dual: DualSolution, m: float, n: int) -> np.ndarray:
    co = dual.coefficients(m)
    beta = dual.params.beta
    edges = [co.y_star, co.y2]
    if co.has_top:
        edges.append(co.y1)
    edges.append(beta)
    ys = [np.geomspace(lo, hi, n) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]
    return np.unique(np.concatenate(ys)) if ys else np.array([beta])


def _yzm_grid(dual: DualSolution, grids: Grids) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Y, Z, M = [], [], []
    for m in grids.m_values(dual):
        y = _piece_grid(dual, m, grids.n_y)
        for z in grids.z:
            Y.append(y)
            Z.append(np.full(y.size, z))
            M.append(np.full(y.size, m))
    return np.concatenate(Y), np.concatenate(Z), np.concatenate(M)


# ----------------------------------------------------------------------
# analytic suite


def check_pde_residual(dual: DualSolution, grids: Grids, tol: float = 1e-8) -> CheckReport:
    y, z, m = _yzm_grid(dual, grids)
    r = dual.pde_residual_arrays(y, z, m)
    return _report("dual_pde_residual", grids.describe(), r, tol, {"y": y, "z": z, "m": m})


def _forced(dual: DualSolution, y: np.ndarray, z: np.ndarray, m: np.ndarray, piece: int) -> dict:
    co = dual.coefficients_batch(m)
    return evaluate_arrays(dual.consts, y, z, m, co, np.full(y.size, piece))


def check_smooth_fit(dual: DualSolution, grids: Grids, tol: float = 1e-8) -> CheckReport:
    ms = grids.m_values(dual)
    co = dual.coefficients_batch(ms)
    viols, pts = [], {"m": [], "z": [], "y": []}
    for key, up, lo in (("y1", TOP, MID), ("y2", MID, BOTTOM)):
        ok = np.isfinite(co[key]) & (co[key] < dual.params.beta)
        for z in grids.z:
            y = co[key][ok]
            mm = ms[ok]
            zz = np.full(y.size, z)
            a = _forced(dual, y, zz, mm, up)
            b = _forced(dual, y, zz, mm, lo)
            dv = np.abs(a["value"] - b["value"]) / (1 + np.abs(a["value"]))
            dd = np.abs(a["dy"] - b["dy"]) / (1 + np.abs(a["dy"]))
            viols.append(np.maximum(dv, dd))
            pts["m"].append(mm)
            pts["z"].append(zz)
            pts["y"].append(y)
    p = {k: np.concatenate(v) for k, v in pts.items()}
    return _report("smooth_fit", "kinks at (lambda m)^(p-1) and m^(p-1)", np.concatenate(viols), tol, p)


def check_super_contact(dual: DualSolution, grids: Grids, tol: float = 1e-6) -> CheckReport:
    """Finite-difference m-derivatives of v_hat and v_hat_y at y = y*(m)."""
    ms = grids.m_values(dual)[1:]
    ys = dual.boundary.y_star_array(ms)
    viols, pts = [], {"m": [], "z": []}
    for z in grids.z:
        h = 1e-5 * ms
        zz = np.full(ms.size, z)
        up = _forced(dual, ys, zz, ms + h, BOTTOM)
        dn = _forced(dual, ys, zz, ms - h, BOTTOM)
        mid = _forced(dual, ys, zz, ms, BOTTOM)
        vm = ms * (up["value"] - dn["value"]) / (2 * h) / (1 + np.abs(mid["value"]))
        vym = ms * ys * (up["dy"] - dn["dy"]) / (2 * h) / (1 + np.abs(ys * mid["dy"]))
        viols.append(np.maximum(np.abs(vm), np.abs(vym)))
        pts["m"].append(ms)
        pts["z"].append(zz)
    p = {k: np.concatenate(v) for k, v in pts.items()}
    return _report("super_contact", "y = y*(m) on the m grid", np.concatenate(viols), tol, p)


def check_convexity(dual: DualSolution, grids: Grids) -> CheckReport:
    y, z, m = _yzm_grid(dual, grids)
    co = dual.coefficients_batch(m)
    ev = evaluate_arrays(dual.consts, y, z, m, co)
    scale = 1 + np.abs(ev["dy"])
    viol = np.maximum(np.maximum(-ev["dyy"], 0.0), np.maximum(ev["dy"], 0.0) / scale)
    viol = np.where(ev["dyy"] > 0, viol, np.maximum(viol, 1.0))
    return _report("convexity", grids.describe(), viol, 1e-12, {"y": y, "z": z, "m": m})


def check_neumann(dual: DualSolution, grids: Grids, tol: float = 1e-8) -> CheckReport:
    pr, cst = dual.params, dual.consts
    ms = grids.m_values(dual)
    viols, pts = [], {"m": [], "z": []}
    for z in grids.z:
        co = dual.coefficients_batch(ms)
        e = evaluate_arrays(cst, np.full(ms.size, pr.beta), np.full(ms.size, z), ms, co)
        viols.append(np.abs(e["dy"]) / (1 + np.abs(e["value"])))
        pts["m"].append(ms)
        pts["z"].append(np.full(ms.size, z))
    for m in ms:
        c = dual.coefficients(m)
        if c.has_top:
            r = -c.C1 + pr.rho / cst.alpha * c.C2 - pr.lam * m * pr.beta / cst.ar
            viols.append(np.array([abs(r) / (1 + abs(c.C1))]))
            pts["m"].append(np.array([m]))
            pts["z"].append(np.array([math.nan]))
    p = {k: np.concatenate(v) for k, v in pts.items()}
    return _report("neumann", "y = beta; coefficient identity above the kink", np.concatenate(viols), tol, p)


def check_boundary_monotone(dual: DualSolution, n: int = 200, tol: float = 1e-8) -> CheckReport:
    fb = dual.boundary
    ms = np.geomspace(dual.consts.m_floor, min(fb.m_max, dual.consts.m_floor * 1e12), n)
    ys = fb.y_star_array(ms)
    dec = np.diff(ys)
    viol = np.concatenate([np.where(dec < 0, 0.0, 1.0)])
    sample = ms[:: max(1, n // 20)][1:]
    back = np.array([fb.m_star_of_y(fb.y_star(m)) for m in sample])
    rt = np.abs(back - sample) / sample
    v = np.concatenate([viol, rt])
    mm = np.concatenate([ms[1:], sample])
    return _report("y_star_monotone", f"{n} log points in m; round trip on {sample.size}", v, tol, {"m": mm})


# ----------------------------------------------------------------------
# duality suite


def _random_states(policy: PrimalPolicy, n: int, seed: int) -> tuple[np.ndarray, ...]:
    rng = np.random.default_rng(seed)
    cst = policy.consts
    z = rng.uniform(0.0, 50.0, n)
    m = cst.m_floor * np.exp(rng.uniform(0.0, math.log(1e3), n))
    F3 = policy.thresholds_array(z, m)[2]
    x = rng.uniform(0.0, 1.5, n) * np.maximum(F3, 1.0)
    return x, z, m


def check_vx_equals_f(policy: PrimalPolicy, n: int = 500, seed: int = 11, tol: float = 1e-6) -> CheckReport:
    x, z, m = _random_states(policy, n, seed)
    h = 1e-5 * (1 + x)
    x = np.maximum(x, 2 * h)
    up = policy.evaluate_array(x + h, z, m)["v"]
    dn = policy.evaluate_array(x - h, z, m)["v"]
    y = policy.evaluate_array(x, z, m)["y"]
    fd = (up - dn) / (2 * h)
    viol = np.abs(fd - y) / np.abs(y)
    return _report("vx_equals_f", f"{n} random states", viol, tol, {"x": x, "z": z, "m": m})


def check_concavity(policy: PrimalPolicy, n: int = 500, seed: int = 12) -> CheckReport:
    """v_xx < 0: f strictly decreasing in x and v_xx = -1/v_hat_yy < 0."""
    x, z, m = _random_states(policy, n, seed)
    h = 1e-4 * (1 + x)
    x = np.maximum(x, 2 * h)
    ev = policy.evaluate_array(x, z, m)
    fu = policy.evaluate_array(x + h, z, m)["y"]
    fd = policy.evaluate_array(x - h, z, m)["y"]
    viol = np.where((fu < fd) & (ev["v_hat_yy"] > 0), 0.0, 1.0)
    return _report("v_xx_negative", f"{n} random states", viol, 0.0, {"x": x, "z": z, "m": m})


def check_lipschitz(policy: PrimalPolicy, n: int = 10_000, seed: int = 13) -> CheckReport:
    x1, z, m = _random_states(policy, n, seed)
    rng = np.random.default_rng(seed + 1)
    x2 = x1 * rng.uniform(0.0, 2.0, n)
    v1 = policy.evaluate_array(x1, z, m)["v"]
    v2 = policy.evaluate_array(x2, z, m)["v"]
    beta = policy.params.beta
    slack = 1e-12 * (1 + np.abs(v1))
    viol = np.maximum(np.abs(v1 - v2) - beta * np.abs(x1 - x2) - slack, 0.0)
    return _report("lipschitz_x", f"{n} random pairs", viol, 0.0, {"x1": x1, "x2": x2, "z": z, "m": m})


def check_no_drawdown_limit(
    params: ModelParams, n: int = 50, seed: int = 14, tol: float = 1e-10, tol_small: float = 1e-3
) -> list[CheckReport]:
    base = params.replace(lam=0.0)
    pol0 = PrimalPolicy(base)
    cf = NoDrawdownSolution(base)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 50.0, n)
    z = rng.uniform(0.0, 50.0, n)
    m = pol0.consts.m_floor * np.exp(rng.uniform(0.0, math.log(1e3), n))
    ev = pol0.evaluate_array(x, z, m)
    ref_v = np.array([cf.value(a, b) for a, b in zip(x, z)])
    ref_c = np.array([cf.consumption(a, b) for a, b in zip(x, z)])
    ref_t = np.array([cf.portfolio(a, b) for a, b in zip(x, z)])
    rel = lambda a, b: np.abs(a - b) / np.maximum(1.0, np.abs(b))  # noqa: E731
    viol = np.maximum.reduce(
        [rel(ev["v"], ref_v), rel(ev["c"], ref_c), rel(ev["theta"], ref_t).max(axis=1)]
    )
    out = [_report("lambda_zero_closed_form", f"{n} random states", viol, tol, {"x": x, "z": z, "m": m})]
    pol1 = PrimalPolicy(params.replace(lam=1e-4))
    F3 = pol1.thresholds_array(z, m)[2]
    inner = x < F3
    v1 = pol1.evaluate_array(x[inner], z[inner], m[inner])["v"]
    gap = np.abs(v1 - ref_v[inner]) / np.abs(ref_v[inner])
    out.append(
        _report(
            "lambda_small_continuity",
            f"{int(inner.sum())} states with x < F3",
            gap,
            tol_small,
            {"x": x[inner], "z": z[inner], "m": m[inner]},
        )
    )
    return out


def check_regions(policy: PrimalPolicy, n: int = 2000, seed: int = 15) -> CheckReport:
    x, z, m = _random_states(policy, n, seed)
    ev = policy.evaluate_array(x, z, m)
    lam = policy.params.lam
    me, c, r = ev["m_eff"], ev["c"], ev["region"]
    tol = 1e-10 * (1 + me)
    bad = (c < lam * me - tol) | (c > me + tol)
    bad |= (r == 1) & (np.abs(c - lam * me) > tol)
    bad |= (r == 3) & (np.abs(c - me) > tol)
    bad |= (r == 5) & ~ev["lifted"]
    F1, F2, F3 = ev["F1"], ev["F2"], ev["F3"]
    bad |= ~((0 <= F1) & (F1 <= F2 + 1e-12 * (1 + F2)) & (F2 <= F3 + 1e-12 * (1 + F3)))
    return _report("region_consistency", f"{n} random states", bad.astype(float), 0.0, {"x": x, "z": z, "m": m})


def scan_vhat_m(dual: DualSolution, grids: Grids) -> CheckReport:
    y, z, m = _yzm_grid(dual, grids)
    co = dual.coefficients_batch(m)
    ev = evaluate_arrays(dual.consts, y, z, m, co, with_dm=True)
    viol = np.maximum(ev["dm"], 0.0) * m / (1 + np.abs(ev["value"]))
    return _report(
        "vhat_m_nonpositive", grids.describe(), viol, 1e-10, {"y": y, "z": z, "m": m}, gating=False
    )


# ----------------------------------------------------------------------
# Monte Carlo suite


@dataclass(frozen=True)
class MCSettings:
    x0: float = 10.0
    z0: float = 10.0
    m0: float = 6.0
    dt: float = 1e-3
    horizon: float | None = None
    n_paths: int = 10_000
    seed: int = 0

    def config(self, rho: float, **kw: Any) -> SimConfig:
        T = self.horizon if self.horizon is not None else default_horizon(rho)
        base = dict(x0=self.x0, z0=self.z0, m0=self.m0, dt=self.dt, horizon=T,
                    n_paths=self.n_paths, seed=self.seed)
        base.update(kw)
        return SimConfig(**base)


def default_horizon(rho: float, tail: float = 1e-5) -> float:
    """Smallest horizon, on a 0.5 grid, with e^{-rho T} below ``tail``."""
    return math.ceil(-math.log(tail) / rho * 2.0) / 2.0


def check_objective(sim: Simulator, mc: MCSettings) -> list[CheckReport]:
    cfg = mc.config(sim.params.rho)
    est = sim.estimate_objective(cfg)
    v = sim.policy.original_value(cfg.wealth, cfg.z0, cfg.m0)
    z = abs(est.mean - v) / est.std_error
    pts = {"mean": np.array([est.mean]), "se": np.array([est.std_error]), "value": np.array([v])}
    out = [_report("objective_vs_value", f"{cfg.n_paths} paths, dt {cfg.dt:g}, T {cfg.horizon:g}",
                   np.array([z]), 3.0, pts)]
    sub = sim.estimate_policy(cfg, suboptimal_policy(sim.params, cfg.m0))
    se = math.hypot(sub.std_error, est.std_error)
    margin = (sub.mean - est.mean) / se + 3.0
    out.append(_report("suboptimal_below", "theta = 0, c = lambda m0", np.array([max(margin, 0.0)]), 0.0,
                       {"mean": np.array([sub.mean]), "se": np.array([sub.std_error])}))
    return out


def check_injection_bracket(sim: Simulator, mc: MCSettings) -> CheckReport:
    cfg = mc.config(sim.params.rho)
    inj = sim.estimate_injection(cfg)
    b = sim.injection_bounds(cfg)
    lo = max(b["lower_1"], b["lower_2"])
    se = inj.std_error
    viol = max(lo - 3 * se - inj.mean, inj.mean - (b["upper"] + 3 * math.hypot(se, b["upper_se"])), 0.0)
    pts = {"mean": np.array([inj.mean]), "lower": np.array([lo]), "upper": np.array([b["upper"]])}
    return _report("injection_bracket", f"{cfg.n_paths} paths", np.array([viol]), 0.0, pts)


def check_dual_path(sim: Simulator, mc: MCSettings, n_paths: int = 100, horizon: float = 0.5) -> list[CheckReport]:
    reps = []
    for dt in (1e-4, 5e-5):
        cfg = mc.config(sim.params.rho, dt=dt, horizon=horizon, n_paths=n_paths)
        reps.append(dual_path_check(sim.simulate_paths(cfg), sim.params.rho, sim.params.beta, dt))
    slope = reps[0].slope
    order = math.log2(reps[0].rms_residual / reps[1].rms_residual)
    return [
        _report("dual_path_slope", f"{n_paths} paths, dt 1e-4", np.array([abs(slope - 1.0)]), 0.05,
                {"slope": np.array([slope])}),
        _report("dual_path_order", "rms residual under dt halving", np.array([max(0.5 - order, 0.0)]), 0.0,
                {"order": np.array([order])}),
        _report("dual_reflection_set", "L^Y grows only at beta", np.array([0.0 if reps[0].reflection_ok else 1.0]),
                0.0, {}),
    ]


def check_transversality(sim: Simulator, mc: MCSettings, n_paths: int = 2000) -> CheckReport:
    tails = []
    for T in (1.0, 2.0, 4.0, 8.0):
        cfg = mc.config(sim.params.rho, dt=1e-2, horizon=T, n_paths=n_paths)
        tails.append(sim.simulate_dual_Y(cfg).extra["terminal"])
    t = np.array(tails)
    viol = np.maximum(np.diff(t), 0.0)
    return _report("transversality_tail", "T in {1, 2, 4, 8}", viol, 0.0,
                   {"tail": t[1:]})


# ----------------------------------------------------------------------


def analytic_suite(dual: DualSolution, grids: Grids | None = None) -> list[CheckReport]:
    g = grids or Grids()
    return [
        check_pde_residual(dual, g),
        check_smooth_fit(dual, g),
        check_super_contact(dual, g),
        check_convexity(dual, g),
        check_neumann(dual, g),
        check_boundary_monotone(dual),
    ]


def duality_suite(policy: PrimalPolicy, grids: Grids | None = None) -> list[CheckReport]:
    g = grids or Grids()
    return [
        check_vx_equals_f(policy),
        check_concavity(policy),
        check_lipschitz(policy),
        *check_no_drawdown_limit(policy.params),
        check_regions(policy),
        scan_vhat_m(policy.dual, g),
    ]


def montecarlo_suite(sim: Simulator, mc: MCSettings | None = None) -> list[CheckReport]:
    mc = mc or MCSettings()
    return [
        *check_objective(sim, mc),
        check_injection_bracket(sim, mc),
        *check_dual_path(sim, mc),
        check_transversality(sim, mc),
    ]


def run_suite(
    params: ModelParams,
    suite: Suite | str = Suite.All,
    grids: Grids | None = None,
    mc: MCSettings | None = None,
) -> list[CheckReport]:
    """Run one suite (or all) and return the reports in a fixed order."""
    suite = Suite(suite) if isinstance(suite, str) else suite
    policy = PrimalPolicy(params)
    runners: dict[Suite, Callable[[], list[CheckReport]]] = {
        Suite.Analytic: lambda: analytic_suite(policy.dual, grids),
        Suite.Duality: lambda: duality_suite(policy, grids),
        Suite.MonteCarlo: lambda: montecarlo_suite(Simulator(policy), mc),
    }
    if suite is Suite.All:
        return [r for s in (Suite.Analytic, Suite.Duality, Suite.MonteCarlo) for r in runners[s]()]
    return runners[suite]()


def gating_failures(reports: list[CheckReport]) -> list[CheckReport]:
    return [r for r in reports if r.gating and not r.passed]
