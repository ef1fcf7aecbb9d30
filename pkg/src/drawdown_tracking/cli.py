"""Command-line front end.

Subcommands: verify, policy-eval, simulate, sensitivity, boundary-table.
Tables are RFC-4180 CSV with 17 significant digits, or JSON with
``--format json``. Exit codes: 0 success, 2 configuration error,
3 gating verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import presets
from .errors import AssumptionViolated, ConfigError, DomainError, DrawdownTrackingError, SingularSigma
from .params import ModelParams
from .policy import PrimalPolicy
from .simulate import SimConfig, Simulator
from .verify import MCSettings, Suite, default_horizon, gating_failures, run_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GATE = 3

SWEEP_PARAMS = ("lambda", "beta", "mu", "rho", "p", "sigma_Z")


# ----------------------------------------------------------------------
# config loading


@dataclass
class RunConfig:
    params: ModelParams
    state: dict[str, float] = field(default_factory=dict)
    simulation: dict[str, float] = field(default_factory=dict)


def load_config(path: str | None, preset: str | None) -> RunConfig:
    """Read a JSON config (``--config`` or ``DT_CONFIG``) or a named preset."""
    path = path or os.environ.get("DT_CONFIG")
    if preset and path:
        raise ConfigError("give either --config or --preset, not both")
    if preset:
        if preset not in presets.PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(presets.PRESETS)}")
        st = presets.STATES[preset]
        return RunConfig(presets.PRESETS[preset], {"x": st.x, "z": st.z, "m": st.m})
    if not path:
        raise ConfigError("no config: pass --config, --preset or set DT_CONFIG")
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig(
        ModelParams.from_dict(raw),
        {k: float(v) for k, v in raw.get("state", {}).items()},
        {k: float(v) for k, v in raw.get("simulation", {}).items()},
    )


def _pick(cli: Any, cfg: dict[str, float], key: str, default: Any = None) -> Any:
    if cli is not None:
        return cli
    if key in cfg:
        return cfg[key]
    if default is None:
        raise ConfigError(f"missing {key!r}: give it on the command line or in the config")
    return default


def sweep_params(base: ModelParams, name: str, value: float) -> ModelParams:
    if name == "lambda":
        return base.replace(lam=value)
    if name == "mu":
        if base.d != 1:
            raise ConfigError("mu sweeps need a single risky asset")
        return base.replace(mu=[value])
    if name in ("beta", "rho", "p", "sigma_Z"):
        return base.replace(**{name: value})
    raise ConfigError(f"cannot sweep {name!r}; choose from {SWEEP_PARAMS}")


# ----------------------------------------------------------------------
# output


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def render_table(rows: list[dict[str, Any]], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_jsonable(rows), indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    if rows:
        w = csv.writer(buf, lineterminator="\r\n")
        cols = list(rows[0])
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_bytes(text.encode("utf-8"))
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------------
# commands


def _policy_rows(pol: PrimalPolicy, x: np.ndarray, z: np.ndarray, m: np.ndarray) -> list[dict]:
    ev = pol.evaluate_array(x, z, m)
    d = pol.params.d
    rows = []
    for i in range(x.size):
        r: dict[str, Any] = {
            "x": x[i], "z": z[i], "m": m[i], "m_eff": ev["m_eff"][i], "y": ev["y"][i],
            "value": ev["v"][i], "c_star": ev["c"][i],
        }  # fmt: skip
        th = ev["theta"][i]
        if d == 1:
            r["theta_star"] = th[0]
        else:
            for j in range(d):
                r[f"theta_star_{j + 1}"] = th[j]
        r["region"] = f"R{int(ev['region'][i])}"
        rows.append(r)
    return rows


def cmd_policy_eval(args: argparse.Namespace, rc: RunConfig) -> int:
    xs = np.asarray(args.x if args.x else [_pick(None, rc.state, "x")], dtype=float)
    z = float(_pick(args.z, rc.state, "z"))
    m = float(_pick(args.m, rc.state, "m"))
    pol = PrimalPolicy(rc.params)
    rows = _policy_rows(pol, xs, np.full(xs.size, z), np.full(xs.size, m))
    emit(render_table(rows, args.format), args.out)
    return EXIT_OK


def _sim_config(args: argparse.Namespace, rc: RunConfig, rho: float, **over: Any) -> SimConfig:
    sim = rc.simulation
    horizon = _pick(args.horizon, sim, "horizon", default_horizon(rho))
    kw = dict(
        dt=float(_pick(args.dt, sim, "dt", 1e-3)),
        horizon=float(horizon),
        n_paths=int(_pick(args.paths, sim, "paths", 10_000)),
        seed=int(args.seed),
    )
    kw.update(over)
    z = float(_pick(getattr(args, "z", None), rc.state, "z"))
    m = float(_pick(getattr(args, "m", None), rc.state, "m"))
    v0 = getattr(args, "v0", None)
    if v0 is not None:
        return SimConfig.from_wealth(float(v0), z, m, **kw)
    x = float(_pick(getattr(args, "x0", None), rc.state, "x"))
    return SimConfig(x0=x, z0=z, m0=m, **kw)


def cmd_simulate(args: argparse.Namespace, rc: RunConfig) -> int:
    sim = Simulator(rc.params)
    cfg = _sim_config(args, rc, rc.params.rho)
    obj, inj = sim.estimate_both(cfg)
    value = sim.policy.original_value(cfg.wealth, cfg.z0, cfg.m0)
    summary = {
        "x0": cfg.x0, "z0": cfg.z0, "m0": cfg.m0, "v0": cfg.wealth, "dt": cfg.dt,
        "horizon": cfg.horizon, "paths": cfg.n_paths, "seed": cfg.seed,
        "objective_mean": obj.mean, "objective_se": obj.std_error, "value": value,
        "injection_mean": inj.mean, "injection_se": inj.std_error,
        "tail_factor": obj.tail_factor,
    }  # fmt: skip
    emit(render_table([summary], args.format), args.out)
    if args.dump_paths:
        rows = []
        for k, pth in enumerate(sim.simulate_paths(cfg, args.dump_paths)):
            for i in range(pth.t.size):
                rows.append({
                    "path": k, "t": pth.t[i], "X": pth.X[i], "Z": pth.Z[i], "M": pth.M[i],
                    "c": pth.c[i], "Y": pth.Y[i], "V": pth.V[i], "A": pth.A[i],
                })  # fmt: skip
        target = args.dump_file or (None if args.out is None else f"{args.out}.paths")
        emit(render_table(rows, args.format), target)
    return EXIT_OK


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...]
    x: tuple[float, ...]
    base: ModelParams
    z: float
    m: float

    def __post_init__(self) -> None:
        if self.parameter not in SWEEP_PARAMS:
            raise ConfigError(f"cannot sweep {self.parameter!r}; choose from {SWEEP_PARAMS}")
        if not all(math.isfinite(v) for v in self.values + self.x):
            raise ConfigError("sweep values and x grid must be finite")


def sensitivity_rows(
    sweep: SweepSpec, seed: int, dt: float, horizon: float | None, n_paths: int
) -> list[dict[str, Any]]:
    rows = []
    xs = np.asarray(sweep.x, dtype=float)
    for val in sweep.values:
        try:
            pr = sweep_params(sweep.base, sweep.parameter, val)
            sim = Simulator(pr)
        except (AssumptionViolated, SingularSigma, DomainError) as exc:
            raise ConfigError(f"{sweep.parameter}={val!r}: {exc}") from exc
        pol = sim.policy
        ev = pol.evaluate_array(xs, np.full(xs.size, sweep.z), np.full(xs.size, sweep.m))
        T = horizon if horizon is not None else default_horizon(pr.rho)
        for i, x in enumerate(xs):
            est = None
            if n_paths > 0:
                cfg = SimConfig(x, sweep.z, sweep.m, dt, T, n_paths, seed)
                est = sim.estimate_injection(cfg)
            th = float(ev["theta"][i].sum())
            rows.append({
                "parameter": sweep.parameter, "value": val, "x": x,
                "c_star": ev["c"][i], "theta_star": th,
                "theta_over_x": th / x if x > 0 else math.nan,
                "injection_estimate": est.mean if est else math.nan,
                "injection_se": est.std_error if est else math.nan,
            })  # fmt: skip
    return rows


def cmd_sensitivity(args: argparse.Namespace, rc: RunConfig) -> int:
    if args.x:
        xs = tuple(args.x)
    else:
        xs = tuple(np.linspace(args.x_min, args.x_max, args.n_x).tolist())
    sweep = SweepSpec(
        parameter=args.param,
        values=tuple(args.values),
        x=xs,
        base=rc.params,
        z=float(_pick(args.z, rc.state, "z")),
        m=float(_pick(args.m, rc.state, "m")),
    )
    sim = rc.simulation
    rows = sensitivity_rows(
        sweep,
        seed=args.seed,
        dt=float(_pick(args.dt, sim, "dt", 1e-2)),
        horizon=args.horizon if args.horizon is not None else sim.get("horizon"),
        n_paths=int(_pick(args.paths, sim, "paths", 2000)),
    )
    emit(render_table(rows, args.format), args.out)
    return EXIT_OK


def cmd_boundary_table(args: argparse.Namespace, rc: RunConfig) -> int:
    pol = PrimalPolicy(rc.params)
    fb, cst = pol.dual.boundary, pol.consts
    hi = args.m_max if args.m_max is not None else min(fb.m_max, cst.m_floor * 1e4)
    ms = np.geomspace(cst.m_floor, hi, args.n)
    ys = fb.y_star_array(ms)
    rows = [
        {"m": m, "y_star": y, "m_pow_p_minus_1": m ** (rc.params.p - 1.0)}
        for m, y in zip(ms, ys)
    ]
    emit(render_table(rows, args.format), args.out)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, rc: RunConfig) -> int:
    mc = MCSettings(
        x0=float(rc.state.get("x", 10.0)),
        z0=float(rc.state.get("z", 10.0)),
        m0=float(rc.state.get("m", 6.0)),
        dt=float(_pick(args.dt, rc.simulation, "dt", 1e-3)),
        horizon=args.horizon if args.horizon is not None else rc.simulation.get("horizon"),
        n_paths=int(_pick(args.paths, rc.simulation, "paths", 10_000)),
        seed=args.seed,
    )
    reports = run_suite(rc.params, Suite(args.suite), mc=mc)
    failed = gating_failures(reports)
    doc = {
        "suite": args.suite,
        "passed": not failed,
        "checks": [r.to_dict() for r in reports],
    }
    emit(json.dumps(_jsonable(doc), indent=2) + "\n", args.out)
    return EXIT_GATE if failed else EXIT_OK


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (env DT_CONFIG if omitted)")
    common.add_argument("--preset", help=f"named parameter set: {', '.join(presets.PRESETS)}")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (stdout if omitted)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--dt", type=float)
    mc.add_argument("--horizon", type=float)
    mc.add_argument("--paths", type=int)

    ap = argparse.ArgumentParser(prog="drawdown-tracking", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", parents=[common, mc], help="run correctness suites")
    p.add_argument("--suite", choices=[s.value for s in Suite], default="analytic")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("policy-eval", parents=[common], help="evaluate value and controls")
    p.add_argument("--x", type=float, nargs="+")
    p.add_argument("--z", type=float)
    p.add_argument("--m", type=float)
    p.set_defaults(func=cmd_policy_eval)

    p = sub.add_parser("simulate", parents=[common, mc], help="Monte Carlo under the optimal policy")
    p.add_argument("--x0", type=float)
    p.add_argument("--v0", type=float, help="initial wealth; overrides --x0")
    p.add_argument("--z", type=float)
    p.add_argument("--m", type=float)
    p.add_argument("--dump-paths", type=int, default=0, metavar="N")
    p.add_argument("--dump-file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sensitivity", parents=[common, mc], help="parameter sweeps")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--x", type=float, nargs="+")
    p.add_argument("--x-min", type=float, default=0.0)
    p.add_argument("--x-max", type=float, default=100.0)
    p.add_argument("--n-x", type=int, default=11)
    p.add_argument("--z", type=float)
    p.add_argument("--m", type=float)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("boundary-table", parents=[common], help="dump the free boundary")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--m-max", type=float)
    p.set_defaults(func=cmd_boundary_table)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = load_config(args.config, args.preset)
        return int(args.func(args, rc))
    except (ConfigError, AssumptionViolated, SingularSigma) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DrawdownTrackingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
