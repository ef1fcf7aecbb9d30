"""Time the compiled simulation kernel against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--paths N] [--dt DT] [--horizon T] [--repeat R]

Both backends see identical Brownian increments; the script reports wall time
per backend, throughput in path-steps per second, the speedup and the largest
per-path disagreement.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from drawdown_tracking import PrimalPolicy, SimConfig, Simulator
from drawdown_tracking.kernel import BACKEND
from drawdown_tracking.presets import FIG1, FIG1_STATE


def bench(backend: str, cfg: SimConfig, repeat: int) -> tuple[float, np.ndarray]:
    sim = Simulator(PrimalPolicy(FIG1), backend=backend)
    best = float("inf")
    out = None
    for _ in range(repeat):
        sim._last = None
        t0 = time.perf_counter()
        out = sim.run(cfg)
        best = min(best, time.perf_counter() - t0)
    return best, np.column_stack(out)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--horizon", type=float, default=2.0)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    if BACKEND != "compiled":
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    s = FIG1_STATE
    cfg = SimConfig(s.x, s.z, s.m, a.dt, a.horizon, a.paths, seed=1)
    work = cfg.n_paths * cfg.n_steps
    t_c, r_c = bench("compiled", cfg, a.repeat)
    t_p, r_p = bench("python", cfg, a.repeat)
    diff = float(np.max(np.abs(r_c - r_p) / (1 + np.abs(r_p))))
    print(f"{cfg.n_paths} paths x {cfg.n_steps} steps, best of {a.repeat}")
    print(f"compiled  {t_c:8.3f} s  {work / t_c:12.3e} path-steps/s")
    print(f"python    {t_p:8.3f} s  {work / t_p:12.3e} path-steps/s")
    print(f"speedup   {t_p / t_c:8.1f}x")
    print(f"max rel. difference {diff:.2e}")


if __name__ == "__main__":
    main()
