"""Parameter sets used by the sensitivity figures and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass

from .params import ModelParams


def one_asset(
    mu: float,
    sigma: float,
    mu_Z: float,
    sigma_Z: float,
    rho: float = 2.0,
    beta: float = 2.0,
    p: float = -0.1,
    lam: float = 0.2,
    gamma: float = 1.0,
) -> ModelParams:
    return ModelParams(
        mu=[mu], sigma=[[sigma]], mu_Z=mu_Z, sigma_Z=sigma_Z, gamma=[gamma],
        rho=rho, beta=beta, p=p, lam=lam,
    )


@dataclass(frozen=True)
class State:
    x: float
    z: float
    m: float


# Single illustrative path; the benchmark loads negatively on the asset so
# that injection episodes occur.
FIG1 = one_asset(0.1, 0.1, 0.01, 0.05, lam=0.2, gamma=-1.0)
FIG1_STATE = State(x=10.0, z=10.0, m=6.0)

FIG2 = one_asset(0.01, 0.02, 0.05, 0.05, lam=0.2)
FIG2_STATE = State(x=0.0, z=10.0, m=20.0)
FIG2_LAMBDAS = (0.0, 0.05, 0.1, 0.5, 1.0)

FIG3 = one_asset(0.01, 0.02, 0.5, 0.5, lam=0.2)
FIG3_STATE = State(x=0.0, z=20.0, m=6.0)
FIG3_BETAS = (2.0, 4.0, 30.0, 40.0, 50.0)

FIG4 = one_asset(0.01, 0.02, 0.5, 0.5, lam=0.2)
FIG4_STATE = State(x=0.0, z=20.0, m=6.0)
FIG4_MUS = (0.004, 0.008, 0.012, 0.016)

FIG5 = one_asset(0.01, 0.02, 0.5, 0.5, lam=0.2)
FIG5_STATE = State(x=0.0, z=10.0, m=20.0)

PRESETS = {"fig1": FIG1, "fig2": FIG2, "fig3": FIG3, "fig4": FIG4, "fig5": FIG5}
STATES = {
    "fig1": FIG1_STATE,
    "fig2": FIG2_STATE,
    "fig3": FIG3_STATE,
    "fig4": FIG4_STATE,
    "fig5": FIG5_STATE,
}
