"""Model inputs, standing-assumption checks and derived scalar constants."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from numpy.typing import NDArray

from .errors import AssumptionViolated, ConfigError, DomainError, SingularSigma

GAMMA_NORM_TOL = 1e-12
MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Market, benchmark and preference inputs.

    ``sigma`` is the d x d volatility matrix (row-major in configs),
    ``gamma`` the unit vector of Brownian weights driving the benchmark and
    ``lam`` the drawdown fraction.
    """

    mu: NDArray[np.float64]
    sigma: NDArray[np.float64]
    mu_Z: float
    sigma_Z: float
    gamma: NDArray[np.float64]
    rho: float
    beta: float
    p: float
    lam: float

    def __post_init__(self) -> None:
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64)).copy()
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64)).copy()
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64)).copy()
        d = mu.shape[0]
        if mu.ndim != 1 or sigma.shape != (d, d) or gamma.shape != (d,):
            raise ConfigError(
                f"shape mismatch: mu {mu.shape}, sigma {sigma.shape}, gamma {gamma.shape}"
            )
        for arr in (mu, sigma, gamma):
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "gamma", gamma)
        for name in ("mu_Z", "sigma_Z", "rho", "beta", "p", "lam"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def d(self) -> int:
        return int(self.mu.shape[0])

    def replace(self, **changes: Any) -> "ModelParams":
        """Return a copy with some fields changed."""
        data = {
            "mu": self.mu,
            "sigma": self.sigma,
            "mu_Z": self.mu_Z,
            "sigma_Z": self.sigma_Z,
            "gamma": self.gamma,
            "rho": self.rho,
            "beta": self.beta,
            "p": self.p,
            "lam": self.lam,
        }
        data.update(changes)
        return ModelParams(**data)

    def to_dict(self) -> dict[str, Any]:
        return {
            "market": {
                "d": self.d,
                "mu": self.mu.tolist(),
                "sigma": self.sigma.reshape(-1).tolist(),
                "mu_Z": self.mu_Z,
                "sigma_Z": self.sigma_Z,
                "gamma": self.gamma.tolist(),
            },
            "preference": {
                "rho": self.rho,
                "beta": self.beta,
                "p": self.p,
                "lambda": self.lam,
            },
        }

    @classmethod
    def from_dict(cls, cfg: Mapping[str, Any]) -> "ModelParams":
        """Build from the ``{market: {...}, preference: {...}}`` layout."""
        try:
            market = cfg["market"]
            pref = cfg["preference"]
            d = int(market["d"])
            mu = np.asarray(market["mu"], dtype=np.float64).reshape(-1)
            sigma = np.asarray(market["sigma"], dtype=np.float64).reshape(-1)
            gamma = np.asarray(market["gamma"], dtype=np.float64).reshape(-1)
            if mu.size != d or gamma.size != d or sigma.size != d * d:
                raise ConfigError(f"market arrays do not match d={d}")
            return cls(
                mu=mu,
                sigma=sigma.reshape(d, d),
                mu_Z=float(market["mu_Z"]),
                sigma_Z=float(market["sigma_Z"]),
                gamma=gamma,
                rho=float(pref["rho"]),
                beta=float(pref["beta"]),
                p=float(pref["p"]),
                lam=float(pref["lambda"]),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc!r}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "ModelParams":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(cfg)


@dataclass(frozen=True, eq=False)
class DerivedConstants:
    """Scalars derived once from validated parameters.

    Besides the named model constants this carries a few shorthands used by
    the closed-form solution: ``s = rho/alpha``, ``D = rho(1-p) - alpha p``,
    ``e = -D/alpha`` and ``J = alpha^3 / (rho (alpha+rho)^2 D)``.
    """

    params: ModelParams
    alpha: float
    eta: float
    kappa: float
    rho_0: float
    m_floor: float
    m_kink: float
    s: float
    D: float
    e: float
    J: float
    zeta: float
    sigma_inv_mu: NDArray[np.float64] = field(repr=False)
    cov_inv_mu: NDArray[np.float64] = field(repr=False)
    cov_inv_sigma_gamma: NDArray[np.float64] = field(repr=False)

    @property
    def ar(self) -> float:
        """alpha + rho."""
        return self.alpha + self.params.rho

    @property
    def B0(self) -> float:
        """Coefficient of y^{p/(p-1)} in the middle-piece particular solution."""
        p = self.params.p
        return (1.0 - p) ** 3 / (p * self.D)

    @property
    def q(self) -> float:
        """Conjugate exponent p/(p-1)."""
        p = self.params.p
        return p / (p - 1.0)


def utility(c: float | NDArray[np.float64], p: float) -> float | NDArray[np.float64]:
    """CRRA utility c^p / p."""
    arr = np.asarray(c, dtype=np.float64)
    if np.any(arr < 0):
        raise DomainError("consumption must be nonnegative")
    if p < 0 and np.any(arr == 0):
        raise DomainError("utility is -inf at c = 0 when p < 0")
    out = arr**p / p
    return float(out) if out.ndim == 0 else out


def _kappa(alpha: float, rho: float, eta: float, mu_Z: float) -> float:
    # positive root of alpha k^2 + (rho - eta - alpha) k + (mu_Z - rho) = 0,
    # written to avoid cancellation for either sign of the linear coefficient
    b = rho - eta - alpha
    c = rho - mu_Z
    disc = math.sqrt(b * b + 4.0 * alpha * c)
    if b >= 0:
        return 2.0 * c / (b + disc)
    return (disc - b) / (2.0 * alpha)


def rho_threshold(p: float, mu_Z: float, alpha: float) -> float:
    """Admissibility threshold for the discount rate."""
    if 0.0 < p < 1.0:
        return max(mu_Z, 2.0 * alpha, alpha * p / (1.0 - p))
    return max(mu_Z, 0.0)


def validate(params: ModelParams) -> DerivedConstants:
    """Check every standing assumption and compute derived constants."""
    pr = params
    if not np.all(np.isfinite(pr.mu)) or not np.all(np.isfinite(pr.sigma)):
        raise AssumptionViolated("finite market inputs")
    if abs(float(np.linalg.norm(pr.gamma)) - 1.0) > GAMMA_NORM_TOL:
        raise AssumptionViolated("|gamma| = 1", f"|gamma| = {np.linalg.norm(pr.gamma)!r}")
    if not pr.sigma_Z >= 0.0:
        raise AssumptionViolated("sigma_Z >= 0")
    if not pr.rho > 0.0:
        raise AssumptionViolated("rho > 0")
    if not pr.beta > 0.0:
        raise AssumptionViolated("beta > 0")
    if not 0.0 <= pr.lam <= 1.0:
        raise AssumptionViolated("lambda in [0, 1]")
    if not (pr.p < 1.0 and pr.p != 0.0):
        raise AssumptionViolated("p < 1 and p != 0")

    try:
        cond = float(np.linalg.cond(pr.sigma))
    except np.linalg.LinAlgError as exc:
        raise SingularSigma(str(exc)) from exc
    if not math.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSigma(f"condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}")

    sigma_inv_mu = np.linalg.solve(pr.sigma, pr.mu)
    cov = pr.sigma @ pr.sigma.T
    cov_inv_mu = np.linalg.solve(cov, pr.mu)
    cov_inv_sigma_gamma = np.linalg.solve(cov, pr.sigma @ pr.gamma)
    alpha = 0.5 * float(sigma_inv_mu @ sigma_inv_mu)
    if not alpha > 0.0:
        raise AssumptionViolated("alpha > 0", "mu must be nonzero")
    zeta = float(pr.gamma @ sigma_inv_mu)
    eta = pr.sigma_Z * zeta

    if pr.mu_Z < eta:
        raise AssumptionViolated("mu_Z >= eta", f"mu_Z={pr.mu_Z!r}, eta={eta!r}")
    rho_0 = rho_threshold(pr.p, pr.mu_Z, alpha)
    if not pr.rho > rho_0:
        raise AssumptionViolated("rho > rho_0", f"rho={pr.rho!r}, rho_0={rho_0!r}")

    kappa = _kappa(alpha, pr.rho, eta, pr.mu_Z)
    m_floor = pr.beta ** (1.0 / (pr.p - 1.0))
    m_kink = math.inf if pr.lam == 0.0 else m_floor / pr.lam
    s = pr.rho / alpha
    D = pr.rho * (1.0 - pr.p) - alpha * pr.p
    ar = alpha + pr.rho
    J = alpha**3 / (pr.rho * ar * ar * D)
    for arr in (sigma_inv_mu, cov_inv_mu, cov_inv_sigma_gamma):
        arr.setflags(write=False)
    return DerivedConstants(
        params=pr,
        alpha=alpha,
        eta=eta,
        kappa=kappa,
        rho_0=rho_0,
        m_floor=m_floor,
        m_kink=m_kink,
        s=s,
        D=D,
        e=-D / alpha,
        J=J,
        zeta=zeta,
        sigma_inv_mu=sigma_inv_mu,
        cov_inv_mu=cov_inv_mu,
        cov_inv_sigma_gamma=cov_inv_sigma_gamma,
    )
