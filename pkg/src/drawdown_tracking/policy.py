"""Primal value function and optimal feedback controls.

Everything is read off the dual solution through the conjugate relations
v_x = y, v_xx = -1/v_hat_yy and v_xz = -v_hat_yz/v_hat_yy, where y = f(x, z, m)
inverts x = -v_hat_y(y, z, m). States with wealth above the free-boundary
threshold F3 are first lifted to the running maximum m*(x, z) at which they
sit on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .dual import (
    BOTTOM,
    MID,
    TOP,
    DualSolution,
    closed_form_coefficients,
    evaluate_arrays,
    phi_conj,
)
from .errors import ConvergenceError, DomainError, OutOfRegion
from .params import ModelParams

TIE_TOL = 1e-12
_MAX_IT = 200


class Region(Enum):
    R1 = 1  # consumption at the drawdown floor
    R2 = 2  # interior consumption
    R3 = 3  # consumption at the running maximum
    R4 = 4  # on the free boundary
    R5 = 5  # above it; the running maximum jumps


@dataclass(frozen=True)
class PolicyPoint:
    x: float
    z: float
    m: float
    y: float
    v: float
    theta: NDArray[np.float64]
    c: float
    region: Region
    m_eff: float


def _as_arrays(*args: ArrayLike) -> list[NDArray[np.float64]]:
    arrs = np.broadcast_arrays(*[np.asarray(a, dtype=np.float64) for a in args])
    return [np.ascontiguousarray(a).ravel() for a in arrs]


class PrimalPolicy:
    """Primal quantities for one parameter set, scalar and vectorized."""

    def __init__(self, dual: DualSolution | ModelParams) -> None:
        self.dual = dual if isinstance(dual, DualSolution) else DualSolution(dual)
        self.consts = self.dual.consts
        self.params = self.consts.params

    # ------------------------------------------------------------------
    # vectorized core
    def thresholds_array(
        self, z: ArrayLike, m: ArrayLike
    ) -> tuple[NDArray, NDArray, NDArray, dict[str, NDArray]]:
        """F1, F2, F3 and the coefficient arrays at (z, m), m >= m_floor."""
        z, m = _as_arrays(z, m)
        if np.any(m < self.consts.m_floor * (1.0 - 1e-13)):
            raise DomainError("thresholds need m >= m_floor")
        co = self.dual.coefficients_batch(m)
        beta = self.params.beta
        upper = np.isfinite(co["y1"]) & (co["y1"] < beta)
        y1 = np.where(upper, co["y1"], beta)
        e1 = evaluate_arrays(self.consts, y1, z, co["m"], co, np.where(upper, TOP, MID))
        e2 = evaluate_arrays(self.consts, co["y2"], z, co["m"], co, np.full(m.shape, MID))
        e3 = evaluate_arrays(self.consts, co["ys"], z, co["m"], co, np.full(m.shape, BOTTOM))
        F1 = np.where(upper, -e1["dy"], 0.0)
        F2 = -e2["dy"]
        F3 = -e3["dy"]
        return F1, F2, F3, co

    def _F3_fast(self, z: NDArray, m: NDArray) -> tuple[NDArray, NDArray]:
        """F3 and dF3/d ln m from the explicit coefficient formulas."""
        cst = self.consts
        beta, s, k = self.params.beta, cst.s, cst.kappa
        ys = self.dual.boundary.y_star_array(m)
        co = closed_form_coefficients(cst, m, ys, self.dual.c6_scaled(m))
        ly = co["a_bot"] - s * co["b_bot"] / ys + m * (np.log(ys / beta) + 1.0) / cst.ar
        lyy = s * (s + 1.0) * co["b_bot"] / (ys * ys) + m / (cst.ar * ys)
        ratio = (ys / beta) ** (k - 1.0)
        F3 = -ly + z * (ratio - 1.0)
        dl = self.dual.boundary.dlog_y_star(m)
        dF3 = (-lyy * ys + z * (k - 1.0) * ratio) * dl
        return F3, dF3

    def m_star_array(self, x: ArrayLike, z: ArrayLike) -> NDArray[np.float64]:
        """Running maximum m >= m_floor with F3(z, m) = x."""
        x, z = _as_arrays(x, z)
        if np.any(x < 0) or np.any(z < 0):
            raise DomainError("m* needs x, z >= 0")
        m_floor = self.consts.m_floor
        log_cap = math.log(self.dual.boundary.m_max)
        out = np.full(x.shape, m_floor)
        act = x > 0.0
        if not np.any(act):
            return out
        xa, za = x[act], z[act]
        lo = np.full(xa.shape, math.log(m_floor))
        hi = lo + 1.0
        for _ in range(_MAX_IT):
            hi = np.minimum(hi, log_cap)
            F3, _ = self._F3_fast(za, np.exp(hi))
            short = F3 < xa
            if not np.any(short):
                break
            if np.any(short & (hi >= log_cap)):
                raise ConvergenceError("m* beyond the tabulated free boundary")
            new_hi = np.where(short, hi + 2.0 * (hi - lo) + 1.0, hi)
            lo = np.where(short, hi, lo)
            hi = new_hi
        t = 0.5 * (lo + hi)
        done = np.zeros(xa.shape, dtype=bool)
        for _ in range(_MAX_IT):
            F3, dF3 = self._F3_fast(za, np.exp(t))
            g = F3 - xa
            lo = np.where(g < 0.0, t, lo)
            hi = np.where(g > 0.0, t, hi)
            cand = t - g / dF3
            bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
            cand = np.where(bad, 0.5 * (lo + hi), cand)
            conv = (np.abs(cand - t) <= 1e-14 * (1.0 + np.abs(t))) | (g == 0.0)
            conv |= hi - lo <= 1e-14 * (1.0 + np.abs(t))
            t = np.where(done, t, cand)
            done |= conv
            if np.all(done):
                break
        if not np.all(done):
            raise ConvergenceError("m* Newton iteration did not converge")
        out[act] = np.exp(t)
        return out

    def lift_array(
        self, x: ArrayLike, z: ArrayLike, m: ArrayLike
    ) -> tuple[NDArray, NDArray, tuple[NDArray, NDArray, NDArray, dict[str, NDArray]]]:
        """Effective running maximum and whether the state was lifted."""
        x, z, m = _as_arrays(x, z, m)
        if np.any(x < 0) or np.any(z < 0) or np.any(m < 0):
            raise DomainError("states must be nonnegative")
        m_floor = self.consts.m_floor
        m_eff = np.maximum(m, m_floor)
        lifted = m < m_floor
        thr = self.thresholds_array(z, m_eff)
        above = x > thr[2] + TIE_TOL * (1.0 + x)
        if np.any(above):
            m_eff = m_eff.copy()
            m_eff[above] = self.m_star_array(x[above], z[above])
            lifted = lifted | above
            thr = self.thresholds_array(z, m_eff)
        return m_eff, lifted, thr

    def _solve_y(
        self, x: NDArray, z: NDArray, co: dict[str, NDArray], piece: NDArray
    ) -> NDArray:
        cst = self.consts
        beta = self.params.beta
        y1 = np.where(np.isfinite(co["y1"]) & (co["y1"] < beta), co["y1"], beta)
        lo = np.log(np.choose(piece, [y1, co["y2"], co["ys"]]))
        hi = np.log(np.choose(piece, [np.full(x.shape, beta), y1, co["y2"]]))
        u = 0.5 * (lo + hi)
        done = hi <= lo
        for _ in range(_MAX_IT):
            y = np.exp(u)
            ev = evaluate_arrays(cst, y, z, co["m"], co, piece)
            g = -ev["dy"] - x
            lo = np.where(g > 0.0, u, lo)
            hi = np.where(g < 0.0, u, hi)
            cand = u + g / (y * ev["dyy"])
            bad = ~np.isfinite(cand) | (cand < lo) | (cand > hi)
            cand = np.where(bad, 0.5 * (lo + hi), cand)
            conv = (np.abs(cand - u) <= 1e-14 * (1.0 + np.abs(u))) | (g == 0.0)
            conv |= hi - lo <= 1e-14 * (1.0 + np.abs(u))
            u = np.where(done, u, cand)
            done |= conv
            if np.all(done):
                break
        if not np.all(done):
            raise ConvergenceError("dual-state Newton iteration did not converge")
        return np.exp(u)

    def evaluate_array(self, x: ArrayLike, z: ArrayLike, m: ArrayLike) -> dict[str, NDArray]:
        """Full primal evaluation on arrays of states."""
        x, z, m = _as_arrays(x, z, m)
        m_eff, lifted, (F1, F2, F3, co) = self.lift_array(x, z, m)
        cst, pr = self.consts, self.params
        piece = np.where(x < F1, TOP, np.where(x < F2, MID, BOTTOM))
        y = np.where(x <= 0.0, pr.beta, self._solve_y(x, z, co, piece))
        ev = evaluate_arrays(cst, y, z, m_eff, co, piece, with_dm=True)
        c = np.choose(piece, [pr.lam * m_eff, y ** (1.0 / (pr.p - 1.0)), m_eff])
        g1 = y * ev["dyy"]
        g2 = (1.0 - ev["dyz"]) * z * pr.sigma_Z
        theta = np.outer(g1, cst.cov_inv_mu) + np.outer(g2, cst.cov_inv_sigma_gamma)
        on_f3 = np.abs(x - F3) <= TIE_TOL * (1.0 + x)
        region = np.where(
            lifted,
            Region.R5.value,
            np.where(on_f3, Region.R4.value, np.choose(piece, [1, 2, 3])),
        )
        return {
            "x": x, "z": z, "m": m, "m_eff": m_eff, "y": y, "piece": piece,
            "v": ev["value"] + x * y, "v_hat": ev["value"], "c": c, "theta": theta,
            "g1": g1, "g2": g2, "region": region, "F1": F1, "F2": F2, "F3": F3,
            "v_hat_yy": ev["dyy"], "psi": ev["psi"], "psi_y": ev["psi_y"],
            "v_m": ev["dm"], "v_xm": ev["dym"], "lifted": lifted,
        }  # fmt: skip

    def dual_state_array(self, x: ArrayLike, z: ArrayLike, m: ArrayLike) -> NDArray[np.float64]:
        """f(x, z, m) for states already inside the no-jump region."""
        x, z, m = _as_arrays(x, z, m)
        F1, F2, F3, co = self.thresholds_array(z, m)
        if np.any(x > F3 + TIE_TOL * (1.0 + x)) or np.any(x < 0):
            raise OutOfRegion("dual state needs 0 <= x <= F3(z, m)")
        piece = np.where(x < F1, TOP, np.where(x < F2, MID, BOTTOM))
        return np.where(x <= 0.0, self.params.beta, self._solve_y(x, z, co, piece))

    # ------------------------------------------------------------------
    # scalar API
    def thresholds(self, z: float, m: float) -> tuple[float, float, float]:
        F1, F2, F3, _ = self.thresholds_array(z, m)
        return float(F1[0]), float(F2[0]), float(F3[0])

    def m_star(self, x: float, z: float) -> float:
        return float(self.m_star_array(x, z)[0])

    def dual_state(self, x: float, z: float, m: float) -> float:
        return float(self.dual_state_array(x, z, m)[0])

    def evaluate(self, x: float, z: float, m: float) -> PolicyPoint:
        r = self.evaluate_array(x, z, m)
        return PolicyPoint(
            x=float(x),
            z=float(z),
            m=float(m),
            y=float(r["y"][0]),
            v=float(r["v"][0]),
            theta=r["theta"][0].copy(),
            c=float(r["c"][0]),
            region=Region(int(r["region"][0])),
            m_eff=float(r["m_eff"][0]),
        )

    def value(self, x: float, z: float, m: float) -> float:
        return float(self.evaluate_array(x, z, m)["v"][0])

    def consumption(self, x: float, z: float, m: float) -> float:
        return float(self.evaluate_array(x, z, m)["c"][0])

    def portfolio(self, x: float, z: float, m: float) -> NDArray[np.float64]:
        return self.evaluate_array(x, z, m)["theta"][0].copy()

    def region_classify(self, x: float, z: float, m: float) -> Region:
        return Region(int(self.evaluate_array(x, z, m)["region"][0]))

    def original_value(self, v0: float, z: float, m: float) -> float:
        """Value of the original problem at initial wealth v0."""
        beta = self.params.beta
        return self.value(max(v0 - z, 0.0), z, m) - beta * max(z - v0, 0.0)

    def hjb_residual_array(self, x: ArrayLike, z: ArrayLike, m: ArrayLike) -> NDArray:
        """Normalized primal HJB residual at states inside the no-jump region."""
        x, z, m = _as_arrays(x, z, m)
        if np.any(m < self.consts.m_floor * (1.0 - 1e-13)):
            raise OutOfRegion("HJB residual needs m >= m_floor")
        r = self.evaluate_array(x, z, m)
        if np.any(r["lifted"]):
            raise OutOfRegion("HJB residual needs x <= F3(z, m)")
        cst, pr = self.consts, self.params
        y, vyy, z = r["y"], r["v_hat_yy"], r["z"]
        v_x = y
        v_xx = -1.0 / vyy
        v_xz = -r["psi_y"] / vyy
        v_z = r["psi"]
        v_zz = -r["psi_y"] ** 2 / vyy
        res = (
            -cst.alpha * v_x**2 / v_xx
            + 0.5 * pr.sigma_Z**2 * z**2 * (v_zz - v_xz**2 / v_xx)
            - cst.eta * z * v_x * v_xz / v_xx
            + (cst.eta - pr.mu_Z) * z * v_x
            + pr.mu_Z * z * v_z
            + phi_conj(cst, y, r["m_eff"])
            - pr.rho * r["v"]
        )
        return np.abs(res) / (1.0 + np.abs(r["v"]))

    def hjb_residual(self, x: float, z: float, m: float) -> float:
        return float(self.hjb_residual_array(x, z, m)[0])
