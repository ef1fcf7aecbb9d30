"""Free boundary m -> y*(m), its inverse and its tabulated form.

On [m_floor, m_kink) the boundary is m^{p-1}. Beyond m_kink it solves a
scalar equation F_m(y) = G(m). Writing u = ln(y / m^{p-1}) and
w = ln(beta (lambda m)^{1-p}) that equation is equivalent to

    phi(u) + q * chi(u) = lambda * alpha/(alpha+rho) * phi((1+s) w)

with phi(v) = e^{-v} - 1 + v, chi(u) = s/(1+s) expm1((1+s)u) - expm1(s u),
q = (m^{p-1}/beta)^{1+s} and s = rho/alpha. Both sides vanish to second
order at the kink, so this form keeps full relative accuracy there while the
literal difference F_m - G loses about half the digits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError
from .params import DerivedConstants

_SERIES_CUT = 0.1
_FACT = np.array([math.factorial(k) for k in range(20)], dtype=np.float64)


def phi_excess(v: ArrayLike) -> NDArray[np.float64]:
    """e^{-v} - 1 + v without cancellation near v = 0."""
    v = np.asarray(v, dtype=np.float64)
    out = np.expm1(-v) + v
    small = np.abs(v) < _SERIES_CUT
    if np.any(small):
        vs = v[small]
        acc = np.zeros_like(vs)
        for k in range(16, 1, -1):
            acc = acc + (-vs) ** k / _FACT[k]
        out = np.where(small, 0.0, out)
        out[small] = acc
    return out


def chi_excess(u: ArrayLike, s: float) -> NDArray[np.float64]:
    """s/(1+s) expm1((1+s)u) - expm1(s u) without cancellation near u = 0."""
    u = np.asarray(u, dtype=np.float64)
    out = (s / (1.0 + s)) * np.expm1((1.0 + s) * u) - np.expm1(s * u)
    small = np.abs((1.0 + s) * u) < _SERIES_CUT
    if np.any(small):
        us = u[small]
        acc = np.zeros_like(us)
        for k in range(18, 1, -1):
            coef = (s * (1.0 + s) ** (k - 1) - s**k) / _FACT[k]
            acc = acc + coef * us**k
        out = np.where(small, 0.0, out)
        out[small] = acc
    return out


@dataclass(frozen=True)
class BoundaryTable:
    """Samples of the root branch on a log-spaced grid (ln m, ln y*, slope)."""

    t: NDArray[np.float64]
    log_y: NDArray[np.float64]
    dlog_y: NDArray[np.float64]


class FreeBoundary:
    """The map m -> y*(m) with exact solves and a cubic Hermite table.

    The table stores ln y* against ln m together with the exact slope from
    implicit differentiation, so interpolation is fourth-order accurate.
    """

    def __init__(self, consts: DerivedConstants, nodes_per_decade: int = 512) -> None:
        self.consts = consts
        pr = consts.params
        self.p = pr.p
        self.beta = pr.beta
        self.lam = pr.lam
        self.s = consts.s
        self.m_floor = consts.m_floor
        self.m_kink = consts.m_kink
        self._target_scale = pr.lam * consts.alpha / consts.ar
        self.nodes_per_decade = int(nodes_per_decade)
        self.m_max = self._find_m_max()
        self.table = self._build_table()
        if self.table is not None:
            self._spline = CubicHermiteSpline(
                self.table.t, self.table.log_y, self.table.dlog_y, extrapolate=False
            )
        else:
            self._spline = None

    # ------------------------------------------------------------------
    # residual in the cancellation-free variable u = ln(y / m^{p-1})
    def _pieces(self, m: NDArray[np.float64]) -> tuple[NDArray, NDArray, NDArray]:
        p, beta, lam, s = self.p, self.beta, self.lam, self.s
        w = math.log(beta) + (1.0 - p) * np.log(lam * m)
        w = np.maximum(w, 0.0)
        target = self._target_scale * phi_excess((1.0 + s) * w)
        q = np.exp((1.0 + s) * ((p - 1.0) * np.log(m) - math.log(beta)))
        return w, target, q

    def _g(self, u: NDArray, q: NDArray, target: NDArray) -> NDArray:
        return phi_excess(u) + q * chi_excess(u, self.s) - target

    def _dg(self, u: NDArray, q: NDArray) -> NDArray:
        s = self.s
        return -np.expm1(-u) + q * s * np.exp(s * u) * np.expm1(u)

    def residual(self, y: ArrayLike, m: ArrayLike) -> NDArray[np.float64] | float:
        """F_m(y) - G(m) for m >= m_kink and 0 < y <= m^{p-1}.

        Strictly decreasing in y and zero at y*(m).
        """
        y_arr = np.asarray(y, dtype=np.float64)
        m_arr = np.asarray(m, dtype=np.float64)
        if self.lam == 0.0:
            raise DomainError("the root branch does not exist when lambda = 0")
        if np.any(m_arr < self.m_kink * (1.0 - 1e-14)):
            raise DomainError("boundary residual needs m >= m_kink")
        y2 = m_arr ** (self.p - 1.0)
        if np.any(y_arr <= 0.0) or np.any(y_arr > y2 * (1.0 + 1e-14)):
            raise DomainError("boundary residual needs 0 < y <= m^{p-1}")
        u = np.minimum(np.log(y_arr / y2), 0.0)
        _, target, q = self._pieces(np.broadcast_to(m_arr, u.shape).astype(np.float64))
        out = self.beta / self.consts.ar * self._g(u, q, target)
        return float(out) if out.ndim == 0 else out

    def literal_residual(self, y: float, m: float) -> float:
        """F_m(y) - G(m) transcribed term by term (cross-check only)."""
        c = self.consts
        a, r, p, beta, lam, s = c.alpha, c.params.rho, self.p, self.beta, self.lam, self.s
        ar = a + r
        e = c.e
        lhs = (
            beta * m ** (p - 1) / (ar * y)
            + beta / ar * math.log(y / beta)
            + r / ar**2 * beta ** (-s) * y ** (ar / a)
            - m ** (p - 1) / ar * beta ** (-s) * y ** s
        )
        rhs = (
            a * beta ** (-s) / ar**2 * (lam**e - 1.0) * m ** (-ar * (1 - p) / a)
            + beta * lam / ar * math.log(beta * (lam * m) ** (1 - p))
            - beta / ar * math.log(beta * m ** (1 - p))
            + lam * beta / ar
            - a * beta / ar**2
            + (1 - p) ** 2 * beta * (lam - 1) / (p * ar)
            - beta * (ar + p * a) * (lam - 1) / (p * ar**2)
            + beta * (1 - p) * (lam - 1) / ar
        )
        return lhs - rhs

    # ------------------------------------------------------------------
    def _bracket(self, target: NDArray) -> NDArray:
        # phi(u) >= target at u = -ln(2 target + 2), and chi >= 0 for u <= 0
        return -np.log(2.0 * target + 2.0)

    def _solve_u_scalar(self, m: float) -> float:
        _, target, q = self._pieces(np.array([m]))
        t0, q0 = float(target[0]), float(q[0])
        if t0 == 0.0:
            return 0.0
        lo = float(self._bracket(target)[0])

        def g(u: float) -> float:
            return float(self._g(np.array([u]), np.array([q0]), np.array([t0]))[0])

        glo = g(lo)
        if glo < 0.0:
            raise ConvergenceError(f"free-boundary bracket failed at m={m!r}")
        return brentq(g, lo, 0.0, xtol=1e-300, rtol=8.9e-16, maxiter=500)

    def _solve_u(self, m: NDArray[np.float64]) -> NDArray[np.float64]:
        """Vectorized safeguarded Newton for u(m), m >= m_kink."""
        _, target, q = self._pieces(m)
        lo = self._bracket(target)
        hi = np.zeros_like(lo)
        u = np.maximum(-np.sqrt(2.0 * target / (1.0 + q * self.s)), 0.5 * lo)
        done = target == 0.0
        u = np.where(done, 0.0, u)
        for _ in range(200):
            if np.all(done):
                break
            g = self._g(u, q, target)
            lo = np.where(g > 0.0, u, lo)
            hi = np.where(g < 0.0, u, hi)
            dg = self._dg(u, q)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = g / dg
            cand = u - step
            bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
            cand = np.where(bad, 0.5 * (lo + hi), cand)
            conv = np.abs(cand - u) <= 4e-16 * np.abs(u) + 1e-300
            conv |= (hi - lo) <= 4e-16 * np.abs(u)
            u = np.where(done, u, cand)
            done |= conv
        if not np.all(done):
            raise ConvergenceError("vectorized free-boundary solve did not converge")
        return u

    # ------------------------------------------------------------------
    def _check_m(self, m: NDArray) -> None:
        if np.any(m < self.m_floor * (1.0 - 1e-13)) or np.any(~np.isfinite(m)):
            raise DomainError(f"y* needs m >= m_floor = {self.m_floor!r}")

    def y_star(self, m: float) -> float:
        """Exact y*(m) by a bracketed scalar solve (relative error ~1e-15)."""
        m = float(m)
        self._check_m(np.array([m]))
        y2 = m ** (self.p - 1.0)
        if m < self.m_kink:
            return min(y2, self.beta) if m <= self.m_floor else y2
        return y2 * math.exp(self._solve_u_scalar(m))

    def y_star_array(self, m: ArrayLike) -> NDArray[np.float64]:
        """Vectorized exact y*(m)."""
        m = np.asarray(m, dtype=np.float64)
        self._check_m(m)
        y2 = m ** (self.p - 1.0)
        out = np.minimum(y2, self.beta)
        root = m >= self.m_kink
        if np.any(root):
            out = out.copy()
            out[root] = y2[root] * np.exp(self._solve_u(m[root]))
        return out

    def dlog_y_star(self, m: ArrayLike) -> NDArray[np.float64]:
        """d ln y* / d ln m from implicit differentiation."""
        m = np.asarray(m, dtype=np.float64)
        p, s = self.p, self.s
        out = np.full(m.shape, p - 1.0)
        root = m >= self.m_kink
        if not np.any(root):
            return out
        mr = m[root]
        u = self._solve_u(mr)
        w, _, q = self._pieces(mr)
        du = np.empty_like(u)
        at_kink = u == 0.0
        # limit at the kink follows from the quadratic leading terms
        du[at_kink] = (p - 1.0) * np.sqrt(self.lam * (1.0 + s) / (1.0 + q[at_kink] * s))
        nk = ~at_kink
        if np.any(nk):
            uu, qq, ww = u[nk], q[nk], w[nk]
            g_u = self._dg(uu, qq)
            m_g_m = -(1.0 + s) * (1.0 - p) * qq * chi_excess(uu, s) + self.lam * (
                1.0 - p
            ) * np.expm1(-(1.0 + s) * ww)
            du[nk] = -m_g_m / g_u
        out[root] = (p - 1.0) + du
        return out

    # ------------------------------------------------------------------
    def _find_m_max(self) -> float:
        """First decade point past m_kink where y* drops below 1e-10 beta."""
        start = self.m_kink if math.isfinite(self.m_kink) else self.m_floor
        target = 1e-10 * self.beta
        m = start
        for _ in range(400):
            m *= 10.0
            if not math.isfinite(m) or m > 1e250:
                return 1e250
            y = self.y_star(m)
            if y < target:
                return m
        return m

    def _build_table(self) -> BoundaryTable | None:
        if self.lam == 0.0:
            return None
        t0, t1 = math.log(self.m_kink), math.log(self.m_max)
        h = math.log(10.0) / self.nodes_per_decade
        # y* turns from the kink slope to its bulk slope over a few multiples
        # of 1/((1+s)(1-p)) in ln m; that stretch gets 16x denser nodes
        layer = min(20.0 / ((1.0 + self.s) * (1.0 - self.p)), t1 - t0)
        n_fine = max(int(math.ceil(layer / (h / 16.0))), 8)
        n_bulk = max(int(math.ceil((t1 - t0 - layer) / h)), 8)
        t = np.concatenate(
            [np.linspace(t0, t0 + layer, n_fine + 1)[:-1], np.linspace(t0 + layer, t1, n_bulk + 1)]
        )
        m = np.exp(t)
        m[0] = self.m_kink
        y = self.y_star_array(m)
        return BoundaryTable(t=t, log_y=np.log(y), dlog_y=self.dlog_y_star(m))

    def y_star_interp(self, m: ArrayLike) -> NDArray[np.float64]:
        """y*(m) from the table (root branch) or the closed form (analytic branch)."""
        m = np.asarray(m, dtype=np.float64)
        self._check_m(m)
        out = np.minimum(m ** (self.p - 1.0), self.beta)
        root = m >= self.m_kink
        if np.any(root):
            if np.any(m[root] > self.m_max):
                raise DomainError("m beyond the tabulated range")
            out = out.copy()
            out[root] = np.exp(self._spline(np.log(m[root])))
        return out

    def m_star_of_y(self, y: float) -> float:
        """Inverse of y*: the m with y*(m) = y, for 0 < y <= beta."""
        y = float(y)
        if not 0.0 < y <= self.beta * (1.0 + 1e-15):
            raise DomainError("m*(y) needs 0 < y <= beta")
        y = min(y, self.beta)
        y_kink = self.m_kink ** (self.p - 1.0) if math.isfinite(self.m_kink) else 0.0
        if y > y_kink:
            return max(y ** (1.0 / (self.p - 1.0)), self.m_floor)
        target = math.log(y)

        def g(t: float) -> float:
            return math.log(self.y_star(math.exp(t))) - target

        lo = math.log(self.m_kink)
        # y* <= m^{p-1}, so m^{p-1} = y gives a point at or beyond the root
        hi = max(target / (self.p - 1.0), lo)
        step = 1.0
        while g(hi) > 0.0:
            hi += step
            step *= 2.0
            if hi > 700.0:
                raise ConvergenceError("m*(y) bracket expansion failed")
        if g(lo) <= 0.0:
            return self.m_kink
        return math.exp(brentq(g, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=500))
