"""Explicit solution when there is no drawdown constraint (lambda = 0).

Used as an independent oracle: nothing here touches the free boundary, the
C6 integral or the smooth-fit system.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq

from .errors import DomainError
from .params import DerivedConstants, ModelParams, validate


class NoDrawdownSolution:
    """Value, dual state and feedback controls for lambda = 0."""

    def __init__(self, params: ModelParams | DerivedConstants) -> None:
        cst = params if isinstance(params, DerivedConstants) else validate(params)
        if cst.params.lam != 0.0:
            raise DomainError("closed form requires lambda = 0")
        self.consts = cst
        pr = cst.params
        self._k = (1.0 - pr.p) ** 2 / cst.D

    def _x_of_y(self, y: float, z: float) -> float:
        pr, c = self.consts.params, self.consts
        inv = 1.0 / (pr.p - 1.0)
        return self._k * (y**inv - pr.beta**inv) + z * ((y / pr.beta) ** (c.kappa - 1.0) - 1.0)

    def dual_state(self, x: float, z: float) -> float:
        """Unique y in (0, beta] whose wealth threshold equals x."""
        if x < 0 or z < 0:
            raise DomainError("x and z must be nonnegative")
        beta = self.consts.params.beta
        if x == 0.0:
            return beta

        def g(u: float) -> float:
            return self._x_of_y(math.exp(u), z) - x

        hi = math.log(beta)
        lo = hi - 1.0
        while g(lo) < 0.0:
            lo = hi - 2.0 * (hi - lo)
        return math.exp(brentq(g, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=500))

    def value(self, x: float, z: float) -> float:
        pr, c = self.consts.params, self.consts
        y = self.dual_state(x, z)
        lin = self._k * pr.beta ** (1.0 / (pr.p - 1.0)) * y
        powr = (1.0 - pr.p) ** 3 / (pr.p * c.D) * y ** (pr.p / (pr.p - 1.0))
        psi = y - pr.beta ** (1.0 - c.kappa) / c.kappa * y**c.kappa
        return lin + powr + x * y + z * psi

    def consumption(self, x: float, z: float) -> float:
        return self.dual_state(x, z) ** (1.0 / (self.consts.params.p - 1.0))

    def portfolio(self, x: float, z: float) -> NDArray[np.float64]:
        pr, c = self.consts.params, self.consts
        y = self.dual_state(x, z)
        ratio = (y / pr.beta) ** (c.kappa - 1.0)
        a = (1.0 - pr.p) / c.D * y ** (1.0 / (pr.p - 1.0)) + (1.0 - c.kappa) * z * ratio
        b = pr.sigma_Z * z * ratio
        return c.cov_inv_mu * a + c.cov_inv_sigma_gamma * b
