"""Flat numeric bundle handed to the simulation kernels.

Both kernel backends receive the same constant vector and the same Hermite
tables over t = ln m for ln y*(m) and the scaled C6 on the root branch; below
m_kink everything is closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .dual import DualSolution

# positions in the constant vector; the compiled kernel mirrors these
P, BETA, LAM, RHO, S, J, E, ALPHA, AR, KAPPA, SIGMA_Z, MU_Z, ZETA = range(13)
M_FLOOR, M_KINK, B0, D, C6_KINK, M_MAX = range(13, 19)
N_CONST = 19


@dataclass(frozen=True)
class SimTables:
    const: NDArray[np.float64]
    t: NDArray[np.float64]
    lys: NDArray[np.float64]
    dlys: NDArray[np.float64]
    c6s: NDArray[np.float64]
    dc6s: NDArray[np.float64]

    @classmethod
    def from_dual(cls, dual: DualSolution) -> "SimTables":
        cst = dual.consts
        pr = cst.params
        c = np.empty(N_CONST)
        c[P], c[BETA], c[LAM], c[RHO] = pr.p, pr.beta, pr.lam, pr.rho
        c[S], c[J], c[E], c[ALPHA], c[AR] = cst.s, cst.J, cst.e, cst.alpha, cst.ar
        c[KAPPA], c[SIGMA_Z], c[MU_Z], c[ZETA] = cst.kappa, pr.sigma_Z, pr.mu_Z, cst.zeta
        c[M_FLOOR], c[M_KINK], c[B0], c[D] = cst.m_floor, cst.m_kink, cst.B0, cst.D
        c[C6_KINK] = dual._c6_kink
        c[M_MAX] = dual.boundary.m_max
        fb = dual.boundary
        if fb.table is None:
            empty = np.zeros(2)
            return cls(c, empty, empty, empty, empty, empty)
        spline = dual._c6_spline
        t = np.ascontiguousarray(fb.table.t)
        return cls(
            const=c,
            t=t,
            lys=np.ascontiguousarray(fb.table.log_y),
            dlys=np.ascontiguousarray(fb.table.dlog_y),
            c6s=np.ascontiguousarray(spline(t)),
            dc6s=np.ascontiguousarray(spline.derivative()(t)),
        )

    @property
    def has_root_branch(self) -> bool:
        return math.isfinite(self.const[M_KINK])
