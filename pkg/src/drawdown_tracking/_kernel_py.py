"""Pure numpy simulation kernel, vectorized across paths.

Mirrors the compiled kernel step for step: per-path coefficients cached
until the running maximum moves, the dual state found by safeguarded Newton
in ln y inside the active piece, and running-maximum jumps found by Newton in
ln m on the wealth threshold F3.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from . import tables as tb

TOP, MID, BOTTOM = 0, 1, 2
_MAX_IT = 100


def _hermite(tab: tb.SimTables, t: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    """ln y*, its t-derivative and the scaled C6 at t = ln m (root branch)."""
    n = tab.t.size
    i = np.clip(np.searchsorted(tab.t, t, side="right") - 1, 0, n - 2)
    t0, t1 = tab.t[i], tab.t[i + 1]
    h = t1 - t0
    u = (t - t0) / h
    u2, u3 = u * u, u * u * u
    h00 = 2 * u3 - 3 * u2 + 1
    h10 = u3 - 2 * u2 + u
    h01 = -2 * u3 + 3 * u2
    h11 = u3 - u2
    d00 = (6 * u2 - 6 * u) / h
    d10 = 3 * u2 - 4 * u + 1
    d01 = (-6 * u2 + 6 * u) / h
    d11 = 3 * u2 - 2 * u
    y0, y1, m0, m1 = tab.lys[i], tab.lys[i + 1], tab.dlys[i], tab.dlys[i + 1]
    lys = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
    dlys = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1
    c0, c1, s0, s1 = tab.c6s[i], tab.c6s[i + 1], tab.dc6s[i], tab.dc6s[i + 1]
    c6 = h00 * c0 + h10 * h * s0 + h01 * c1 + h11 * h * s1
    return lys, dlys, c6


def coefficients(tab: tb.SimTables, m: NDArray) -> dict[str, NDArray]:
    """Scaled coefficients and threshold pieces at running maximum m."""
    c = tab.const
    p, beta, lam, s, J, e = c[tb.P], c[tb.BETA], c[tb.LAM], c[tb.S], c[tb.J], c[tb.E]
    ar, alpha, kappa, D = c[tb.AR], c[tb.ALPHA], c[tb.KAPPA], c[tb.D]
    m_kink = c[tb.M_KINK]
    lm = np.log(m)
    upper = m >= m_kink
    y2 = np.exp((p - 1.0) * lm)
    ys = np.minimum(y2, beta)
    dlys = np.full(m.shape, p - 1.0)
    if lam > 0.0:
        mk = m_kink
        with np.errstate(over="ignore", invalid="ignore"):
            c6 = J * np.exp(p * lm) * (1.0 - np.exp(e * (np.log(mk) - lm))) + np.exp(
                (1.0 - p) * s * (lm - np.log(mk))
            ) * c[tb.C6_KINK]
    else:
        c6 = J * np.exp(p * lm)
    if np.any(upper):
        if np.any(m[upper] > c[tb.M_MAX]):
            raise OverflowError("running maximum beyond the tabulated range")
        lu, du, cu = _hermite(tab, lm[upper])
        ys = ys.copy()
        ys[upper] = np.exp(lu)
        dlys[upper] = du
        c6 = np.where(upper, 0.0, c6)
        c6[upper] = cu
    lam_m = np.where(upper, lam * m, 1.0)
    y1 = np.where(upper, np.exp((p - 1.0) * np.log(lam_m)), np.inf)
    k0 = p - 2.0 - alpha / ar
    L_m = np.log(beta) + (1.0 - p) * lm
    dA2 = -m / ar * (L_m + k0)
    bm_e = np.exp(-s * np.log(beta) + e * lm)
    L_c = np.log(beta) + (1.0 - p) * np.log(lam_m)
    dA1 = np.where(upper, lam * m / ar * (L_c + k0), 0.0)
    lam_e = lam**e if lam > 0.0 else 0.0
    G = np.where(
        upper,
        -beta * (dA1 + dA2) + s * J * (lam_e - 1.0) * bm_e - beta * lam * m / ar,
        -beta * dA2 - s * J * bm_e + (1.0 - p) ** 2 * beta ** (p / (p - 1.0)) / D,
    )
    b_b = c6
    b_m = b_b * (ys / y2) ** s - J * np.exp(p * lm)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        b_t = np.where(upper, b_m * (y2 / np.where(upper, y1, 1.0)) ** s + J * lam_m**p, 0.0)
    a_b = (s * b_b * (ys / beta) ** s + G) / beta
    a_m = a_b + dA2
    a_t = a_m + dA1
    co = {
        "m": m, "ys": ys, "dlys": dlys, "y1": y1, "y2": y2,
        "a_t": a_t, "b_t": b_t, "a_m": a_m, "b_m": b_m, "a_b": a_b, "b_b": b_b,
    }  # fmt: skip
    # thresholds F_i = A_i + z B_i and the ln m slope pieces of F3
    inv = 1.0 / (p - 1.0)
    dp2 = -((1.0 - p) ** 2) / D
    ly_top = a_t - s * b_t / np.where(upper, y1, 1.0) + lam * m * (np.log(y1 / beta) + 1.0) / ar
    co["A1"] = np.where(upper, -ly_top, 0.0)
    co["B1"] = np.where(upper, (np.where(upper, y1, beta) / beta) ** (kappa - 1.0) - 1.0, 0.0)
    co["A2"] = -(a_m - s * b_m / y2 + dp2 * y2**inv)
    co["B2"] = (y2 / beta) ** (kappa - 1.0) - 1.0
    co["A3"] = -(a_b - s * b_b / ys + m * (np.log(ys / beta) + 1.0) / ar)
    co["B3"] = (ys / beta) ** (kappa - 1.0) - 1.0
    lyy3 = s * (s + 1.0) * b_b / (ys * ys) + m / (ar * ys)
    co["dA3"] = -lyy3 * ys * dlys
    co["dB3"] = (kappa - 1.0) * (co["B3"] + 1.0) * dlys
    return co


def take(co: dict[str, NDArray], idx: NDArray) -> dict[str, NDArray]:
    return {k: v[idx] for k, v in co.items()}


def put(co: dict[str, NDArray], idx: NDArray, new: dict[str, NDArray]) -> None:
    for k, v in new.items():
        co[k][idx] = v


def vy_terms(
    tab: tb.SimTables, co: dict[str, NDArray], piece: NDArray, y: NDArray, z: NDArray
) -> tuple[NDArray, NDArray]:
    """v_hat_y and v_hat_yy inside the given piece."""
    c = tab.const
    p, beta, lam, s, ar, kappa, D = (
        c[tb.P], c[tb.BETA], c[tb.LAM], c[tb.S], c[tb.AR], c[tb.KAPPA], c[tb.D],
    )  # fmt: skip
    m = co["m"]
    a = np.choose(piece, [co["a_t"], co["a_m"], co["a_b"]])
    b = np.choose(piece, [co["b_t"], co["b_m"], co["b_b"]])
    r = np.choose(piece, [np.where(np.isfinite(co["y1"]), co["y1"], 1.0), co["y2"], co["ys"]])
    pw = b * (r / y) ** s
    cc = np.where(piece == TOP, lam * m, m)
    lny = np.log(y / beta)
    yinv = y ** (1.0 / (p - 1.0))
    mid = piece == MID
    dP = np.where(mid, -((1.0 - p) ** 2) / D * yinv, cc * (lny + 1.0) / ar)
    ddP = np.where(mid, (1.0 - p) / D * yinv / y, cc / (ar * y))
    ratio = (y / beta) ** (kappa - 1.0)
    vy = a - s * pw / y + dP + z * (1.0 - ratio)
    vyy = s * (s + 1.0) * pw / (y * y) + ddP + z * (1.0 - kappa) * ratio / y
    return vy, vyy


def solve_y(
    tab: tb.SimTables,
    co: dict[str, NDArray],
    x: NDArray,
    z: NDArray,
    y0: NDArray | None = None,
) -> tuple[NDArray, NDArray]:
    """Dual state y with -v_hat_y(y) = x, assuming x <= F3."""
    beta = tab.const[tb.BETA]
    F1 = co["A1"] + z * co["B1"]
    F2 = co["A2"] + z * co["B2"]
    piece = np.where(x < F1, TOP, np.where(x < F2, MID, BOTTOM))
    y1f = np.where(np.isfinite(co["y1"]), co["y1"], beta)
    lo = np.log(np.choose(piece, [y1f, co["y2"], co["ys"]]))
    hi = np.log(np.choose(piece, [np.full(x.shape, beta), y1f, co["y2"]]))
    u = 0.5 * (lo + hi) if y0 is None else np.clip(np.log(y0), lo, hi)
    done = x <= 0.0
    u = np.where(done, np.log(beta), u)
    for _ in range(_MAX_IT):
        if np.all(done):
            break
        y = np.exp(u)
        vy, vyy = vy_terms(tab, co, piece, y, z)
        g = -vy - x
        lo = np.where(g > 0.0, u, lo)
        hi = np.where(g < 0.0, u, hi)
        cand = u + g / (y * vyy)
        bad = ~np.isfinite(cand) | (cand < lo) | (cand > hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        conv = (np.abs(cand - u) <= 1e-14 * (1.0 + np.abs(u))) | (hi - lo <= 1e-14 * (1.0 + np.abs(u)))
        u = np.where(done, u, cand)
        done |= conv
    return np.exp(u), piece


def solve_mstar(tab: tb.SimTables, x: NDArray, z: NDArray, m_lo: NDArray) -> NDArray:
    """Smallest m >= m_lo with F3(z, m) >= x, by safeguarded Newton in ln m."""
    lo = np.log(m_lo)
    hi = lo + 0.5
    # expand until F3(hi) >= x
    for _ in range(200):
        co = coefficients(tab, np.exp(hi))
        short = co["A3"] + z * co["B3"] < x
        if not np.any(short):
            break
        new_hi = np.where(short, hi + 2.0 * (hi - lo) + 0.5, hi)
        lo = np.where(short, hi, lo)
        hi = new_hi
    t = hi.copy()
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(_MAX_IT):
        co = coefficients(tab, np.exp(t))
        g = co["A3"] + z * co["B3"] - x
        dg = co["dA3"] + z * co["dB3"]
        lo = np.where(g < 0.0, t, lo)
        hi = np.where(g >= 0.0, t, hi)
        cand = t - g / dg
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        conv = np.abs(cand - t) <= 1e-14 * (1.0 + np.abs(t))
        t = np.where(done, t, cand)
        done |= conv
        if np.all(done):
            break
    return np.exp(t)


def run_paths(
    tab: tb.SimTables,
    xi_mu: NDArray,
    xi_gam: NDArray,
    x0: float,
    z0: float,
    m0: float,
    dt: float,
    rec: dict[str, NDArray] | None = None,
) -> tuple[NDArray, NDArray, int]:
    """Simulate paths (rows of ``xi_*``) under the optimal feedback.

    Returns per-path discounted utility, discounted injection and a status
    (0 ok, 1 state blow-up). ``rec`` arrays of shape (n, K+1) receive X, Z,
    M, Y, C, G1, G2 and shape (n, K) receives dL.
    """
    c = tab.const
    p, beta, lam, rho = c[tb.P], c[tb.BETA], c[tb.LAM], c[tb.RHO]
    alpha, kappa, sZ, muZ, zeta = c[tb.ALPHA], c[tb.KAPPA], c[tb.SIGMA_Z], c[tb.MU_Z], c[tb.ZETA]
    n, K = xi_mu.shape
    X = np.full(n, x0)
    Z = np.full(n, z0)
    M = np.full(n, m0)
    co = coefficients(tab, M)
    y = None
    util = np.zeros(n)
    inj = np.zeros(n)
    w_u = -np.expm1(-rho * dt) / rho
    zdrift = (muZ - 0.5 * sZ * sZ) * dt
    status = 0
    for k in range(K + 1):
        y, piece = solve_y(tab, co, X, Z, y)
        ratio = (y / beta) ** (kappa - 1.0)
        cons = np.choose(piece, [lam * M, y ** (1.0 / (p - 1.0)), M])
        _, vyy = vy_terms(tab, co, piece, y, Z)
        g1 = y * vyy
        g2 = ratio * Z * sZ
        if rec is not None:
            rec["X"][:, k], rec["Z"][:, k], rec["M"][:, k] = X, Z, M
            rec["Y"][:, k], rec["C"][:, k] = y, cons
            rec["G1"][:, k], rec["G2"][:, k] = g1, g2
        if k == K:
            break
        disc = np.exp(-rho * k * dt)
        util += disc * w_u * cons**p / p
        xm, xg = xi_mu[:, k], xi_gam[:, k]
        Xt = X + (2.0 * alpha * g1 + zeta * g2 - cons - muZ * Z) * dt + g1 * xm + (g2 - sZ * Z) * xg
        dL = np.maximum(-Xt, 0.0)
        X = Xt + dL
        Z = Z * np.exp(zdrift + sZ * xg)
        inj += disc * dL
        if rec is not None:
            rec["dL"][:, k] = dL
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
            status = 1
            break
        jump = X > co["A3"] + Z * co["B3"]
        if np.any(jump):
            idx = np.nonzero(jump)[0]
            try:
                M[idx] = solve_mstar(tab, X[idx], Z[idx], M[idx])
                put(co, idx, coefficients(tab, M[idx]))
            except OverflowError:
                status = 1
                break
    return util, inj, status
