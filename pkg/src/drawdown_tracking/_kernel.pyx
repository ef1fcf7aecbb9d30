# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernel; one path at a time, same algorithm as _kernel_py."""

from libc.math cimport exp, log, pow, fabs, isfinite, INFINITY

import numpy as np

from cython.parallel cimport prange
cimport openmp

cdef enum:
    TOP = 0
    MID = 1
    BOTTOM = 2
    MAX_IT = 100

# constant vector layout, see tables.py
cdef enum:
    P = 0
    BETA = 1
    LAM = 2
    RHO = 3
    S = 4
    J = 5
    E = 6
    ALPHA = 7
    AR = 8
    KAPPA = 9
    SIGMA_Z = 10
    MU_Z = 11
    ZETA = 12
    M_FLOOR = 13
    M_KINK = 14
    B0 = 15
    D = 16
    C6_KINK = 17
    M_MAX = 18


cdef struct Coef:
    double m, ys, dlys, y1, y2
    double a_t, b_t, a_m, b_m, a_b, b_b
    double A1, B1, A2, B2, A3, B3, dA3, dB3
    double l1, l2, ls
    bint upper


cdef struct Tab:
    const double* c
    const double* t
    const double* lys
    const double* dlys
    const double* c6s
    const double* dc6s
    Py_ssize_t n


cdef inline void hermite(const Tab* tb, double t, double* lys, double* dlys, double* c6) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = tb.n - 1, mid
    # last node with t_i <= t, clipped to a valid interval
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if tb.t[mid] <= t:
            lo = mid
        else:
            hi = mid
    cdef Py_ssize_t i = lo
    cdef double t0 = tb.t[i], h = tb.t[i + 1] - tb.t[i]
    cdef double u = (t - t0) / h
    cdef double u2 = u * u, u3 = u2 * u
    cdef double h00 = 2 * u3 - 3 * u2 + 1
    cdef double h10 = u3 - 2 * u2 + u
    cdef double h01 = -2 * u3 + 3 * u2
    cdef double h11 = u3 - u2
    lys[0] = h00 * tb.lys[i] + h10 * h * tb.dlys[i] + h01 * tb.lys[i + 1] + h11 * h * tb.dlys[i + 1]
    dlys[0] = ((6 * u2 - 6 * u) / h) * tb.lys[i] + (3 * u2 - 4 * u + 1) * tb.dlys[i] \
        + ((-6 * u2 + 6 * u) / h) * tb.lys[i + 1] + (3 * u2 - 2 * u) * tb.dlys[i + 1]
    c6[0] = h00 * tb.c6s[i] + h10 * h * tb.dc6s[i] + h01 * tb.c6s[i + 1] + h11 * h * tb.dc6s[i + 1]


cdef int coefficients(const Tab* tb, double m, Coef* co) noexcept nogil:
    cdef const double* c = tb.c
    cdef double p = c[P], beta = c[BETA], lam = c[LAM], s = c[S], Jc = c[J], e = c[E]
    cdef double ar = c[AR], alpha = c[ALPHA], kappa = c[KAPPA], Dc = c[D]
    cdef double lm = log(m)
    cdef double y2 = exp((p - 1.0) * lm)
    cdef double ys, dlys, c6, lk
    cdef bint upper = m >= c[M_KINK]
    co.upper = upper
    co.m = m
    if upper:
        if m > c[M_MAX]:
            return 1
        hermite(tb, lm, &ys, &dlys, &c6)
        ys = exp(ys)
    else:
        ys = y2 if y2 < beta else beta
        dlys = p - 1.0
        if lam > 0.0:
            lk = log(c[M_KINK])
            c6 = Jc * exp(p * lm) * (1.0 - exp(e * (lk - lm))) + exp((1.0 - p) * s * (lm - lk)) * c[C6_KINK]
        else:
            c6 = Jc * exp(p * lm)
    cdef double lam_m = lam * m if upper else 1.0
    cdef double y1 = exp((p - 1.0) * log(lam_m)) if upper else INFINITY
    cdef double k0 = p - 2.0 - alpha / ar
    cdef double L_m = log(beta) + (1.0 - p) * lm
    cdef double dA2 = -m / ar * (L_m + k0)
    cdef double bm_e = exp(-s * log(beta) + e * lm)
    cdef double dA1 = 0.0, G, L_c, lam_e
    if upper:
        L_c = log(beta) + (1.0 - p) * log(lam_m)
        dA1 = lam * m / ar * (L_c + k0)
        lam_e = pow(lam, e)
        G = -beta * (dA1 + dA2) + s * Jc * (lam_e - 1.0) * bm_e - beta * lam * m / ar
    else:
        G = -beta * dA2 - s * Jc * bm_e + (1.0 - p) * (1.0 - p) * pow(beta, p / (p - 1.0)) / Dc
    co.ys = ys
    co.dlys = dlys
    co.y1 = y1
    co.y2 = y2
    co.b_b = c6
    co.b_m = c6 * pow(ys / y2, s) - Jc * exp(p * lm)
    co.b_t = co.b_m * pow(y2 / y1, s) + Jc * pow(lam_m, p) if upper else 0.0
    co.a_b = (s * c6 * pow(ys / beta, s) + G) / beta
    co.a_m = co.a_b + dA2
    co.a_t = co.a_m + dA1
    cdef double inv = 1.0 / (p - 1.0)
    if upper:
        co.A1 = -(co.a_t - s * co.b_t / y1 + lam * m * (log(y1 / beta) + 1.0) / ar)
        co.B1 = pow(y1 / beta, kappa - 1.0) - 1.0
    else:
        co.A1 = 0.0
        co.B1 = 0.0
    co.A2 = -(co.a_m - s * co.b_m / y2 - (1.0 - p) * (1.0 - p) / Dc * pow(y2, inv))
    co.B2 = pow(y2 / beta, kappa - 1.0) - 1.0
    co.A3 = -(co.a_b - s * co.b_b / ys + m * (log(ys / beta) + 1.0) / ar)
    co.B3 = pow(ys / beta, kappa - 1.0) - 1.0
    cdef double lyy3 = s * (s + 1.0) * co.b_b / (ys * ys) + m / (ar * ys)
    co.dA3 = -lyy3 * ys * dlys
    co.dB3 = (kappa - 1.0) * (co.B3 + 1.0) * dlys
    co.l1 = log(y1) if upper else 0.0
    co.l2 = (p - 1.0) * lm
    co.ls = log(ys)
    return 0


cdef inline void vy_terms(const Tab* tb, const Coef* co, int piece, double u, double z,
                          double* vy, double* vyy) noexcept nogil:
    # everything as exponentials of u = ln y to avoid pow and log calls
    cdef const double* c = tb.c
    cdef double p = c[P], s = c[S], ar = c[AR], kappa = c[KAPPA], Dc = c[D]
    cdef double lb = log(c[BETA])
    cdef double a, b, lr, cc, dP, ddP, yinv
    cdef double y = exp(u)
    if piece == TOP:
        a = co.a_t; b = co.b_t; lr = co.l1; cc = c[LAM] * co.m
    elif piece == MID:
        a = co.a_m; b = co.b_m; lr = co.l2; cc = 0.0
    else:
        a = co.a_b; b = co.b_b; lr = co.ls; cc = co.m
    cdef double pw = b * exp(s * (lr - u))
    if piece == MID:
        yinv = exp(u / (p - 1.0))
        dP = -(1.0 - p) * (1.0 - p) / Dc * yinv
        ddP = (1.0 - p) / Dc * yinv / y
    else:
        dP = cc * (u - lb + 1.0) / ar
        ddP = cc / (ar * y)
    cdef double ratio = exp((kappa - 1.0) * (u - lb))
    vy[0] = a - s * pw / y + dP + z * (1.0 - ratio)
    vyy[0] = s * (s + 1.0) * pw / (y * y) + ddP + z * (1.0 - kappa) * ratio / y


cdef double solve_y(const Tab* tb, const Coef* co, double x, double z, double y0,
                    int* piece_out) noexcept nogil:
    cdef double beta = tb.c[BETA]
    cdef double F1 = co.A1 + z * co.B1, F2 = co.A2 + z * co.B2
    cdef int piece
    cdef double lo, hi, u, y, vy, vyy, g, cand
    cdef double lb = log(beta)
    cdef double l1f = co.l1 if co.upper else lb
    if x < F1:
        piece = TOP; lo = l1f; hi = lb
    elif x < F2:
        piece = MID; lo = co.l2; hi = l1f
    else:
        piece = BOTTOM; lo = co.ls; hi = co.l2
    piece_out[0] = piece
    if x <= 0.0:
        return beta
    if y0 > 0.0:
        u = log(y0)
        if u < lo:
            u = lo
        if u > hi:
            u = hi
    else:
        u = 0.5 * (lo + hi)
    cdef int it
    for it in range(MAX_IT):
        y = exp(u)
        vy_terms(tb, co, piece, u, z, &vy, &vyy)
        g = -vy - x
        if g > 0.0:
            lo = u
        elif g < 0.0:
            hi = u
        cand = u + g / (y * vyy)
        if not isfinite(cand) or cand < lo or cand > hi:
            cand = 0.5 * (lo + hi)
        if fabs(cand - u) <= 1e-14 * (1.0 + fabs(u)) or hi - lo <= 1e-14 * (1.0 + fabs(u)):
            u = cand
            break
        u = cand
    return exp(u)


cdef int solve_mstar(const Tab* tb, double x, double z, double m_lo, Coef* co) noexcept nogil:
    cdef double lo = log(m_lo), hi = lo + 0.5, new_hi, t, g, dg, cand
    cdef int it
    for it in range(200):
        if coefficients(tb, exp(hi), co):
            return 1
        if co.A3 + z * co.B3 >= x:
            break
        new_hi = hi + 2.0 * (hi - lo) + 0.5
        lo = hi
        hi = new_hi
    t = hi
    for it in range(MAX_IT):
        if coefficients(tb, exp(t), co):
            return 1
        g = co.A3 + z * co.B3 - x
        dg = co.dA3 + z * co.dB3
        if g < 0.0:
            lo = t
        else:
            hi = t
        cand = t - g / dg
        if not isfinite(cand) or cand <= lo or cand >= hi:
            cand = 0.5 * (lo + hi)
        if fabs(cand - t) <= 1e-14 * (1.0 + fabs(t)):
            t = cand
            break
        t = cand
    return coefficients(tb, exp(t), co)


cdef struct Run:
    double p, beta, lam, rho, alpha, kappa, sZ, muZ, zeta, w_u, zdrift, dt
    double x0, z0
    Py_ssize_t K
    bint record


cdef int run_one(const Tab* tb, const Run* rs, const Coef* co0, Py_ssize_t i,
                 const double[:, ::1] xi_mu, const double[:, ::1] xi_gam,
                 double* util, double* inj,
                 double[:, ::1] rX, double[:, ::1] rZ, double[:, ::1] rM, double[:, ::1] rY,
                 double[:, ::1] rC, double[:, ::1] rG1, double[:, ::1] rG2,
                 double[:, ::1] rdL) noexcept nogil:
    cdef Coef co = co0[0]
    cdef double X = rs.x0, Z = rs.z0, M = co0.m, y = -1.0
    cdef double cons, vy, vyy, g1, g2, Xt, dL, disc, xm, xg
    cdef double ut = 0.0, it = 0.0
    cdef int piece
    cdef Py_ssize_t k
    for k in range(rs.K + 1):
        y = solve_y(tb, &co, X, Z, y, &piece)
        if piece == TOP:
            cons = rs.lam * M
        elif piece == MID:
            cons = pow(y, 1.0 / (rs.p - 1.0))
        else:
            cons = M
        vy_terms(tb, &co, piece, log(y), Z, &vy, &vyy)
        g1 = y * vyy
        g2 = pow(y / rs.beta, rs.kappa - 1.0) * Z * rs.sZ
        if rs.record:
            rX[i, k] = X; rZ[i, k] = Z; rM[i, k] = M; rY[i, k] = y
            rC[i, k] = cons; rG1[i, k] = g1; rG2[i, k] = g2
        if k == rs.K:
            break
        disc = exp(-rs.rho * k * rs.dt)
        ut += disc * rs.w_u * pow(cons, rs.p) / rs.p
        xm = xi_mu[i, k]
        xg = xi_gam[i, k]
        Xt = X + (2.0 * rs.alpha * g1 + rs.zeta * g2 - cons - rs.muZ * Z) * rs.dt \
            + g1 * xm + (g2 - rs.sZ * Z) * xg
        dL = -Xt if Xt < 0.0 else 0.0
        X = Xt + dL
        Z = Z * exp(rs.zdrift + rs.sZ * xg)
        it += disc * dL
        if rs.record:
            rdL[i, k] = dL
        if not (isfinite(X) and isfinite(Z)):
            return 1
        if X > co.A3 + Z * co.B3:
            if solve_mstar(tb, X, Z, M, &co):
                return 1
            M = co.m
    util[0] = ut
    inj[0] = it
    return 0


def run_paths(tab, double[:, ::1] xi_mu, double[:, ::1] xi_gam, double x0, double z0,
              double m0, double dt, rec=None, int threads=0):
    """Compiled counterpart of ``_kernel_py.run_paths`` with the same contract.

    Paths run in parallel over ``threads`` OpenMP threads (0 = runtime
    default); each path is independent so results do not depend on it.
    """
    cdef const double[::1] cst = tab.const
    cdef const double[::1] tt = tab.t
    cdef const double[::1] tl = tab.lys
    cdef const double[::1] td = tab.dlys
    cdef const double[::1] tc = tab.c6s
    cdef const double[::1] tdc = tab.dc6s
    cdef Tab tb
    tb.c = &cst[0]
    tb.t = &tt[0]
    tb.lys = &tl[0]
    tb.dlys = &td[0]
    tb.c6s = &tc[0]
    tb.dc6s = &tdc[0]
    tb.n = tt.shape[0]
    cdef Py_ssize_t n = xi_mu.shape[0], K = xi_mu.shape[1]
    util_arr = np.zeros(n)
    inj_arr = np.zeros(n)
    stat_arr = np.zeros(n, dtype=np.intc)
    cdef double[::1] util = util_arr
    cdef double[::1] inj = inj_arr
    cdef int[::1] stat = stat_arr
    cdef double[:, ::1] rX = None, rZ = None, rM = None, rY = None
    cdef double[:, ::1] rC = None, rG1 = None, rG2 = None, rdL = None
    cdef Run rs
    rs.record = rec is not None
    if rs.record:
        rX = rec["X"]; rZ = rec["Z"]; rM = rec["M"]; rY = rec["Y"]
        rC = rec["C"]; rG1 = rec["G1"]; rG2 = rec["G2"]; rdL = rec["dL"]
    rs.p = cst[P]; rs.beta = cst[BETA]; rs.lam = cst[LAM]; rs.rho = cst[RHO]
    rs.alpha = cst[ALPHA]; rs.kappa = cst[KAPPA]; rs.sZ = cst[SIGMA_Z]; rs.muZ = cst[MU_Z]
    rs.zeta = cst[ZETA]
    rs.w_u = (1.0 - exp(-rs.rho * dt)) / rs.rho
    rs.zdrift = (rs.muZ - 0.5 * rs.sZ * rs.sZ) * dt
    rs.dt = dt
    rs.x0 = x0
    rs.z0 = z0
    rs.K = K
    cdef Coef co0
    if coefficients(&tb, m0, &co0):
        return util_arr, inj_arr, 1
    cdef Py_ssize_t i
    cdef int nt = threads if threads > 0 else openmp.omp_get_max_threads()
    for i in prange(n, nogil=True, schedule="dynamic", chunksize=8, num_threads=nt):
        stat[i] = run_one(&tb, &rs, &co0, i, xi_mu, xi_gam, &util[i], &inj[i],
                          rX, rZ, rM, rY, rC, rG1, rG2, rdL)
    return util_arr, inj_arr, int(stat_arr.max()) if n else 0
