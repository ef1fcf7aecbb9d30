import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drawdown_tracking import DomainError, DualSolution
from drawdown_tracking.dual import BOTTOM, MID, TOP, Piece, Provenance, evaluate_arrays
from drawdown_tracking.presets import FIG2


def _grid(dual, n_y=30, zs=(0.0, 1.0, 5.0, 20.0, 100.0), n_m=5):
    c = dual.consts
    top = c.m_kink * 300 if math.isfinite(c.m_kink) else 1e3
    ms = np.geomspace(c.m_floor * 1.001, top, n_m)
    Y, Z, M = [], [], []
    for m in ms:
        ys = np.geomspace(dual.boundary.y_star(m), c.params.beta, n_y)
        for z in zs:
            Y.append(ys)
            Z.append(np.full(n_y, z))
            M.append(np.full(n_y, m))
    return np.concatenate(Y), np.concatenate(Z), np.concatenate(M)


# ---------------------------------------------------------------- psi / Phi


def test_psi_identities(fig2_dual):
    c = fig2_dual.consts
    v, d1, _ = fig2_dual.psi(2.0)
    assert d1 == pytest.approx(0.0, abs=1e-15)
    assert v == pytest.approx(2.0 * (1 - 1 / c.kappa), rel=1e-13)


def test_psi_solves_its_ode(fig2_dual):
    c = fig2_dual.consts
    pr = c.params
    for y in np.geomspace(1e-4, 2.0, 20):
        v, d1, d2 = fig2_dual.psi(y)
        r = (pr.mu_Z - pr.rho) * v + (pr.rho - c.eta) * y * d1 + c.alpha * y * y * d2 - (pr.mu_Z - c.eta) * y
        assert abs(r) <= 1e-10 * (1 + abs(v) + y)


def test_psi_domain(fig2_dual):
    with pytest.raises(DomainError):
        fig2_dual.psi(2.5)
    with pytest.raises(DomainError):
        fig2_dual.psi(0.0)


def test_phi_branches_meet_at_kinks(fig2_dual):
    c = fig2_dual.consts
    p, lam = c.params.p, c.params.lam
    m = 3 * c.m_kink
    for y in ((lam * m) ** (p - 1), m ** (p - 1)):
        a = fig2_dual.phi(y * (1 + 1e-13), m)
        b = fig2_dual.phi(y * (1 - 1e-13), m)
        assert abs(a - b) <= 1e-11 * abs(a)


def test_phi_is_grid_supremum(fig2_dual):
    rng = np.random.default_rng(5)
    pr = fig2_dual.params
    for _ in range(30):
        m = math.exp(rng.uniform(math.log(fig2_dual.consts.m_floor), math.log(500.0)))
        y = math.exp(rng.uniform(math.log(1e-4), math.log(2.0)))
        c = np.linspace(pr.lam * m, m, 10_000)
        brute = np.max(c**pr.p / pr.p - c * y)
        assert fig2_dual.phi(y, m) == pytest.approx(brute, rel=1e-6, abs=1e-9)


# ---------------------------------------------------------------- C6


def test_c6_no_drawdown_closed_form():
    d = DualSolution(FIG2.replace(lam=0.0))
    c = d.consts
    pr = c.params
    a, rho, p, beta = c.alpha, pr.rho, pr.p, pr.beta
    for m in (c.m_floor, 3.0, 40.0, 1e3):
        exact = a**3 * beta ** (-rho / a) * m ** ((a * p - (1 - p) * rho) / a) / (
            rho * (a + rho) ** 2 * (rho * (1 - p) - a * p)
        )
        assert d.coefficient_C6(m, method="quad") == pytest.approx(exact, rel=1e-8)
        assert d.coefficient_C6(m) == pytest.approx(exact, rel=1e-12)


def test_c6_positive_and_bounded(fig2_dual):
    c = fig2_dual.consts
    pr = c.params
    for m in np.geomspace(c.m_floor, 1e4, 50):
        c6 = fig2_dual.coefficient_C6(m)
        assert c6 > 0
        assert c6 <= fig2_dual.c6_upper_bound(m) * (1 + 1e-12)
        printed = pr.beta ** (-c.s) * m**c.e / (pr.rho * c.ar * c.D)
        assert c6 <= printed


def test_c6_table_matches_quadrature(fig2_dual):
    c = fig2_dual.consts
    for m in c.m_kink * np.array([1.0, 1.3, 7.0, 300.0]):
        assert fig2_dual.coefficient_C6(m) == pytest.approx(
            fig2_dual.coefficient_C6(m, method="quad"), rel=1e-9
        )


def test_c6_derivative_is_minus_integrand(fig2_dual):
    m = 4 * fig2_dual.consts.m_kink
    h = 1e-5 * m
    fd = (fig2_dual.coefficient_C6(m + h) - fig2_dual.coefficient_C6(m - h)) / (2 * h)
    assert fd == pytest.approx(-fig2_dual.c6_integrand(m), rel=1e-6)


def test_c6_domain(fig2_dual):
    with pytest.raises(DomainError):
        fig2_dual.coefficient_C6(0.1)
    with pytest.raises(ValueError):
        fig2_dual.coefficient_C6(3.0, method="simpson")


# ---------------------------------------------------------------- coefficients


def test_no_drawdown_c3_c4():
    d = DualSolution(FIG2.replace(lam=0.0))
    c = d.consts
    pr = c.params
    co = d.coefficients(7.0)
    c3 = (1 - pr.p) ** 2 * pr.beta ** (pr.p / (pr.p - 1)) / (pr.rho * (1 - pr.p) - c.alpha * pr.p)
    assert co.C3 == pytest.approx(c3, rel=1e-12)
    assert abs(co.C4) <= 1e-12 * abs(c3)
    assert not co.has_top and math.isnan(co.C1)


def test_neumann_coefficient_identity(fig2_dual):
    c = fig2_dual.consts
    pr = c.params
    for m in c.m_kink * np.array([1.0001, 2.0, 50.0, 1e4]):
        co = fig2_dual.coefficients(m)
        r = -co.C1 + pr.rho / c.alpha * co.C2 - pr.lam * m * pr.beta / c.ar
        assert abs(r) / (1 + abs(co.C1)) <= 1e-8


def test_printed_formulas_agree_with_system(fig2_dual):
    c = fig2_dual.consts
    for m in (c.m_floor * 1.5, c.m_kink * 0.9, c.m_kink * 1.1, c.m_kink * 20):
        co = fig2_dual.coefficients(m)
        printed = fig2_dual.printed_coefficients(m)
        for k in ("C1", "C2", "C3", "C4", "C5"):
            a, b = getattr(co, k), printed[k]
            if math.isnan(a):
                assert math.isnan(b)
                continue
            assert abs(a - b) <= 1e-8 * (1 + abs(a)), k
    assert co.provenance["C1"] is Provenance.LinearSystem
    assert co.provenance["C6"] is Provenance.PrintedFormula
    assert co.discrepancy <= 1e-10


def test_coefficients_cached(fig2_dual):
    m = 3.3 * fig2_dual.consts.m_kink
    assert fig2_dual.coefficients(m) is fig2_dual.coefficients(m)


def test_coefficients_no_consistency_warning(fig2_dual):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fig2_dual.coefficients(11.7)


# ---------------------------------------------------------------- v_hat


def test_pde_residual_grid(fig2_dual, fig3_dual, fm_dual):
    for d in (fig2_dual, fig3_dual, fm_dual):
        y, z, m = _grid(d)
        assert d.pde_residual_arrays(y, z, m).max() <= 1e-8


def test_pde_residual_scalar(fig2_dual):
    assert fig2_dual.dual_pde_residual(0.3, 4.0, 12.0) <= 1e-12


def test_pde_residual_no_drawdown():
    d = DualSolution(FIG2.replace(lam=0.0))
    y, z, m = _grid(d, n_m=3)
    assert d.pde_residual_arrays(y, z, m).max() <= 1e-10


def test_neumann_and_convexity(fig2_dual):
    y, z, m = _grid(fig2_dual, n_y=20)
    co = fig2_dual.coefficients_batch(m)
    ev = evaluate_arrays(fig2_dual.consts, y, z, m, co)
    assert np.all(ev["dyy"] > 0)
    assert np.all(ev["dy"] <= 1e-12 * (1 + np.abs(ev["value"])))
    for mm in (1.0, 5.0, 100.0):
        assert abs(fig2_dual.dual_value(2.0, 3.0, mm).dy) <= 1e-13


def test_smooth_fit_across_pieces(fig2_dual):
    c = fig2_dual.consts
    for m in c.m_kink * np.array([1.5, 10.0, 1e3]):
        co = fig2_dual.coefficients(m)
        for y, up, lo in ((co.y1, Piece.PieceTop, Piece.PieceMid), (co.y2, Piece.PieceMid, Piece.PieceBottom)):
            a = fig2_dual.dual_value(y, 7.0, m, piece=up)
            b = fig2_dual.dual_value(y, 7.0, m, piece=lo)
            assert abs(a.value - b.value) <= 1e-8 * (1 + abs(a.value))
            assert abs(a.dy - b.dy) <= 1e-8 * (1 + abs(a.dy))
            assert fig2_dual.dual_pde_residual(y, 7.0, m) <= 1e-12


def test_super_contact(fig2_dual):
    c = fig2_dual.consts
    for m in (c.m_floor * 2, c.m_kink * 1.2, c.m_kink * 40):
        ys = fig2_dual.boundary.y_star(m)
        ev = fig2_dual.dual_value(ys, 5.0, m)
        assert abs(ev.dm) <= 1e-10 * (1 + abs(ev.value))
        assert abs(ev.dym) <= 1e-10 * (1 + abs(ev.dy))
        h = 1e-5 * m
        up = fig2_dual.dual_value(ys, 5.0, m + h, piece=Piece.PieceBottom)
        dn = fig2_dual.dual_value(ys, 5.0, m - h, piece=Piece.PieceBottom)
        assert m * abs(up.value - dn.value) / (2 * h) <= 1e-6 * (1 + abs(ev.value))
        assert m * ys * abs(up.dy - dn.dy) / (2 * h) <= 1e-6 * (1 + abs(ys * ev.dy))


def test_gradients_match_finite_differences(fig2_dual):
    c = fig2_dual.consts
    for y, z, m in ((1.5, 3.0, 9.0), (0.2, 0.0, 2.0), (0.01, 50.0, 40.0), (1e-3, 10.0, 900.0)):
        m = max(m, fig2_dual.boundary.m_star_of_y(y) * 1.01)
        ev = fig2_dual.dual_value(y, z, m)
        hy = 1e-5 * y
        up = fig2_dual.dual_value(y + hy, z, m, piece=ev.region)
        dn = fig2_dual.dual_value(y - hy, z, m, piece=ev.region)
        assert (up.value - dn.value) / (2 * hy) == pytest.approx(ev.dy, rel=1e-6, abs=1e-9)
        assert (up.dy - dn.dy) / (2 * hy) == pytest.approx(ev.dyy, rel=1e-6)
        hz = 1e-3
        zu = fig2_dual.dual_value(y, z + hz, m)
        assert (zu.dy - ev.dy) / hz == pytest.approx(ev.dyz, rel=1e-8, abs=1e-12)
        hm = 1e-5 * m
        mu = fig2_dual.dual_value(y, z, m + hm, piece=ev.region)
        md = fig2_dual.dual_value(y, z, m - hm, piece=ev.region)
        scale = abs(ev.value) / m
        assert (mu.value - md.value) / (2 * hm) == pytest.approx(ev.dm, abs=1e-6 * scale)
        assert (mu.dy - md.dy) / (2 * hm) == pytest.approx(ev.dym, abs=1e-6 * abs(ev.dy) / m + 1e-12)


@settings(max_examples=60, deadline=None)
@given(
    t=st.floats(0.0, 1.0),
    z1=st.floats(0.0, 200.0),
    z2=st.floats(0.0, 200.0),
    lm=st.floats(-0.6, 8.0),
)
def test_separated_in_z(fig2_dual, t, z1, z2, lm):
    m = max(math.exp(lm), fig2_dual.consts.m_floor)
    ys = fig2_dual.boundary.y_star(m)
    y = ys * (2.0 / ys) ** t
    a = fig2_dual.dual_value(y, z1, m)
    b = fig2_dual.dual_value(y, z2, m)
    psi = fig2_dual.psi(y)[0]
    assert a.value - b.value == pytest.approx((z1 - z2) * psi, abs=1e-12 * (1 + abs(a.value) + abs(b.value)))
    assert a.dyy > 0


def test_dual_value_domain(fig2_dual):
    m = 10.0
    ys = fig2_dual.boundary.y_star(m)
    with pytest.raises(DomainError):
        fig2_dual.dual_value(0.5 * ys, 1.0, m)
    with pytest.raises(DomainError):
        fig2_dual.dual_value(2.5, 1.0, m)
    with pytest.raises(DomainError):
        fig2_dual.coefficients(0.1)


def test_piece_labels(fig2_dual):
    m = 10 * fig2_dual.consts.m_kink
    co = fig2_dual.coefficients(m)
    assert fig2_dual.dual_value(0.5 * (co.y1 + 2.0), 0, m).region is Piece.PieceTop
    assert fig2_dual.dual_value(math.sqrt(co.y1 * co.y2), 0, m).region is Piece.PieceMid
    assert fig2_dual.dual_value(math.sqrt(co.y2 * co.y_star), 0, m).region is Piece.PieceBottom
    assert (TOP, MID, BOTTOM) == (0, 1, 2)
