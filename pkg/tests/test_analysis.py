from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from kborel.analysis import (ArcData, FitError, SweepRow, arc_integral, asymptotic_coefficients, difference_paths,
                             gevrey_fit, laplace_fourier, reconstruct_u)

K = 0.75
EPS = np.linspace(0.01, 0.1, 10)


def _cheb(a, b, n):
    j = np.arange(n)
    return (a + b) / 2 - (b - a) / 2 * np.cos(np.pi * j / (n - 1))


@pytest.mark.parametrize("kappa,M,logK", [(0.75, 2.0, 5.0), (0.6, 0.5, -1.0), (0.9, 3.0, 0.0)])
def test_gevrey_fit_recovers_synthetic_law(kappa, M, logK):
    rows = [(e, math.exp(logK - M / e**kappa)) for e in EPS]
    fit = gevrey_fit(rows, kappa)
    assert fit.M == pytest.approx(M, rel=1e-9)
    assert fit.log_K == pytest.approx(logK, abs=1e-8)
    assert fit.quality == pytest.approx(1.0, abs=1e-12)
    assert fit.kappa_hat == pytest.approx(kappa, abs=5e-4)


def test_gevrey_fit_drops_rows_at_noise_floor():
    rows = [(e, math.exp(5 - 2 / e**K), 1e-30) for e in EPS]
    rows[:3] = [(e, 1e-29, 1e-30) for e, *_ in rows[:3]]
    fit = gevrey_fit(rows, K)
    assert fit.n_used == 7
    assert fit.M == pytest.approx(2.0, rel=1e-9)


def test_gevrey_fit_needs_enough_rows():
    rows = [(e, 1e-20, 1e-20) for e in EPS]
    with pytest.raises(FitError, match="noise floor"):
        gevrey_fit(rows, K)
    with pytest.raises(FitError, match="need 6"):
        gevrey_fit([(e, math.exp(-1 / e**K)) for e in EPS[:4]], K)


def test_asymptotic_coefficients_of_polynomial():
    eps = 0.05 * np.exp(1j * np.linspace(0, 2 * np.pi, 16, endpoint=False))
    vals = 1 + 2 * eps - 3j * eps**2 + 0.5 * eps**3
    rep = asymptotic_coefficients(eps, vals[:, None], 4, K)
    np.testing.assert_allclose(rep.coefficients[:, 0], [1, 2, -3j, 0.5], atol=1e-9)
    with pytest.raises(FitError):
        asymptotic_coefficients(eps[:5], vals[:5], 4, K)


def test_sweep_row_serialisation_has_no_timings():
    row = SweepRow(0.05 + 0j, 1e-10, 1e-15, -1e-12, 1e-4, 0.0, (9, 9), solve_seconds=3.0, residual_seconds=1.0)
    d = row.to_dict()
    assert "solve_seconds" not in d and "residual_seconds" not in d
    assert d["eps_abs"] == pytest.approx(0.05)
    assert row == SweepRow(0.05 + 0j, 1e-10, 1e-15, -1e-12, 1e-4, 0.0, (9, 9))


def test_arc_integral_against_adaptive_quadrature():
    lo, hi, xs = -0.4, 0.5, 0.3
    coef = np.array([1.0, 2.0 - 1.0j])
    f = lambda th: np.exp(0.7j * th)  # noqa: E731  analytic in the angle
    angles = _cheb(lo, hi, 24)
    arc = ArcData(angles, np.outer(f(angles), coef), xs, K)
    T = np.array([0.08, 0.12 * np.exp(0.2j)])
    got = arc_integral(arc, T)
    for i, Ti in enumerate(T):
        g = lambda th: 1j * K * f(th) * np.exp(-xs * np.exp(1j * K * (th - np.angle(Ti))) / abs(Ti) ** K)  # noqa
        re = quad(lambda th: g(th).real, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        im = quad(lambda th: g(th).imag, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        np.testing.assert_allclose(got[i], (re + 1j * im) * coef, rtol=1e-10, atol=1e-14)


def test_arc_interpolant_is_exact_and_repeatable():
    angles = _cheb(-0.7, 0.9, 12)
    poly = lambda th: 1 - 2 * th + 0.5j * th**7 - th**11  # noqa: E731
    arc = ArcData(angles, np.outer(poly(angles), [1.0, -1.0]), 0.3, K)
    th = np.linspace(-0.7, 0.9, 57)
    np.testing.assert_allclose(arc.interpolant(th)[:, 0], poly(th), rtol=1e-12, atol=1e-12)
    assert np.array_equal(arc.interpolant(th), arc.interpolant(th))


def _analytic_grid(coarse, gamma, n=3, c=0.2):
    """``w = s^n e^{-c s} e^{-m^2/2}`` with ``s = tau^k``, analytic in ``tau`` away from the cut."""
    tm = coarse.template(K, gamma)
    s = tm.tau_k
    return tm.with_values(np.outer(s**n * np.exp(-c * s), np.exp(-tm.m**2 / 2)))


def test_reconstruction_of_monomial(coarse):
    n = 2
    tm = coarse.template(K, 0.1)
    w = tm.with_values(np.outer(tm.tau**n / gamma_fn(n / K), np.exp(-tm.m**2 / 2)))
    t = np.array([0.5, 0.9 * np.exp(0.3j)])
    z = np.array([0.0, 0.8, -1.1 + 0.3j])
    eps = 0.1
    u = reconstruct_u(w, _spec_for(K), None, 0, t, z, eps)
    exact = np.outer((eps * t) ** n, np.exp(-z**2 / 2))
    np.testing.assert_allclose(u, exact, rtol=1e-9)


def _spec_for(k):
    from kborel.desk import desk_spec

    spec = desk_spec()
    assert spec.k == k
    return spec


def test_three_path_decomposition_on_analytic_data(coarse, spec):
    gp, gq = -0.3, 0.35
    wp, wq = _analytic_grid(coarse, gp), _analytic_grid(coarse, gq)
    xs = (coarse.rho / 2) ** K
    angles = _cheb(gp, gq, 30)
    s_arc = xs * np.exp(1j * K * angles)
    arc = ArcData(angles, np.outer(s_arc**3 * np.exp(-0.2 * s_arc), np.exp(-wp.m**2 / 2)), xs, K)
    t = np.array([0.6, 0.8 * np.exp(0.1j)])
    z = np.array([0.0, 0.5])
    I1, I2, I3, direct = difference_paths(wp, wq, arc, spec, None, 0, t, z, 0.1)
    scale = np.max(np.abs(laplace_fourier(wp, 0.1 * t, z)))
    # Cauchy: the two rays give the same transform, and the three pieces add up to it
    assert np.max(np.abs(direct)) <= 1e-10 * scale
    assert np.max(np.abs(I1 + I2 + I3 - direct)) <= 1e-10 * scale
    assert np.max(np.abs(I3)) > 1e-3 * scale


@settings(max_examples=25, deadline=None)
@given(st.floats(0.55, 0.95), st.floats(0.1, 4.0), st.floats(-3.0, 6.0))
def test_gevrey_fit_property(kappa, M, logK):
    rows = [(e, math.exp(logK - M / e**kappa)) for e in EPS]
    fit = gevrey_fit(rows, kappa)
    assert fit.M == pytest.approx(M, rel=1e-7)
    assert abs(fit.kappa_hat - kappa) < 1e-3
