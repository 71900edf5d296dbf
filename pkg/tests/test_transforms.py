from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma as gamma_fn

from kborel.grid import MLine, uniform_m_grid
from kborel.transforms import (AdmissibilityError, admissibility, borel_k, fourier_inverse, laplace_k,
                               laplace_k_borel, m_convolution, norm_beta_mu, wrap)

K = 0.75


def _monomial_grid(gc, gamma, a, k=K):
    tm = gc.template(k, gamma)
    col = (tm.r * np.exp(1j * gamma)) ** a
    return tm.with_values(np.repeat(col[:, None], tm.m.size, axis=1))


@pytest.mark.parametrize("a", [0.75, 1.5, 2.0, 3.25])
@pytest.mark.parametrize("T", [0.05, 0.15 * np.exp(0.4j), 0.2 * np.exp(-0.5j)])
def test_laplace_of_powers(coarse, a, T):
    w = _monomial_grid(coarse, 0.0, a)
    got = laplace_k(w, T, 0)
    exact = T**a * gamma_fn(a / K)
    assert abs(got - exact) <= 1e-9 * abs(exact)


def test_laplace_rejects_inadmissible_direction(coarse):
    w = _monomial_grid(coarse, 0.0, 1.0)
    with pytest.raises(AdmissibilityError):
        laplace_k(w, -0.1 + 0.01j, 0)


@pytest.mark.parametrize("eps", [0.05, 0.1 * np.exp(0.3j)])
def test_borel_laplace_roundtrip(coarse, eps):
    coeffs = np.array([0.0, 1.0, -0.5, 0.25j, 2.0])
    b = borel_k(coeffs, K)
    tm = coarse.template(K, 0.0)
    u = tm.r.astype(complex)
    col = sum(c * u**j for j, c in enumerate(b))
    w = tm.with_values(np.repeat(col[:, None], tm.m.size, axis=1))
    got = laplace_k_borel(w, eps, 0)
    exact = sum(c * eps**j for j, c in enumerate(coeffs))
    assert abs(got - exact) < 1e-11


def test_borel_scaling():
    b = borel_k([1.0, 1.0, 1.0], K)
    np.testing.assert_allclose(b, [1.0, 1 / gamma_fn(1 + 1 / K), 1 / gamma_fn(1 + 2 / K)])


def test_fourier_of_kinked_exponential():
    # (2 pi)^{-1/2} int e^{-|m|} dm = 2 / sqrt(2 pi); the kink at 0 limits the rule to second order
    m = uniform_m_grid(4001, 40.0)
    f = MLine(m, np.exp(-np.abs(m)))
    z = np.array([0.0, 0.5, 1.0])
    got = fourier_inverse(f, z, beta=1.0)
    exact = 2 / math.sqrt(2 * math.pi) / (1 + z**2)
    np.testing.assert_allclose(got, exact, rtol=1e-4)
    assert got[0] == pytest.approx(2 / math.sqrt(2 * math.pi), rel=1e-4)


def test_fourier_of_gaussian_is_spectral():
    m = uniform_m_grid(257, 16.0)
    f = MLine(m, np.exp(-m**2 / 2))
    z = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(fourier_inverse(f, z, beta=1.0), np.exp(-z**2 / 2), atol=1e-13)


def test_m_convolution_of_gaussians():
    m = uniform_m_grid(401, 20.0)
    g = MLine(m, np.exp(-m**2 / 2))
    out = m_convolution(g, g)
    np.testing.assert_allclose(out.values, math.sqrt(math.pi) * np.exp(-m**2 / 4), atol=1e-12)


def test_norm_beta_mu_peak():
    m = uniform_m_grid(201, 10.0)
    f = MLine(m, (1 + np.abs(m)) ** -2.0 * np.exp(-np.abs(m)))
    assert norm_beta_mu(f, 1.0, 2.0, warn=False) == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-50, 50, allow_nan=False))
def test_wrap_range_and_equivalence(angle):
    w = float(wrap(angle))
    assert -math.pi < w <= math.pi + 1e-12
    assert math.isclose(math.cos(w), math.cos(angle), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(angle), abs_tol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1.2, 1.2), st.floats(-math.pi, math.pi))
def test_admissibility_is_cosine_of_gap(gamma, arg):
    T = 0.1 * np.exp(1j * arg)
    assert admissibility(gamma, K, T) == pytest.approx(math.cos(K * float(wrap(gamma - arg))), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=1,
                max_size=8), st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_borel_is_linear(coeffs, scale):
    a = np.array(coeffs)
    np.testing.assert_allclose(borel_k(scale * a, K), scale * borel_k(a, K), rtol=1e-12, atol=1e-12)


def test_laplace_is_linear(coarse, rng):
    tm = coarse.template(K, 0.2)
    x = tm.x[:, None]
    base = x * np.exp(-x) * np.ones(tm.m.size)[None, :]
    w1 = tm.with_values(base * rng.standard_normal(tm.m.size)[None, :])
    w2 = tm.with_values(base**2 * (1 + 1j * rng.standard_normal(tm.m.size))[None, :])
    a, b = 0.7 - 0.2j, -1.3
    T = 0.1 * np.exp(0.3j)
    lhs = laplace_k(w1.with_values(a * w1.values + b * w2.values), T)
    np.testing.assert_allclose(lhs, a * laplace_k(w1, T) + b * laplace_k(w2, T), rtol=1e-13, atol=1e-16)
