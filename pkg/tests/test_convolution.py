from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from scipy.special import beta as beta_fn

from kborel import convolution as cv
from kborel.grid import uniform_m_grid
from kborel.problem import ComplexPolynomial

K = 0.75


def _params(g2, g3):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", cv.KernelWarning)
        return cv.KernelParams(g2, g3, K)


KERNELS = [(1 / K - 2, 0.0), (0.5, 1.0), (-0.5, 0.25)]


@pytest.mark.parametrize("g2,g3", KERNELS)
@pytest.mark.parametrize("a", [0, 1, 2])
def test_power_kernel_on_grid_polynomials(coarse, g2, g3, a):
    grid = coarse.template(K, 0.9)
    s = grid.tau_k
    w = grid.with_values(np.outer(s**a, np.ones(grid.m.size)))
    out = cv.conv_power_kernel(w, _params(g2, g3)).values[:, 0]
    exact = s ** (g2 + g3 + a + 2) * beta_fn(g2 + 1, g3 + a + 1)
    np.testing.assert_allclose(out, exact, rtol=1e-9)


@pytest.mark.parametrize("g2,g3", KERNELS)
@pytest.mark.parametrize("a", [0.5, 1.25, 2.5])
def test_power_kernel_on_fractional_powers(coarse, g2, g3, a):
    # the grid interpolant cannot represent s^a near 0, so evaluate at the quadrature points
    grid = coarse.template(K, 0.9)
    s = grid.tau_k
    out = cv.conv_power_kernel(lambda tau: (tau**K) ** a, _params(g2, g3), template=grid).values[:, 0]
    exact = s ** (g2 + g3 + a + 2) * beta_fn(g2 + 1, g3 + a + 1)
    np.testing.assert_allclose(out, exact, rtol=1e-11)


def test_callable_and_grid_inputs_agree(coarse):
    grid = coarse.template(K, -0.4)
    params = _params(0.5, 1.0)
    f = lambda tau: np.exp(-(tau**K)) * tau ** (2 * K)  # noqa: E731
    from_callable = cv.conv_power_kernel(f, params, template=grid).values[:, 0]
    w = grid.with_values(np.outer(f(grid.tau), np.ones(grid.m.size)))
    from_grid = cv.conv_power_kernel(w, params).values[:, 0]
    np.testing.assert_allclose(from_grid, from_callable, rtol=1e-7, atol=1e-14)


def test_kernel_parameter_checks():
    with pytest.raises(ValueError):
        cv.KernelParams(-1.0, 0.0, K)
    with pytest.raises(ValueError):
        cv.KernelParams(0.0, -0.1, K)
    with pytest.warns(cv.KernelWarning):
        cv.KernelParams(0.1, 0.0, K)


def test_ck_on_linear_function(coarse):
    grid = coarse.template(K, 0.3)
    s = grid.tau_k
    out = cv.c_k(grid.with_values(np.outer(s, np.ones(grid.m.size)))).values[:, 0]
    exact = cv.ck_constant(K) * s ** (1 / K + 1) * beta_fn(1 / K - 1, 2)
    np.testing.assert_allclose(out, exact, rtol=1e-9)


def test_exp_series_semigroup(coarse):
    grid = coarse.template(K, 0.0)
    x = grid.x[:, None]
    w = grid.with_values(np.broadcast_to(x * np.exp(-x), (x.size, grid.m.size)).astype(complex))
    ab = cv.exp_neg_kappa_ck(cv.exp_neg_kappa_ck(w, 0.2), 0.3).values
    direct = cv.exp_neg_kappa_ck(w, 0.5).values
    np.testing.assert_allclose(ab, direct, rtol=1e-10, atol=1e-14)
    assert np.array_equal(cv.exp_neg_kappa_ck(w, 0.0).values, w.values)
    with pytest.raises(ValueError):
        cv.exp_neg_kappa_ck(w, -0.1)


def _brute_m_convolution(m, f, g):
    h = m[1] - m[0]
    out = np.zeros(m.size, complex)
    for i, mi in enumerate(m):
        for j, mj in enumerate(m):
            d = mi - mj
            idx = int(round((d - m[0]) / h))
            if 0 <= idx < m.size:
                out[i] += f[idx] * g[j]
    return out * h


def test_nonlinear_product_brute_force(coarse):
    # w_i = x^2 f_i(m): the radial integral is x int_0^x (x - y) y dy = x^4 / 6
    from dataclasses import replace

    gc = replace(coarse, n_m=33, m_max=8.0)
    grid = gc.template(K, 0.2)
    m = grid.m
    f1 = np.exp(-(m**2))
    f2 = np.exp(-((m - 1) ** 2)) * (1 + 0.5j * m)
    x = grid.x[:, None]
    w1 = grid.with_values(x**2 * f1[None, :])
    w2 = grid.with_values(x**2 * f2[None, :])
    one = ComplexPolynomial((1.0,))
    got = cv.nonlinear_product(w1, w2, one, one).values
    exact = x**4 / 6 * _brute_m_convolution(m, f1, f2)[None, :] / math.sqrt(2 * math.pi)
    np.testing.assert_allclose(got, exact, rtol=1e-10, atol=1e-12 * np.max(np.abs(exact)))


def test_nonlinear_product_rejects_nonvanishing_factor(coarse):
    grid = coarse.template(K, 0.2)
    w = grid.with_values(np.ones((grid.x.size, grid.m.size), complex))
    with pytest.raises(cv.SmallTauError):
        cv.nonlinear_product(w, w, ComplexPolynomial((1.0,)), ComplexPolynomial((1.0,)))


def test_m_grid_must_be_odd():
    with pytest.raises(ValueError):
        uniform_m_grid(64, 10.0)


def test_nonlinear_product_is_bilinear(coarse, spec, rng):
    grid = coarse.template(K, 0.2)
    x = grid.x[:, None]
    prof = np.exp(-2.5 * np.abs(grid.m))[None, :]
    w1 = grid.with_values(x * np.exp(-x) * prof * (1 + 0.2 * rng.standard_normal(grid.m.size)))
    w2 = grid.with_values(x**2 * np.exp(-x) * prof)
    a = 1.5 - 0.5j
    lhs = cv.nonlinear_product(w1.with_values(a * w1.values), w2, spec.Q1, spec.Q2).values
    rhs = a * cv.nonlinear_product(w1, w2, spec.Q1, spec.Q2).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-14 * np.max(np.abs(rhs)))
    zero = cv.nonlinear_product(w1, w2.zeros(), spec.Q1, spec.Q2).values
    assert not zero.any()
