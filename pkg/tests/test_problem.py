from __future__ import annotations

import numpy as np
import pytest

from kborel.desk import desk_m_grid
from kborel.grid import uniform_m_grid
from kborel.problem import (ComplexPolynomial, ForcingMode, SpecError, check_order, d_lk, tahara_coefficients,
                            validate_spec)


def test_desk_problem_validates(spec):
    report = validate_spec(spec, desk_m_grid())
    assert report.passed, report.failures()
    assert report.annulus["r1"] > 1


@pytest.mark.parametrize("k", [0.5, 1.0, 0.3, 1.2])
def test_order_outside_range_rejected(k):
    with pytest.raises(SpecError):
        check_order(k)


def test_failed_hypothesis_is_reported_not_raised(spec):
    bad = spec.replace(Q=ComplexPolynomial((-2.0, 0.0, 2.0, 1.0)))
    report = validate_spec(bad, uniform_m_grid(33, 10.0))
    assert not report.passed
    assert any("deg Q" in c.name for c in report.failures())


def test_d_lk_positive(spec):
    assert d_lk(spec, 1) == pytest.approx(3 - 1.75)


def test_forcing_mode_rejects_bad_modal():
    with pytest.raises(SpecError):
        ForcingMode(1, modal="tan")


def _rising_and_newton(a, delta, k, A):
    """Both sides of the reduced identity on T^a, written out term by term."""
    falling = np.prod([a - j for j in range(delta)], axis=0)

    def newton(p):
        return np.prod([a + j * k for j in range(p)], axis=0)

    rhs = newton(delta) + sum(A[p - 1] * newton(p) for p in range(1, delta))
    return falling, rhs


@pytest.mark.parametrize("delta", [1, 2, 3, 4, 5])
def test_tahara_identity_on_powers(delta):
    k = 0.75
    A = tahara_coefficients(delta, k)
    assert A.shape == (max(delta - 1, 0),)
    a = np.linspace(-3.0, 7.0, 41)
    lhs, rhs = _rising_and_newton(a, delta, k, A)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-10)


def test_tahara_delta2_closed_form():
    # a(a-1) = a(a+k) + A_1 a  gives  A_1 = -(1+k)
    for k in (0.6, 0.75, 0.9):
        assert tahara_coefficients(2, k)[0] == pytest.approx(-(1 + k), abs=1e-14)


def test_polynomial_evaluation_and_bound():
    p = ComplexPolynomial((1.0, -2.0, 0.5j))
    z = np.array([0.3 + 0.1j, -1.0, 2j])
    np.testing.assert_allclose(p(z), 1 - 2 * z + 0.5j * z**2)
    assert p.disc_bound(2.0) == pytest.approx(1 + 4 + 2)
    assert ComplexPolynomial.from_pairs(p.to_pairs()) == p


def test_forcing_psi_zero_and_linear(spec, coarse):
    from kborel.problem import ForcingSpec, forcing_psi

    tm = coarse.template(spec.k, -1.52)
    f = spec.forcing
    mode = f.modes[0]
    zero = spec.replace(forcing=ForcingSpec((ForcingMode(1, 0.0, mu_prime=2.5, beta_prime=2.0),), K0=f.K0,
                                            T0=f.T0, beta=f.beta, mu=f.mu))
    assert not forcing_psi(zero, tm, 0.05).values.any()
    from dataclasses import replace

    two = spec.replace(forcing=ForcingSpec((mode, replace(mode, n=2, amplitude=-0.5j)), K0=f.K0, T0=f.T0,
                                           beta=f.beta, mu=f.mu))
    only2 = spec.replace(forcing=ForcingSpec((replace(mode, n=2, amplitude=-0.5j),), K0=f.K0, T0=f.T0,
                                             beta=f.beta, mu=f.mu))
    np.testing.assert_allclose(forcing_psi(two, tm, 0.05).values,
                               forcing_psi(spec, tm, 0.05).values + forcing_psi(only2, tm, 0.05).values,
                               rtol=1e-14, atol=0)
