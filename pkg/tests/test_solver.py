from __future__ import annotations

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from kborel.solver import (LedgerError, SolverError, apply_H_eps, residual, smallness_ledger, solve_fixed_point)
from kborel.transforms import norm_F

D0 = -1.5205308443374599
EPS = 0.06


@pytest.fixture(scope="module")
def grid(coarse, spec):
    return coarse.template(spec.k, D0)


def _forcing_oracle(spec, grid, eps):
    """``cf F_1(m, eps) tau / Gamma(1/k)`` over ``Q(im) - e^{k tau^k} R_D(im)``, written out for the reference problem."""
    m = grid.m
    tau = grid.r * np.exp(1j * grid.gamma)
    F1 = (1 + np.abs(m)) ** -2.5 * np.exp(-2 * np.abs(m)) * (1 + 0.5 * eps)
    Q = 2 * (1j * m) ** 2 - 2
    RD = (1j * m) ** 2 - 1
    H = Q[None, :] - np.exp(spec.k * tau[:, None] ** spec.k) * RD[None, :]
    return spec.cf * F1[None, :] * tau[:, None] / gamma_fn(1 / spec.k) / H


def test_map_at_zero_is_the_forcing(spec, grid):
    out = apply_H_eps(grid.zeros(), spec, None, EPS).values
    np.testing.assert_allclose(out, _forcing_oracle(spec, grid, EPS), rtol=1e-12)


def test_map_is_at_most_quadratic(spec, grid, rng):
    x = grid.x[:, None]
    base = x * np.exp(-x) * (np.exp(-2.5 * np.abs(grid.m)) / (1 + np.abs(grid.m)) ** 3)[None, :]
    w = grid.with_values(base * (1 + 0.3j * rng.standard_normal(base.shape)) * 1e-2)

    def H(t):
        return apply_H_eps(w.with_values(t * w.values), spec, None, EPS).values

    third = H(3) - 3 * H(2) + 3 * H(1) - H(0)
    assert np.max(np.abs(third)) <= 1e-12 * np.max(np.abs(H(3)))
    second = H(2) - 2 * H(1) + H(0)
    assert np.max(np.abs(second)) > 0


@pytest.fixture(scope="module")
def solved(spec, grid):
    return solve_fixed_point(spec, grid, EPS, tol=1e-12)


def test_solve_converges_with_small_residual(spec, solved):
    w, trace = solved
    assert trace.converged
    assert trace.iterations <= 40
    assert max(trace.ratios[1:]) <= 0.6
    assert residual(w, spec, None, EPS) <= 1e-10
    fixed = apply_H_eps(w, spec, None, EPS).values
    np.testing.assert_allclose(fixed, w.values, atol=1e-12 * np.max(np.abs(w.values)))


def test_solution_stays_in_ledger_ball(spec, grid, solved):
    led = smallness_ledger(spec, grid)
    assert led.passed
    assert norm_F(solved[0], warn=False) <= led.varpi


def test_ray_through_root_is_refused(spec, coarse):
    with pytest.raises(SolverError, match="root of H"):
        solve_fixed_point(spec, coarse.template(spec.k, 0.0), EPS, force=True)


def test_eps_outside_disc_is_refused(spec, grid):
    with pytest.raises(SolverError):
        solve_fixed_point(spec, grid, 0.2)


def test_failing_ledger_blocks_iteration(spec, grid):
    loud = spec.replace(cf=400.0, c12=5.0)
    assert not smallness_ledger(loud, grid).passed
    with pytest.raises(LedgerError):
        solve_fixed_point(loud, grid, EPS)


def test_affine_problem_contracts_by_half(spec, grid):
    affine = spec.replace(c12=0.0)
    assert smallness_ledger(affine, grid).passed
    _, trace = solve_fixed_point(affine, grid, EPS, tol=1e-12)
    assert trace.converged
    assert max(trace.ratios[1:]) <= 0.5


def test_zero_forcing_gives_zero_solution(spec, grid):
    from kborel.problem import ForcingMode, ForcingSpec

    f = spec.forcing
    silent = spec.replace(forcing=ForcingSpec((ForcingMode(1, 0.0, mu_prime=2.5, beta_prime=2.0),), K0=f.K0,
                                              T0=f.T0, beta=f.beta, mu=f.mu))
    w, trace = solve_fixed_point(silent, grid, EPS, tol=1e-12)
    assert trace.converged and not w.values.any()


def test_solutions_depend_smoothly_on_eps(spec, grid, solved):
    from kborel.solver import eps_polynomial_check

    # 8 samples on the circle against a cubic: overdetermined, so the residual is informative
    res = eps_polynomial_check(spec, grid, 0.05, tol=1e-12, n_points=8, degree=3)
    assert res <= 10 * 1e-12 * norm_F(solved[0], warn=False)
