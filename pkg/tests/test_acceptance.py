"""The eleven acceptance criteria on the reference problem, at their stated tolerances.

Each test prints one pass/fail line; the lines are repeated in the terminal
summary.  Criteria 5 to 10 share one flatness sweep (about a quarter of an
hour on a single core).
"""
from __future__ import annotations

import os

import pytest

from kborel import acceptance as acc

RESULTS: list[acc.CriterionResult] = []


def _report(result: acc.CriterionResult) -> None:
    RESULTS.append(result)
    print(result.line())
    assert result.passed, result.line()
    assert result.within_budget, f"over the time budget: {result.line()}"


def test_criterion_01_beta_oracle(cfg):
    _report(acc.beta_oracle(cfg))


def test_criterion_02_laplace_monomials(cfg):
    _report(acc.laplace_monomials(cfg))


def test_criterion_03_tahara(cfg):
    _report(acc.tahara_check(cfg.problem.k))


def test_criterion_04_fourier_identities(cfg):
    _report(acc.fourier_identities(cfg))


def test_criterion_11_exp_envelope(cfg):
    _report(acc.exp_envelope(cfg))


@pytest.fixture(scope="module")
def sweep(cfg):
    return acc.run_sweep(cfg, workers=len(os.sched_getaffinity(0)))


@pytest.mark.slow
def test_criterion_05_contraction(sweep):
    _report(acc.contraction(sweep.rows))


@pytest.mark.slow
def test_criterion_06_residual(sweep):
    _report(acc.residual_check(sweep.rows))


@pytest.mark.slow
def test_criterion_07_ball_containment(sweep):
    _report(acc.ball_containment(sweep.rows))


@pytest.mark.slow
def test_criterion_08_path_consistency(sweep):
    _report(acc.path_consistency(sweep.rows))


@pytest.mark.slow
def test_criterion_09_flatness(sweep, cfg):
    _report(acc.flatness(sweep, cfg.problem.k, cfg.sweep.noise_factor))


@pytest.mark.slow
def test_criterion_10_order_identification(sweep, cfg):
    _report(acc.order_identification(sweep, cfg.problem.k, (cfg.sweep.kappa_min, cfg.sweep.kappa_max)))
