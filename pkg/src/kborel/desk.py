"""Reference problem used by the demos and the acceptance suite.

``k = 3/4``, ``D = 2``, ``Q = 2(X^2 - 1)``, ``R_D = X^2 - 1``, ``R_1 = 1``,
``Q1 = Q2 = X``, one level with ``(delta, d, Delta) = (1, 3, 2)`` and
``kappa = 0.05``, and a single forcing mode.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BorelGrid, make_radial_grid, uniform_m_grid
from .problem import ONE, ComplexPolynomial, ForcingMode, ForcingSpec, Level, ProblemSpec

P = ComplexPolynomial.from_pairs


@dataclass(frozen=True)
class GridConfig:
    """Discretisation parameters shared by every ray of a run."""

    nu: float = 1.0
    beta: float = 2.0
    mu: float = 2.5
    rho: float = 0.5
    x_max: float = 16.0
    n_inner: int = 30
    inner_ratio: float = 0.5
    n_outer: int = 14
    order: int = 10
    n_m: int = 129
    m_max: float = 28.0

    def split_point(self, k: float) -> float:
        return (self.rho / 2) ** k

    def template(self, k: float, gamma: float, rho: float | None = None) -> BorelGrid:
        rho = self.rho if rho is None else rho
        radial = make_radial_grid(self.x_max, (rho / 2) ** k, n_inner=self.n_inner,
                                  inner_ratio=self.inner_ratio, n_outer=self.n_outer, order=self.order)
        m = uniform_m_grid(self.n_m, self.m_max)
        return BorelGrid.template(gamma, radial, m, nu=self.nu, beta=self.beta, mu=self.mu, k=k, rho=rho)


def desk_spec(*, c1: complex = 0.2, c12: complex = 0.2, cf: complex = 0.05, eps0: float = 0.12,
              eps_poly=(1.0, 0.5)) -> ProblemSpec:
    level = Level(1, c1, d=3, delta=1, Delta=2, kappa=0.05, A={1: ONE})
    mode = ForcingMode(1, 1.0, mu_prime=2.5, beta_prime=2.0, eps_poly=P(eps_poly))
    forcing = ForcingSpec((mode,), K0=4.0, T0=2.0, beta=2.0, mu=2.5)
    return ProblemSpec(
        k=0.75, alpha_D=1.0, c12=c12, cf=cf,
        Q=P([-2, 0, 2]), Q1=P([0, 1]), Q2=P([0, 1]),
        R=(P([1]), P([-1, 0, 1])), levels=(level,), forcing=forcing, eps0=eps0, name="desk",
    )


def desk_m_grid(cfg: GridConfig | None = None) -> np.ndarray:
    cfg = cfg or GridConfig()
    return uniform_m_grid(cfg.n_m, cfg.m_max)
