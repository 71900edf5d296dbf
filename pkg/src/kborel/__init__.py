"""k-Borel–Laplace solver for singularly perturbed nonlinear PDEs in the complex domain.

The public API covers problem description and validation, singular
geometry and coverings, the k-Borel and k-Laplace transforms, the
convolution operators, the fixed-point solver in the Borel plane and the
flatness and Gevrey-order analysis of the reconstructed solutions.
"""
from __future__ import annotations

from .analysis import (AgreementError, FitError, GevreyFit, SweepRow, arc_integral, asymptotic_coefficients,
                       difference_paths, flatness_sweep, gevrey_fit, laplace_fourier, reconstruct_u, solve_arc)
from .config import ConfigError, RunConfig, desk_config, load_config, load_problem, save_config
from .convolution import (c_k, conv_power_kernel, exp_neg_kappa_ck, nonlinear_operator, nonlinear_product)
from .desk import GridConfig, desk_m_grid, desk_spec
from .geometry import (CoveringData, ForbiddenInterval, GeometryError, HBoundEstimates, Sector, a_l,
                       estimate_H_bounds, forbidden_directions, plan_covering, tau_l)
from .grid import BorelGrid, MLine, RadialGrid, load_grid, make_radial_grid, save_grid, uniform_m_grid
from .problem import (ComplexPolynomial, ForcingMode, ForcingSpec, Level, ProblemSpec, SpecError,
                      ValidationReport, tahara_coefficients, validate_spec)
from .solver import (DivergenceError, IterationTrace, LedgerError, SmallnessLedger, SolverError, apply_H_eps,
                     residual, smallness_ledger, solve_fixed_point)
from .transforms import (AdmissibilityError, borel_k, fourier_inverse, laplace_k, laplace_k_borel, m_convolution,
                         norm_beta_mu, norm_F)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError", "AgreementError", "BorelGrid", "ComplexPolynomial", "ConfigError", "CoveringData",
    "DivergenceError", "FitError", "ForbiddenInterval", "ForcingMode", "ForcingSpec", "GeometryError",
    "GevreyFit", "GridConfig", "HBoundEstimates", "IterationTrace", "LedgerError", "Level", "MLine",
    "ProblemSpec", "RadialGrid", "RunConfig", "Sector", "SmallnessLedger", "SolverError", "SpecError",
    "SweepRow", "ValidationReport", "a_l", "apply_H_eps", "arc_integral", "asymptotic_coefficients",
    "borel_k", "c_k", "conv_power_kernel", "desk_config", "desk_m_grid", "desk_spec", "difference_paths",
    "estimate_H_bounds", "exp_neg_kappa_ck", "flatness_sweep", "forbidden_directions", "fourier_inverse",
    "gevrey_fit", "laplace_fourier", "laplace_k", "laplace_k_borel", "load_config", "load_grid",
    "load_problem", "m_convolution", "make_radial_grid", "nonlinear_operator", "nonlinear_product",
    "norm_F", "norm_beta_mu", "plan_covering", "reconstruct_u", "residual", "save_config", "save_grid",
    "smallness_ledger", "solve_arc", "solve_fixed_point", "tahara_coefficients", "tau_l", "uniform_m_grid",
    "validate_spec",
]
