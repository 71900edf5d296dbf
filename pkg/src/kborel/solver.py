"""Fixed-point solution of the Borel-plane convolution equation on one ray.

The map is

    H_eps(w) = [ sum_l eps^{e_l} R_l(im) c_l sum_n A_{l,n}(eps) K_{l,n} exp(-kappa_l C_k) w
                 + c_12 N(w, w) + c_f psi ] / H(tau, m)

where ``K_{l,n}`` collects the leading and Tahara convolution kernels and
``N`` is the nonlinear Fourier-Borel product.  Everything x-dependent is
assembled once per ray as dense matrices; the nonlinear product is applied
with FFTs in ``m``.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import rgamma

from . import convolution as cv
from .geometry import H_on_ray, HBoundEstimates, ray_min_H_ratio
from .grid import BorelGrid
from .problem import ProblemSpec, d_lk, forcing_psi, tahara_coefficients
from .transforms import norm_F

logger = logging.getLogger(__name__)

H_FLOOR = 1e-14


class SolverError(RuntimeError):
    pass


class DivergenceError(SolverError):
    pass


class LedgerError(SolverError):
    pass


@dataclass
class IterationTrace:
    norms: list[float] = field(default_factory=list)
    differences: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    converged: bool = False
    ball_ok: bool | None = None

    @property
    def iterations(self) -> int:
        return len(self.differences)

    def to_dict(self, with_times: bool = False) -> dict:
        out = {"iterations": self.iterations, "converged": self.converged, "ball_ok": self.ball_ok,
               "norms": self.norms, "differences": self.differences, "ratios": self.ratios}
        if with_times:
            out["times"] = self.times
        return out


@dataclass(frozen=True)
class SmallnessLedger:
    C3: float
    C5: dict
    C7: dict
    K_f: float
    eta2: float
    K1: float
    min_Q: float
    linear: float
    quadratic: float
    constant: float
    varpi: float | None
    incl_lhs: float | None
    shrink_lhs: float | None

    @property
    def passed(self) -> bool:
        return self.varpi is not None

    def evaluate(self, varpi: float) -> tuple[float, float]:
        """Left-hand sides of the inclusion and shrinking conditions."""
        incl = self.linear * varpi + self.quadratic * varpi**2 + self.constant
        shrink = self.linear + 2 * self.quadratic * varpi
        return incl, shrink

    def to_dict(self) -> dict:
        return {
            "C3": self.C3, "C5": {str(k): v for k, v in self.C5.items()},
            "C7": {str(k): v for k, v in self.C7.items()}, "K_f": self.K_f, "eta2": self.eta2,
            "K1": self.K1, "min_Q": self.min_Q, "linear": self.linear, "quadratic": self.quadratic,
            "constant": self.constant, "varpi": self.varpi, "incl_lhs": self.incl_lhs,
            "shrink_lhs": self.shrink_lhs, "passed": self.passed,
        }


def level_kernels(spec: ProblemSpec, grid: BorelGrid, l: int, n: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Unscaled leading kernel and Tahara kernels of level ``l``, index ``n``.

    The leading one is ``C_{k, g-1, delta-1}`` and the ``p``-th Tahara one
    ``C_{k, g+delta-p-1, p-1}`` with ``g = (n + d_{l,k}) / k``; the exponent
    of ``s`` is lowered by one by the ``ds/s`` measure.
    """
    k = spec.k
    lev = spec.level(l)
    g = (n + d_lk(spec, l)) / k
    lead = cv.kernel_operator(grid, g - 1, lev.delta - 1)
    tah = [cv.kernel_operator(grid, g + lev.delta - p - 1, p - 1) for p in range(1, lev.delta)]
    return lead, tah


def level_scales(spec: ProblemSpec, l: int, n: int) -> tuple[float, np.ndarray]:
    k = spec.k
    lev = spec.level(l)
    g = (n + d_lk(spec, l)) / k
    A = tahara_coefficients(lev.delta, k)
    lead = k**lev.delta * rgamma(g)
    tah = np.array([A[p - 1] * k**p * rgamma(g + lev.delta - p) for p in range(1, lev.delta)])
    return lead, tah


def level_operator(spec: ProblemSpec, grid: BorelGrid, l: int, n: int) -> np.ndarray:
    """``K_{l,n} exp(-kappa_l C_k)`` as a matrix on the radial nodes."""
    lead, tah = level_kernels(spec, grid, l, n)
    s_lead, s_tah = level_scales(spec, l, n)
    K = s_lead * lead
    for s, T in zip(s_tah, tah):
        K = K + s * T
    return K @ cv.exp_matrix(grid, spec.level(l).kappa)


class HEpsilon:
    """The fixed-point map on one ray at one ``eps``."""

    def __init__(self, spec: ProblemSpec, template: BorelGrid, eps: complex, *, psi: BorelGrid | None = None):
        self.spec = spec
        self.template = template
        self.eps = complex(eps)
        m = template.m
        self.H = H_on_ray(spec, template.x, template.gamma, m)
        self.Qm = spec.Q(1j * m)
        bad = np.abs(self.H) < H_FLOOR * np.abs(self.Qm)[None, :]
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise SolverError(f"|H| below floor at x={template.x[i]:.4g}, m={m[j]:.4g}")
        closest = ray_min_H_ratio(spec, template.gamma, m, template.radial.x_max)
        if closest < H_FLOOR:
            raise SolverError(f"|H| below floor on the ray {template.gamma:.4g}: it passes through a root of H")
        self.invH = 1 / self.H
        self.levels = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", cv.KernelWarning)
            for lev in spec.levels:
                if lev.c == 0 or not lev.A:
                    continue
                L = np.zeros((template.radial.size,) * 2, dtype=complex)
                for n, poly in lev.A.items():
                    scal = self.eps**lev.eps_power * lev.c * poly(self.eps)
                    if scal != 0:
                        L += scal * level_operator(spec, template, lev.index, n)
                self.levels.append((spec.R[lev.index - 1](1j * m), L))
        self.nl = cv.nonlinear_operator(template.radial, m, template.beta) if spec.c12 != 0 else None
        self.Q1m = spec.Q1(1j * m)
        self.Q2m = spec.Q2(1j * m)
        if psi is None:
            psi = forcing_psi(spec, template, self.eps)
        self.psi = psi
        self.forcing = spec.cf * psi.values * self.invH

    def linear(self, W: np.ndarray) -> np.ndarray:
        out = np.zeros_like(W)
        for Rm, L in self.levels:
            out += Rm[None, :] * (L @ W)
        return out * self.invH

    def nonlinear(self, W: np.ndarray) -> np.ndarray:
        if self.nl is None:
            return np.zeros_like(W)
        return self.spec.c12 / cv.SQRT_2PI * self.nl.apply(W, W, self.Q1m, self.Q2m) * self.invH

    def __call__(self, W: np.ndarray) -> np.ndarray:
        return self.forcing + self.linear(W) + self.nonlinear(W)


def apply_H_eps(w: BorelGrid, spec: ProblemSpec, hbounds: HBoundEstimates | None, eps: complex) -> BorelGrid:
    """One application of the fixed-point map to ``w``."""
    op = HEpsilon(spec, w, eps)
    return w.with_values(op(w.values), eps=eps)


def solve_fixed_point(spec: ProblemSpec, template: BorelGrid, eps: complex, *, tol: float = 1e-10,
                      max_iter: int = 60, ledger: SmallnessLedger | None = None, force: bool = False,
                      hbounds: HBoundEstimates | None = None) -> tuple[BorelGrid, IterationTrace]:
    """Picard iteration from ``w0 = 0`` until the Def-4 norm of the update is below ``tol``.

    Without ``force`` a passing ``ledger`` is required (it is computed when
    not supplied).  Raises :class:`DivergenceError` after three consecutive
    contraction ratios above one.
    """
    if abs(eps) > spec.eps0:
        raise SolverError(f"|eps| = {abs(eps):.4g} exceeds eps0 = {spec.eps0}")
    if ledger is None and not force:
        ledger = smallness_ledger(spec, template, hbounds)
    if ledger is not None and not ledger.passed and not force:
        raise LedgerError("smallness ledger fails; rerun with force=True to iterate anyway")
    op = HEpsilon(spec, template, eps)
    trace = IterationTrace()
    W = np.zeros_like(template.values)
    w_norm = 0.0
    above = 0
    for it in range(max_iter):
        t0 = time.perf_counter()
        W_new = op(W)
        diff = norm_F(template.with_values(W_new - W), warn=False)
        new_norm = norm_F(template.with_values(W_new), warn=False)
        trace.times.append(time.perf_counter() - t0)
        if trace.differences and trace.differences[-1] > 0:
            ratio = diff / trace.differences[-1]
            trace.ratios.append(ratio)
            above = above + 1 if ratio > 1 else 0
            if above >= 3:
                raise DivergenceError(f"contraction ratio above 1 for 3 iterations (last {ratio:.3g})")
        trace.differences.append(diff)
        trace.norms.append(new_norm)
        W = W_new
        if diff <= tol * max(1.0, w_norm):
            trace.converged = True
            break
        w_norm = new_norm
    if not trace.converged:
        raise SolverError(f"no convergence in {max_iter} iterations (last update {trace.differences[-1]:.3g})")
    if ledger is not None and ledger.varpi is not None:
        trace.ball_ok = bool(trace.norms[-1] <= ledger.varpi)
        if not trace.ball_ok:
            warnings.warn("solution norm exceeds the ledger radius", RuntimeWarning, stacklevel=2)
    logger.info("solved eps=%s gamma=%.4f in %d iterations", eps, template.gamma, trace.iterations)
    return template.with_values(W, eps=eps, info={"iterations": trace.iterations}), trace


def residual(w: BorelGrid, spec: ProblemSpec, hbounds: HBoundEstimates | None, eps: complex) -> float:
    """Relative Def-4 residual of the raw convolution equation at ``w``.

    Assembled from grid-level operators (series for ``exp(-kappa C_k)``,
    kernel applications, nonlinear product) without dividing by ``H``.
    """
    k = spec.k
    m = w.m
    Qm = spec.Q(1j * m)[None, :]
    RDm = spec.R_D(1j * m)[None, :]
    growth = np.exp(spec.alpha_D * k * w.tau_k)[:, None]
    lhs = Qm * w.values - growth * RDm * w.values
    rhs = np.zeros_like(w.values)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", cv.KernelWarning)
        for lev in spec.levels:
            if lev.c == 0 or not lev.A:
                continue
            ew = cv.exp_neg_kappa_ck(w, lev.kappa)
            Rm = spec.R[lev.index - 1](1j * m)[None, :]
            g_base = d_lk(spec, lev.index) / k
            A = tahara_coefficients(lev.delta, k)
            for n, poly in lev.A.items():
                g = n / k + g_base
                acc = k**lev.delta * rgamma(g) * cv.conv_power_kernel(
                    ew, cv.KernelParams(g - 1, lev.delta - 1, k)).values
                for p in range(1, lev.delta):
                    acc = acc + A[p - 1] * k**p * rgamma(g + lev.delta - p) * cv.conv_power_kernel(
                        ew, cv.KernelParams(g + lev.delta - p - 1, p - 1, k)).values
                rhs += eps**lev.eps_power * lev.c * poly(eps) * Rm * acc
    if spec.c12 != 0 and np.any(w.values):
        rhs += spec.c12 * cv.nonlinear_product(w, w, spec.Q1, spec.Q2).values
    forcing = spec.cf * forcing_psi(spec, w, eps).values
    rhs += forcing
    num = norm_F(w.with_values(lhs - rhs), warn=False)
    den = max(norm_F(w.with_values(Qm * w.values), warn=False), norm_F(w.with_values(forcing), warn=False))
    return 0.0 if den == 0 else num / den


def _weighted_operator_norm(K: np.ndarray, Wx: np.ndarray) -> np.ndarray:
    """Row sums of ``|W_i K_ii' / W_i'|``."""
    return (np.abs(K) * Wx[:, None] / Wx[None, :]).sum(axis=1)


def psi_bound(spec: ProblemSpec, template: BorelGrid) -> np.ndarray:
    """Pointwise bound of ``|psi(tau, m, eps)|`` over ``|eps| <= eps0``."""
    k = spec.k
    fs = spec.forcing
    r = template.r
    out = np.zeros(template.values.shape)
    from .problem import default_n_psi

    n_psi = default_n_psi(spec, template.nu)
    for n in range(1, n_psi + 1):
        prof = np.zeros(template.m.size)
        for md in fs.modes:
            if md.n == n:
                prof += np.abs(md.profile(template.m)) * md.eps_poly.disc_bound(spec.eps0)
        if fs.geometric is not None:
            g = fs.geometric
            prof += g.ratio ** (-n) * np.abs(g.mode.profile(template.m)) * g.mode.eps_poly.disc_bound(spec.eps0)
        if np.any(prof):
            out += np.outer(r**n * rgamma(n / k), prof)
    return out


def nonlinear_constant(spec: ProblemSpec, template: BorelGrid) -> float:
    """Discrete bound ``C3`` with ``||N(w1, w2) / Q|| <= C3 ||w1|| ||w2||``."""
    op = cv.nonlinear_operator(template.radial, template.m, template.beta)
    x = template.x
    Wx = (1 + x**2) / x * np.exp(-template.nu * x)
    la, lb = op.envelope(1 / (x * Wx))
    y_w = op.weights.reshape(-1, op.nq)
    X = x * np.sum(y_w * la * lb, axis=1)
    m = template.m
    Wm = (1 + np.abs(m)) ** template.mu * np.exp(template.beta * np.abs(m))
    h = template.h
    n = m.size
    idx = np.arange(n)
    diff = idx[:, None] - idx[None, :] + (n - 1) // 2
    valid = (diff >= 0) & (diff < n)
    dclip = np.clip(diff, 0, n - 1)
    a1 = np.abs(spec.Q1(1j * m)) / Wm
    a2 = np.abs(spec.Q2(1j * m)) / Wm
    S = h * np.sum(np.where(valid, a1[dclip] * a2[None, :], 0.0), axis=1)
    return float(np.max(Wx * X) * np.max(Wm * S / np.abs(spec.Q(1j * m))))


def smallness_ledger(spec: ProblemSpec, template: BorelGrid, hbounds: HBoundEstimates | None = None,
                     varpi_candidates=None) -> SmallnessLedger:
    """Evaluate the inclusion and shrinking conditions with discrete constants.

    The constants are exact weighted operator norms of the discretised
    operators on ``template`` (so the verdict is a sufficient condition for
    the discrete iteration), bounded uniformly over ``|eps| <= eps0``.
    """
    k = spec.k
    m = template.m
    x = template.x
    Wx = (1 + x**2) / x * np.exp(-template.nu * x)
    H = H_on_ray(spec, x, template.gamma, m)
    absQ = np.abs(spec.Q(1j * m))
    eta = float(np.min(np.abs(H) / absQ[None, :]))
    eta_c = min(eta, 0.5)
    min_Q = float(np.min(absQ))
    C5, C7 = {}, {}
    linear = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", cv.KernelWarning)
        for lev in spec.levels:
            Rm = np.abs(spec.R[lev.index - 1](1j * m))[None, :]
            mult = np.max(Rm / np.abs(H), axis=1)
            E = cv.exp_matrix(template, lev.kappa)
            A = tahara_coefficients(lev.delta, k)
            g_base = d_lk(spec, lev.index) / k
            for n, poly in lev.A.items():
                lead, tah = level_kernels(spec, template, lev.index, n)
                c5 = float(np.max(mult * _weighted_operator_norm(lead @ E, Wx)))
                c7 = [float(np.max(mult * _weighted_operator_norm(T @ E, Wx))) for T in tah]
                C5[(lev.index, n)] = c5
                C7[(lev.index, n)] = c7
                g = n / k + g_base
                inner = c5 * k**lev.delta * rgamma(g)
                inner += sum(abs(A[p - 1]) * c7[p - 1] * k**p * rgamma(g + lev.delta - p)
                             for p in range(1, lev.delta))
                linear += spec.eps0**lev.eps_power * abs(lev.c) * poly.disc_bound(spec.eps0) * inner
    C3 = nonlinear_constant(spec, template) if spec.c12 != 0 else 0.0
    Wm = (1 + np.abs(m)) ** template.mu * np.exp(template.beta * np.abs(m))
    K_f = float(np.max(Wx[:, None] * Wm[None, :] * psi_bound(spec, template)))
    quad = abs(spec.c12) * C3 / (cv.SQRT_2PI * eta_c)
    const = abs(spec.cf) * K_f / (eta_c * min_Q)

    cands = [] if varpi_candidates is None else [float(v) for v in varpi_candidates]
    if varpi_candidates is None:
        cands = [0.0] + list(np.geomspace(1e-12, 1e3, 301))
        root = _smallest_root(linear, quad, const)
        if root is not None:
            cands.append(root * (1 + 1e-9))
    passing = [v for v in sorted(cands) if _passes(linear, quad, const, v)]
    varpi = passing[0] if passing else None
    incl = shrink = None
    if varpi is not None:
        incl = linear * varpi + quad * varpi**2 + const
        shrink = linear + 2 * quad * varpi
    K1 = hbounds.K1 if hbounds is not None else float("nan")
    return SmallnessLedger(C3, C5, C7, K_f, eta, K1, min_Q, linear, quad, const, varpi, incl, shrink)


def _passes(a: float, b: float, c: float, v: float) -> bool:
    return a * v + b * v**2 + c <= v and a + 2 * b * v <= 0.5


def _smallest_root(a: float, b: float, c: float) -> float | None:
    if a >= 1:
        return None
    if b == 0:
        return c / (1 - a)
    disc = (1 - a) ** 2 - 4 * b * c
    if disc < 0:
        return None
    return 2 * c / ((1 - a) + math.sqrt(disc))


def eps_polynomial_check(spec: ProblemSpec, template: BorelGrid, radius: float, *, tol: float = 1e-10,
                         n_points: int = 4, degree: int = 3) -> float:
    """Residual of a degree-``degree`` fit in ``eps`` of solutions on a circle.

    Returns the Def-4 norm of the largest fit residual.
    """
    eps = radius * np.exp(2j * np.pi * np.arange(n_points) / n_points)
    sols = [solve_fixed_point(spec, template, e, tol=tol, force=True)[0].values for e in eps]
    stack = np.stack(sols).reshape(n_points, -1)
    V = np.vander(eps, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, stack, rcond=None)
    res = stack - V @ coef
    return max(norm_F(template.with_values(r.reshape(template.values.shape)), warn=False) for r in res)
