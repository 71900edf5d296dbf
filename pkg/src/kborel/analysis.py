"""Reconstruction of the sectorial solutions and their exponential flatness.

``u_p(t, z, eps)`` is the order-k Laplace transform in ``tau`` (along the ray
``gamma_p``, at ``T = eps t``) followed by the inverse Fourier transform in
``m`` of the Borel solution on that ray.  Neighbouring solutions are compared
through the decomposition

    u_{p+1} - u_p = I_1 + I_2 + I_3,

where ``I_1`` and ``-I_2`` are the ray integrals beyond the radius ``rho/2``
and ``I_3`` is the integral over the arc of radius ``rho/2`` joining the two
rays.  The arc values come from short-ray solves at the arc quadrature
angles; the equation is of Volterra type in ``|tau|^k``, so a solve on the
inner panels only is the restriction of the full solve.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .geometry import CoveringData
from .grid import BorelGrid, MLine, gauss_legendre
from .problem import ProblemSpec
from .solver import residual, smallness_ledger, solve_fixed_point
from .transforms import AdmissibilityError, admissibility, fourier_inverse, norm_F, wrap

logger = logging.getLogger(__name__)


class FitError(ValueError):
    pass


class AgreementError(RuntimeError):
    """Two solves that should share their cut-disc restriction disagree."""


@dataclass(frozen=True)
class SolutionSample:
    p: int
    t: np.ndarray
    z: np.ndarray
    eps: complex
    values: np.ndarray


@dataclass(frozen=True)
class GevreyFit:
    p: int
    log_K: float
    M: float
    quality: float
    kappa_hat: float
    kappa_grid: np.ndarray
    kappa_quality: np.ndarray
    n_used: int

    def to_dict(self) -> dict:
        return {"p": self.p, "log_K": self.log_K, "K": math.exp(self.log_K) if self.log_K < 700 else math.inf,
                "M": self.M, "quality": self.quality, "kappa_hat": self.kappa_hat, "n_used": self.n_used}


def _laplace_rows(w: BorelGrid, T: np.ndarray, lo: int = 0, hi: int | None = None, *,
                  delta1: float = 1e-3) -> np.ndarray:
    """``int w e^{-(u/T)^k} dx/x`` over nodes ``lo:hi`` for every ``T``; shape ``(nT, n_m)``.

    The kernel oscillates fast when ``|T|`` is small, so the panels are
    subdivided and ``w`` is evaluated by its panel interpolant.
    """
    T = np.atleast_1d(np.asarray(T, dtype=complex))
    hi = w.radial.size if hi is None else hi
    adm = np.array([admissibility(w.gamma, w.k, Tj) for Tj in T])
    if np.any(adm < delta1):
        raise AdmissibilityError(f"direction {w.gamma:.4g} not admissible for some T (min cos {adm.min():.3g})")
    rot = np.exp(1j * w.k * wrap(w.gamma - np.angle(T))) / np.abs(T) ** w.k
    y, wts = w.radial.refined(float(np.max(np.abs(rot))), lo, hi)
    vals = w.radial.interpolate(w.values, y)
    kern = np.exp(-np.multiply.outer(rot, y)) * (wts / y)[None, :]
    return kern @ vals


def _tail_bound(w: BorelGrid, T: np.ndarray) -> float:
    """Largest truncation bound beyond ``x_max`` over the requested ``T``."""
    T = np.atleast_1d(np.asarray(T, dtype=complex))
    c = np.array([admissibility(w.gamma, w.k, Tj) for Tj in T])
    decay = c / np.abs(T) ** w.k - w.nu
    if np.any(decay <= 0):
        raise AdmissibilityError("|eps t| too large for the grid growth")
    order = w.radial.order
    x = w.x[-order:]
    env = np.max(np.abs(w.values[-order:]) * ((1 + x**2) / x * np.exp(-w.nu * x))[:, None])
    X = w.radial.x_max
    return float(np.max(env * np.exp(-decay * X) / (decay * (1 + X**2))))


def laplace_fourier(w: BorelGrid, T, z, *, lo: int = 0, hi: int | None = None, beta_z: float | None = None):
    """``u(T, z)`` on the product of ``T`` and ``z`` samples, shape ``(nT, nz)``."""
    L = _laplace_rows(w, T, lo, hi)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    beta = w.beta if beta_z is None else beta_z
    out = np.stack([fourier_inverse(MLine(w.m, row), z, beta) for row in L])
    return out


def reconstruct_u(w: BorelGrid, spec: ProblemSpec, covering: CoveringData | None, p: int, t, z, eps,
                  *, tol: float = 1e-10):
    """``u_p(t, z, eps)`` by Laplace quadrature along the ray of ``w`` and inverse Fourier in ``m``.

    ``t`` and ``z`` may be arrays; the result has shape ``(len(t), len(z))``
    (squeezed for scalars).  Admissibility uses the ray direction of ``w``;
    when ``covering`` is given, membership of ``eps t`` in the sector of
    direction ``d_p`` is checked too.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=complex))
    T = complex(eps) * t_arr
    if covering is not None:
        from .geometry import Sector

        target = Sector(covering.directions[p], covering.theta, spec.eps0 * covering.time_sector.radius)
        if not np.all(target.contains(T)):
            raise AdmissibilityError("eps t outside the sector attached to d_p")
    bound = _tail_bound(w, T)
    if bound > tol:
        raise AdmissibilityError(f"Laplace truncation bound {bound:.3g} exceeds {tol:g}")
    vals = laplace_fourier(w, T, z)
    if np.ndim(t) == 0 and np.ndim(z) == 0:
        return complex(vals[0, 0])
    if np.ndim(t) == 0:
        return vals[0]
    if np.ndim(z) == 0:
        return vals[:, 0]
    return vals


@dataclass(frozen=True)
class ArcData:
    """Borel solution at ``|tau| = rho/2`` sampled at Chebyshev-Lobatto angles between two rays.

    ``angles`` must be the Chebyshev-Lobatto points of their interval, in order.
    """

    angles: np.ndarray
    values: np.ndarray  # (n_angles, n_m)
    x_split: float
    k: float

    @property
    def interpolant(self) -> BarycentricInterpolator:
        # closed-form Chebyshev-Lobatto weights; scipy's own computation shuffles nodes at random
        wi = (-1.0) ** np.arange(self.angles.size)
        wi[[0, -1]] *= 0.5
        return BarycentricInterpolator(self.angles, self.values, wi=wi)


def _short_solve(args):
    spec, template, gamma, eps, tol, x_split = args
    tm = template.on_ray(float(gamma))
    w, trace = solve_fixed_point(spec, tm, eps, tol=tol, ledger=smallness_ledger(spec, tm))
    return tm.radial.interpolate(w.values, np.array([x_split]))[0], w.values


def solve_arc(spec: ProblemSpec, template: BorelGrid, gamma_a: float, gamma_b: float, eps: complex, *,
              n_angles: int = 40, tol: float = 1e-12, check: tuple[BorelGrid, BorelGrid] | None = None,
              agree_tol: float = 1e-8, workers: int = 1) -> ArcData:
    """Solve on the panels inside ``|tau| = rho/2`` at Chebyshev-Lobatto angles in ``[gamma_a, gamma_b]``.

    The arc values are analytic in the angle, so they are interpolated
    later rather than solved at every quadrature angle.  The end angles are
    the two rays; with ``check`` the long-ray solutions must agree with
    these short solves on the shared panels to ``agree_tol`` (relative,
    Def-4 norm), otherwise :class:`AgreementError` is raised.
    """
    x_split = (template.rho / 2) ** template.k
    short = template.truncated(x_split)
    j = np.arange(n_angles)
    angles = (gamma_a + gamma_b) / 2 - (gamma_b - gamma_a) / 2 * np.cos(np.pi * j / (n_angles - 1))
    jobs = [(spec, short, th, eps, tol, x_split) for th in angles]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_short_solve, jobs))
    else:
        results = [_short_solve(job) for job in jobs]
    vals = np.array([r[0] for r in results])
    if check is not None:
        for long, (_, short_vals) in zip(check, (results[0], results[-1])):
            tm = short.on_ray(long.gamma)
            ref = long.values[: short.radial.size]
            gap = norm_F(tm.with_values(short_vals - ref), warn=False)
            scale = max(norm_F(tm.with_values(ref), warn=False), 1e-300)
            if gap > agree_tol * scale:
                raise AgreementError(f"cut-disc restrictions disagree on ray {long.gamma:.4g}: {gap / scale:.3g}")
    return ArcData(angles, vals, x_split, template.k)


def arc_integral(arc: ArcData, T: np.ndarray, *, n_min: int = 64) -> np.ndarray:
    """``int k w e^{-(tau/T)^k} dtau/tau`` along the arc, shape ``(nT, n_m)``.

    The Gauss-Legendre rule grows with the phase swing of the exponential.
    """
    T = np.atleast_1d(np.asarray(T, dtype=complex))
    lo, hi = arc.angles[0], arc.angles[-1]
    swing = arc.x_split * np.max(np.abs(T)) ** (-arc.k) * arc.k * (hi - lo)
    n = int(max(n_min, 2 * math.ceil(swing) + 32))
    t, wt = gauss_legendre(n)
    theta = (lo + hi) / 2 + (hi - lo) / 2 * t
    weights = (hi - lo) / 2 * wt
    vals = arc.interpolant(theta)
    rel = wrap(np.subtract.outer(theta, np.angle(T)))
    expo = np.exp(-arc.x_split * np.exp(1j * arc.k * rel) / np.abs(T)[None, :] ** arc.k)
    # dtau / tau = i dtheta
    return 1j * arc.k * np.einsum("a,at,am->tm", weights, expo, vals)


def difference_paths(w_p: BorelGrid, w_q: BorelGrid, arc: ArcData, spec: ProblemSpec,
                     covering: CoveringData | None, p: int, t, z, eps):
    """``(I1, I2, I3, direct)`` for ``u_{p+1} - u_p`` on the product of ``t`` and ``z`` samples."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=complex))
    z_arr = np.atleast_1d(np.asarray(z, dtype=complex))
    T = complex(eps) * t_arr
    n_in_p = w_p.radial.index_of_break(arc.x_split)
    n_in_q = w_q.radial.index_of_break(arc.x_split)
    I1 = laplace_fourier(w_q, T, z_arr, lo=n_in_q)
    I2 = -laplace_fourier(w_p, T, z_arr, lo=n_in_p)
    A = arc_integral(arc, T)
    I3 = np.stack([fourier_inverse(MLine(w_p.m, row), z_arr, w_p.beta) for row in A])
    direct = laplace_fourier(w_q, T, z_arr) - laplace_fourier(w_p, T, z_arr)
    return I1, I2, I3, direct


@dataclass
class SweepRow:
    """One ``eps`` of a flatness sweep together with the diagnostics of its two solves."""

    eps: complex
    supdiff: float
    noise: float
    consistency: float
    max_u: float
    tail_bound: float
    iterations: tuple[int, int]
    max_ratio: float = math.nan
    norms: tuple[float, float] = (math.nan, math.nan)
    varpi: tuple[float, float] = (math.nan, math.nan)
    residuals: tuple[float, float] = (math.nan, math.nan)
    ok: bool = True
    message: str = ""
    solve_seconds: float = field(default=math.nan, compare=False)
    residual_seconds: float = field(default=math.nan, compare=False)

    @property
    def consistent(self) -> bool:
        return self.consistency <= 0.0

    @property
    def ball_ok(self) -> bool:
        return all(n <= v for n, v in zip(self.norms, self.varpi))

    def to_dict(self) -> dict:
        """Plain values; wall-clock times are left out so that outputs are reproducible."""
        return {"eps_abs": abs(self.eps), "eps_arg": float(np.angle(self.eps)), "supdiff": self.supdiff,
                "noise": self.noise, "consistency_excess": self.consistency, "max_u": self.max_u,
                "tail_bound": self.tail_bound, "iterations": list(self.iterations), "max_ratio": self.max_ratio,
                "norms": list(self.norms), "varpi": list(self.varpi), "residuals": list(self.residuals),
                "ok": self.ok, "message": self.message}


def default_sigma(covering: CoveringData, p: int, nu: float, eps0: float, k: float,
                  delta2_fraction: float = 0.5) -> float:
    """``0.5 (delta1 / (delta2 + nu eps0^k))^{1/k}`` capped by the time-sector radius."""
    d1 = min(covering.delta1[p], covering.delta1[(p + 1) % covering.varsigma])
    d2 = delta2_fraction * d1
    return min(0.5 * (d1 / (d2 + nu * eps0**k)) ** (1 / k), covering.time_sector.radius)


def default_sample_grids(covering: CoveringData, sigma: float, beta_prime: float):
    """8 times ``t`` (4 radii, 2 angles) and 8 points ``z`` (4 real parts, 2 imaginary levels)."""
    ap = covering.time_sector.aperture
    radii = sigma * np.array([0.25, 0.5, 0.75, 0.999])
    t = (radii[:, None] * np.exp(1j * np.array([-ap / 4, ap / 4]))[None, :]).ravel()
    z = (np.linspace(-2, 2, 4)[:, None] + 1j * np.array([0.0, beta_prime / 2])[None, :]).ravel()
    return t, z


def _sweep_point(args) -> SweepRow:
    spec, covering, p, eps, t_grid, z_grid, tm_p, tm_q, ledgers, tol, n_angles, crel, cabs = args
    try:
        t0 = time.perf_counter()
        w_p, tr_p = solve_fixed_point(spec, tm_p, eps, tol=tol, ledger=ledgers[0])
        w_q, tr_q = solve_fixed_point(spec, tm_q, eps, tol=tol, ledger=ledgers[1])
        seconds = (time.perf_counter() - t0) / 2
        arc = solve_arc(spec, tm_p, tm_p.gamma, tm_q.gamma, eps, n_angles=n_angles, tol=tol, check=(w_p, w_q))
        T = eps * np.asarray(t_grid)
        I1, I2, I3, direct = difference_paths(w_p, w_q, arc, spec, covering, p, t_grid, z_grid, eps)
        defect = np.abs(I1 + I2 + I3 - direct)
        excess = float(np.max(defect - (crel * np.abs(direct) + cabs)))
        max_u = float(np.max(np.abs(laplace_fourier(w_p, T, z_grid))))
        tail = max(_tail_bound(w_p, T), _tail_bound(w_q, T))
        noise = float(np.max(defect)) + 1e-13 * max_u + tail
        ratios = tr_p.ratios + tr_q.ratios
        t1 = time.perf_counter()
        res = (residual(w_p, spec, None, eps), residual(w_q, spec, None, eps))
        res_seconds = (time.perf_counter() - t1) / 2
        return SweepRow(eps, float(np.max(np.abs(direct))), noise, excess, max_u, tail,
                        (tr_p.iterations, tr_q.iterations), max(ratios) if ratios else 0.0,
                        (tr_p.norms[-1], tr_q.norms[-1]), (ledgers[0].varpi, ledgers[1].varpi),
                        res, solve_seconds=seconds, residual_seconds=res_seconds)
    except Exception as exc:  # a failed eps is recorded, not fatal
        logger.warning("sweep point eps=%s failed: %s", eps, exc)
        return SweepRow(eps, math.nan, math.nan, math.nan, math.nan, math.nan, (0, 0), ok=False, message=str(exc))


def flatness_sweep(spec: ProblemSpec, covering: CoveringData, p: int, eps_list, t_grid, z_grid,
                   template: BorelGrid, *, tol: float = 1e-12, n_angles: int = 40, workers: int = 1,
                   consistency_rel: float = 1e-6, consistency_abs: float = 1e-12, progress=None) -> list[SweepRow]:
    """Sup over ``(t, z)`` of ``|u_{p+1} - u_p|`` for every ``eps`` in the list.

    ``template`` fixes the discretisation; it is turned onto the rays
    ``d_p`` and ``d_{p+1}``.  Each row also stores the worst excess of
    ``|I1+I2+I3-direct|`` over ``consistency_rel |direct| + consistency_abs``
    (non-positive means the check holds) and a noise estimate: the largest
    Cauchy defect, plus ``1e-13`` times the largest ``|u|``, plus the
    Laplace truncation bound.  Rows come back in the order of ``eps_list``.
    """
    q = (p + 1) % covering.varsigma
    tm_p = template.on_ray(covering.directions[p])
    tm_q = template.on_ray(covering.directions[q])
    ledgers = (smallness_ledger(spec, tm_p), smallness_ledger(spec, tm_q))
    jobs = [(spec, covering, p, complex(e), t_grid, z_grid, tm_p, tm_q, ledgers, tol, n_angles,
             consistency_rel, consistency_abs) for e in eps_list]
    rows: list[SweepRow] = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(_sweep_point, jobs):
                rows.append(row)
                if progress is not None:
                    progress(row)
    else:
        for job in jobs:
            rows.append(_sweep_point(job))
            if progress is not None:
                progress(rows[-1])
    return rows


def _linear_fit(xv: np.ndarray, yv: np.ndarray) -> tuple[float, float, float]:
    A = np.vstack([np.ones_like(xv), xv]).T
    coef, *_ = np.linalg.lstsq(A, yv, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((yv - pred) ** 2))
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(coef[0]), float(coef[1]), r2


def gevrey_fit(sweep, k: float, kappa_range=(0.3, 1.5), *, p: int = 0, noise_factor: float = 10.0,
               min_rows: int = 6, n_kappa: int = 1201) -> GevreyFit:
    """Fit ``log supdiff = log K - M |eps|^{-k}`` and scan the exponent.

    ``sweep`` is a list of :class:`SweepRow` or of ``(|eps|, supdiff)`` /
    ``(|eps|, supdiff, noise)`` tuples.  Rows whose difference is below
    ``noise_factor`` times the noise estimate are dropped.
    """
    data = []
    for row in sweep:
        if isinstance(row, SweepRow):
            if row.ok and np.isfinite(row.supdiff):
                data.append((abs(row.eps), row.supdiff, row.noise))
        else:
            e, y, *rest = row
            data.append((abs(e), y, rest[0] if rest else 0.0))
    keep = [(e, y) for e, y, nz in data if y > noise_factor * nz and y > 0]
    if not keep:
        raise FitError("all sweep rows are below the noise floor")
    if len(keep) < min_rows:
        raise FitError(f"only {len(keep)} rows above the noise floor, need {min_rows}")
    e = np.array([a for a, _ in keep])
    ly = np.log(np.array([b for _, b in keep]))
    logK, slope, r2 = _linear_fit(e ** (-k), ly)
    grid = np.linspace(*kappa_range, n_kappa)
    qual = np.array([_linear_fit(e ** (-kk), ly)[2] for kk in grid])
    j = int(np.argmax(qual))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
    res = minimize_scalar(lambda kk: -_linear_fit(e ** (-kk), ly)[2], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-7})
    kappa_hat = float(res.x) if -res.fun >= qual[j] else float(grid[j])
    return GevreyFit(p, logK, -slope, r2, kappa_hat, grid, qual, len(keep))


@dataclass(frozen=True)
class AsymptoticReport:
    coefficients: np.ndarray  # (N, ...) h_0 .. h_{N-1}
    C: float
    M: float
    condition: float
    growth_ok: bool


def asymptotic_coefficients(eps, values, N: int, k: float, *, max_condition: float = 1e12) -> AsymptoticReport:
    """Least-squares polynomial fit ``u(eps) ~ sum_{m<N} h_m eps^m`` at every sample point.

    ``values`` has shape ``(len(eps), ...)``.  The growth report fits
    ``max |h_m| <= C M^m Gamma(1 + m/k)``.
    """
    eps = np.asarray(eps, dtype=complex)
    if eps.size < 2 * N:
        raise FitError(f"need at least {2 * N} samples for N = {N}")
    vals = np.asarray(values, dtype=complex)
    flat = vals.reshape(eps.size, -1)
    scale = np.max(np.abs(eps))
    V = np.vander(eps / scale, N, increasing=True)
    cond = float(np.linalg.cond(V))
    if cond > max_condition:
        raise FitError(f"Vandermonde condition {cond:.3g} too large for N = {N}")
    coef, *_ = np.linalg.lstsq(V, flat, rcond=None)
    coef = coef / (scale ** np.arange(N))[:, None]
    h = coef.reshape((N,) + vals.shape[1:])
    mags = np.max(np.abs(coef), axis=1)
    m_idx = np.arange(N)
    nz = mags > 0
    if nz.sum() >= 2:
        yv = np.log(mags[nz]) - gammaln(1 + m_idx[nz] / k)
        a, b, _ = _linear_fit(m_idx[nz].astype(float), yv)
        M = math.exp(b)
        logC = float(np.max(np.log(mags[nz]) - gammaln(1 + m_idx[nz] / k) - b * m_idx[nz]))
        C = math.exp(logC)
    else:
        C, M = float(mags.max()), 1.0
    ok = bool(np.all(mags <= C * M**m_idx * np.exp(gammaln(1 + m_idx / k)) * (1 + 1e-9)))
    return AsymptoticReport(h, C, M, cond, ok and np.isfinite(C) and np.isfinite(M))
