"""Laplace transforms of order k, the formal Borel transform, inverse Fourier
transform and the two weighted sup norms."""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import gamma as gamma_fn

from .grid import BorelGrid, MLine

__all__ = [
    "BorelGrid", "MLine", "BoundaryWarning", "AdmissibilityError", "admissibility",
    "laplace_k", "laplace_k_borel", "borel_k", "fourier_inverse", "norm_beta_mu", "norm_F",
]


class BoundaryWarning(RuntimeWarning):
    """The sup of a weighted norm sits on the edge of the grid."""


class AdmissibilityError(ValueError):
    """A Laplace direction does not decay for the requested argument."""


def wrap(angle):
    """Reduce an angle to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2 * np.pi)


def admissibility(gamma: float, k: float, T: complex) -> float:
    """``cos(k (gamma - arg T))`` with the angle difference taken principal."""
    return float(np.cos(k * wrap(gamma - np.angle(T))))


def _laplace_rule(grid: BorelGrid, T: complex, delta1: float, measure: str):
    """Nodes, weights and interpolated values for the Laplace quadrature at ``T``.

    Panels are subdivided where ``e^{-(u/T)^k}`` varies faster than the grid
    resolves and ``w`` is read from its panel interpolant there.
    """
    c = admissibility(grid.gamma, grid.k, T)
    if c < delta1:
        raise AdmissibilityError(f"cos(k(gamma - arg T)) = {c:.4g} < {delta1:g}")
    decay = c / abs(T) ** grid.k - grid.nu
    if decay <= 0:
        raise AdmissibilityError(f"|T| too large for the grid growth: decay rate {decay:.4g}")
    y, wq = grid.radial.refined(1 / abs(T) ** grid.k)
    # (u/T)^k with the principal branch of the quotient
    kern = np.exp(-y * np.exp(1j * grid.k * wrap(grid.gamma - np.angle(T))) / abs(T) ** grid.k)
    if measure == "def1":
        weights = wq * kern / y
    else:
        weights = wq * kern * grid.phase / T**grid.k
    return weights, grid.radial.interpolate(grid.values, y), decay


def _tail(grid: BorelGrid, decay: float, column) -> np.ndarray:
    """Bound of the integral beyond ``x_max`` from the Def-4 envelope of the last panel."""
    X = grid.radial.x_max
    x = grid.x[-grid.radial.order:]
    last = np.abs(grid.values[-grid.radial.order:][:, column])
    wgt = (1 + x**2) / x * np.exp(-grid.nu * x)
    c_env = (last * wgt.reshape((-1,) + (1,) * (last.ndim - 1))).max(axis=0)
    return c_env * math.exp(-decay * X) / (decay * (1 + X**2))


def laplace_k(w: BorelGrid, T: complex, m_index=None, *, delta1: float = 1e-3, tol: float = 1e-10,
              return_bound: bool = False):
    """Order-k Laplace transform ``k int_0^inf w(u) e^{-(u/T)^k} du/u`` along the ray of ``w``.

    In the ray variable ``x = |u|^k`` this is ``int w e^{-(u/T)^k} dx/x``.
    ``m_index`` selects one Fourier column; ``None`` returns all columns.
    Raises :class:`AdmissibilityError` when the direction is not admissible
    for ``T`` or when the truncation bound exceeds ``tol`` (relative to the
    magnitude of the result, floored at one).
    """
    weights, values, decay = _laplace_rule(w, T, delta1, "def1")
    cols = slice(None) if m_index is None else m_index
    vals = weights @ values[:, cols]
    bound = _tail(w, decay, cols)
    if np.any(bound > tol * np.maximum(1.0, np.abs(vals))):
        raise AdmissibilityError(f"truncation bound {np.max(bound):.3g} exceeds tolerance")
    return (vals, bound) if return_bound else vals


def laplace_k_borel(w: BorelGrid, eps: complex, m_index=None, *, delta1: float = 1e-3, tol: float = 1e-10,
                    return_bound: bool = False):
    """Laplace transform in the formal-series normalisation
    ``eps^{-k} int_0^inf B(u) e^{-(u/eps)^k} k u^{k-1} du``.

    It inverts :func:`borel_k`: the image of ``u^n / Gamma(1 + n/k)`` is
    ``eps^n``.
    """
    weights, values, decay = _laplace_rule(w, eps, delta1, "def7")
    cols = slice(None) if m_index is None else m_index
    vals = weights @ values[:, cols]
    # x / (1 + x^2) <= 1/2 turns the Def-4 envelope into C e^{nu x} / 2
    bound = _tail(w, decay, cols) * (1 + w.radial.x_max**2) / (2 * abs(eps) ** w.k)
    if np.any(bound > tol * np.maximum(1.0, np.abs(vals))):
        raise AdmissibilityError(f"truncation bound {np.max(bound):.3g} exceeds tolerance")
    return (vals, bound) if return_bound else vals


def borel_k(coefficients, k: float) -> np.ndarray:
    """Formal Borel transform of order k: ``a_j -> a_j / Gamma(1 + j/k)``."""
    a = np.asarray(coefficients, dtype=complex)
    return a / gamma_fn(1 + np.arange(a.size) / k)


def fourier_inverse(f: MLine, z, beta: float, *, return_bound: bool = False):
    """Trapezoid rule for ``(2 pi)^{-1/2} int f(m) e^{i z m} dm``.

    The rule is spectrally accurate for smooth decaying ``f`` and second
    order across the kink of ``e^{-beta |m|}`` at ``m = 0``.  ``z`` may be an
    array.  The tail bound uses the edge values and the decay ``beta``.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z.imag) >= beta):
        raise ValueError("need |Im z| < beta")
    m = f.m
    h = f.h
    wts = np.full(m.size, h)
    wts[[0, -1]] = h / 2
    kern = np.exp(1j * np.multiply.outer(z, m))
    vals = (kern * (wts * f.values)).sum(axis=-1) / math.sqrt(2 * math.pi)
    if not return_bound:
        return vals
    M = m[-1]
    edge = max(abs(f.values[0]), abs(f.values[-1])) * math.exp(beta * M)
    rate = beta - np.abs(z.imag)
    bound = 2 * edge * np.exp(-rate * M) / (rate * math.sqrt(2 * math.pi))
    return vals, bound


def norm_beta_mu(f: MLine, beta: float, mu: float, *, warn: bool = True) -> float:
    """Def-2 norm ``max (1+|m|)^mu e^{beta|m|} |f(m)|`` over the nodes."""
    am = np.abs(f.m)
    vals = (1 + am) ** mu * np.exp(beta * am) * np.abs(f.values)
    j = int(np.argmax(vals))
    if warn and vals[j] > 0 and j in (0, vals.size - 1):
        warnings.warn("norm attained at the edge of the m-grid", BoundaryWarning, stacklevel=2)
    return float(vals[j])


def norm_F(w: BorelGrid, *, warn: bool = True) -> float:
    """Def-4 norm on the grid nodes."""
    vals = w.weight() * np.abs(w.values)
    flat = int(np.argmax(vals))
    best = float(vals.flat[flat])
    if warn and best > 0:
        i, j = np.unravel_index(flat, vals.shape)
        if i == vals.shape[0] - 1 or j in (0, vals.shape[1] - 1):
            warnings.warn("norm attained at the edge of the grid", BoundaryWarning, stacklevel=2)
    return best


def m_convolution(f: MLine, g: MLine) -> MLine:
    """Trapezoid convolution ``int f(m - m1) g(m1) dm1`` on the shared grid, zero outside it."""
    if f.m.shape != g.m.shape or not np.allclose(f.m, g.m):
        raise ValueError("factors live on different m-grids")
    n = f.m.size
    full = np.convolve(f.values, g.values) * f.h
    return MLine(f.m, full[(n - 1) // 2:(n - 1) // 2 + n])
