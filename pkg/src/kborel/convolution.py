"""Weakly singular convolution kernels on a Borel ray.

Every operator here acts along a ray ``tau = r e^{i gamma}``.  With
``x = |tau|^k`` and ``s = y e^{i k gamma}`` the kernel

    tau^k int_0^{tau^k} (tau^k - s)^g2 s^g3 f(s^{1/k}) ds

becomes ``x e^{i k gamma (g2 + g3 + 2)} J(x)`` with the real integral
``J(x) = int_0^x (x - y)^g2 y^g3 f(y) dy``.  ``J`` is discretised once per
radial grid as a real matrix whose rows hold a product-integration rule:
Gauss-Jacobi on ``[x/2, x]`` carrying ``(x - y)^g2`` exactly, and Gauss
rules on a dyadic refinement of ``[0, x/2]`` whose innermost piece carries
``y^g3``.  Off-node values come from the panel interpolant.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import sparse
from scipy.special import gamma as gamma_fn

from .grid import BorelGrid, RadialGrid, gauss_jacobi, gauss_legendre

SQRT_2PI = math.sqrt(2 * math.pi)


class KernelWarning(RuntimeWarning):
    """The kernel exponents break the integrality condition on the cut disc."""


class SeriesError(RuntimeError):
    """The exponential series did not reach its tolerance."""


@dataclass(frozen=True)
class KernelParams:
    gamma2: float
    gamma3: float
    k: float

    def __post_init__(self):
        if self.gamma2 <= -1:
            raise ValueError(f"gamma2 = {self.gamma2} must exceed -1")
        if self.gamma3 < 0:
            raise ValueError(f"gamma3 = {self.gamma3} must be nonnegative")
        if not 0.5 < self.k < 1:
            raise ValueError("k must lie in (1/2, 1)")
        if not self.integral_order:
            warnings.warn(f"k(gamma2+gamma3+2) = {self.total_order:.6g} is not an integer", KernelWarning,
                          stacklevel=2)

    @property
    def total_order(self) -> float:
        return self.k * (self.gamma2 + self.gamma3 + 2)

    @property
    def integral_order(self) -> bool:
        t = self.total_order
        return abs(t - round(t)) < 1e-9 and round(t) >= 0


def power_kernel_rule(X: np.ndarray, gamma2: float, gamma3: float, *, n_right: int = 16, n_left: int = 10,
                      levels: int = 12, ratio: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``y`` and weights so that ``sum w f(y) ~ int_0^X (X-y)^g2 y^g3 f(y) dy``.

    Returns arrays of shape ``(len(X), n_q)``.
    """
    X = np.asarray(X, dtype=float)[:, None]
    t, wt = gauss_jacobi(n_right, gamma2, 0.0)
    y_r = 0.75 * X + 0.25 * X * t
    w_r = wt * (0.25 * X) ** (gamma2 + 1) * y_r**gamma3
    ys, ws = [y_r], [w_r]
    tl, wl = gauss_legendre(n_left)
    hi = 0.5 * X
    for _ in range(levels):
        lo = hi * ratio
        y = (lo + hi) / 2 + (hi - lo) / 2 * tl
        ys.append(y)
        ws.append(wl * (hi - lo) / 2 * (X - y) ** gamma2 * y**gamma3)
        hi = lo
    tj, wj = gauss_jacobi(n_left, 0.0, gamma3)
    y = hi / 2 * (1 + tj)
    ys.append(y)
    ws.append(wj * (hi / 2) ** (gamma3 + 1) * (X - y) ** gamma2)
    return np.concatenate(ys, axis=1), np.concatenate(ws, axis=1)


def symmetric_rule(X: np.ndarray, *, n: int = 8, levels: int = 8, ratio: float = 0.25):
    """Rule for ``int_0^X g1(X-y) g2(y) dy`` refined toward both endpoints."""
    X = np.asarray(X, dtype=float)[:, None]
    tl, wl = gauss_legendre(n)
    ys, ws = [], []
    hi = 0.5 * X
    for _ in range(levels):
        lo = hi * ratio
        ys.append((lo + hi) / 2 + (hi - lo) / 2 * tl)
        ws.append(np.broadcast_to(wl * (hi - lo) / 2, ys[-1].shape))
        hi = lo
    ys.append(hi / 2 * (1 + tl))
    ws.append(np.broadcast_to(wl * hi / 2, ys[-1].shape))
    y = np.concatenate(ys, axis=1)
    w = np.concatenate(ws, axis=1)
    return np.concatenate([y, X - y], axis=1), np.concatenate([w, w], axis=1)


_MATRIX_CACHE: dict = {}


def _grid_key(radial: RadialGrid):
    return (radial.breaks.tobytes(), radial.order)


def kernel_matrix(radial: RadialGrid, gamma2: float, gamma3: float) -> np.ndarray:
    """Real matrix ``J`` with ``(J f)_i ~ int_0^{x_i} (x_i - y)^g2 y^g3 f(y) dy``."""
    key = ("J", _grid_key(radial), float(gamma2), float(gamma3))
    if key not in _MATRIX_CACHE:
        y, w = power_kernel_rule(radial.nodes, gamma2, gamma3)
        idx, coef = radial.interpolation(y)
        n = radial.size
        rows = np.broadcast_to(np.arange(n)[:, None, None], idx.shape)
        vals = w[:, :, None] * coef
        J = sparse.coo_matrix((vals.ravel(), (rows.ravel(), idx.ravel())), shape=(n, n)).toarray()
        J.setflags(write=False)
        _MATRIX_CACHE[key] = J
    return _MATRIX_CACHE[key]


def kernel_operator(grid: BorelGrid, gamma2: float, gamma3: float) -> np.ndarray:
    """Complex matrix of ``C_{k,g2,g3}`` on the ray of ``grid``."""
    J = kernel_matrix(grid.radial, gamma2, gamma3)
    scale = grid.x * grid.phase ** (gamma2 + gamma3 + 2)
    return scale[:, None] * J


def conv_power_kernel(w, params: KernelParams, template: BorelGrid | None = None):
    """Apply ``C_{k,g2,g3}`` to a grid or to a callable.

    If ``w`` is a :class:`BorelGrid` the result is a grid on the same nodes.
    If ``w`` is a callable ``f(tau)`` returning values for an array of
    ``tau`` on the ray (shape ``(n,)`` or ``(n, n_m)``), it is evaluated at
    the quadrature points directly and ``template`` supplies the nodes.
    """
    g2, g3 = params.gamma2, params.gamma3
    if isinstance(w, BorelGrid):
        if abs(w.k - params.k) > 1e-15:
            raise ValueError("kernel order differs from grid order")
        return w.with_values(kernel_operator(w, g2, g3) @ w.values, eps=w.eps)
    if template is None:
        raise ValueError("a template grid is needed for callable input")
    y, wq = power_kernel_rule(template.x, g2, g3)
    tau_q = y ** (1 / params.k) * np.exp(1j * template.gamma)
    fq = np.asarray(w(tau_q.ravel()), dtype=complex)
    fq = fq.reshape(y.shape + fq.shape[1:])
    if fq.ndim == 2:
        integral = np.sum(wq * fq, axis=1)[:, None] * np.ones(template.m.size)
    else:
        integral = np.einsum("iq,iqm->im", wq, fq)
    scale = template.x * template.phase ** (g2 + g3 + 2)
    return template.with_values(scale[:, None] * integral, eps=template.eps)


def ck_constant(k: float) -> float:
    return k / gamma_fn(1 / k - 1)


def ck_params(k: float) -> KernelParams:
    return KernelParams(1 / k - 2, 0.0, k)


def ck_matrix(grid: BorelGrid) -> np.ndarray:
    return ck_constant(grid.k) * kernel_operator(grid, 1 / grid.k - 2, 0.0)


def c_k(w: BorelGrid) -> BorelGrid:
    """``C_k = k / Gamma(1/k - 1) C_{k, 1/k-2, 0}``."""
    return w.with_values(ck_matrix(w) @ w.values, eps=w.eps)


def exp_series(apply: Callable[[np.ndarray], np.ndarray], values: np.ndarray, kappa: float, *,
               tol: float = 1e-12, p_max: int = 60) -> tuple[np.ndarray, int, float]:
    """Partial sums of ``sum_p (-kappa)^p / p! A^p v``.

    Returns the sum, the number of terms used and a tail estimate from the
    observed ratio of consecutive terms.
    """
    total = np.array(values, dtype=complex)
    if kappa == 0:
        return total, 0, 0.0
    term = total.copy()
    prev = np.max(np.abs(term))
    for p in range(1, p_max + 1):
        term = apply(term) * (-kappa / p)
        size = float(np.max(np.abs(term))) if term.size else 0.0
        total = total + term
        acc = float(np.max(np.abs(total))) if total.size else 0.0
        if size == 0 or size <= tol * acc:
            ratio = size / prev if prev > 0 else 0.0
            tail = size * ratio / (1 - ratio) if ratio < 1 else math.inf
            return total, p, tail
        prev = size
    raise SeriesError(f"exp(-kappa C_k) series did not reach tol {tol} in {p_max} terms")


def exp_neg_kappa_ck(w: BorelGrid, kappa: float, *, tol: float = 1e-12, p_max: int = 60) -> BorelGrid:
    """``exp(-kappa C_k) w`` by the truncated exponential series."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    C = ck_matrix(w)
    vals, p, tail = exp_series(lambda v: C @ v, w.values, kappa, tol=tol, p_max=p_max)
    return w.with_values(vals, eps=w.eps, info={"terms": p, "tail": tail})


def exp_matrix(grid: BorelGrid, kappa: float, *, tol: float = 1e-14, p_max: int = 80) -> np.ndarray:
    """Matrix of ``exp(-kappa C_k)`` on the radial nodes of ``grid``."""
    key = ("E", _grid_key(grid.radial), grid.k, grid.phase, float(kappa))
    if key not in _MATRIX_CACHE:
        C = ck_matrix(grid)
        E, _, _ = exp_series(lambda v: C @ v, np.eye(grid.radial.size), kappa, tol=tol, p_max=p_max)
        E.setflags(write=False)
        _MATRIX_CACHE[key] = E
    return _MATRIX_CACHE[key]


def estimate_K1(k: float, nu: float, samples: Sequence[BorelGrid], *, n_max: int = 4,
                safety: float = 1.1) -> float:
    """Smallest ``K1`` with ``|C_k^N f| <= C2 (k/Gamma(1/k-1))^N K1^N x^{N+1} e^{nu x}``.

    ``C2`` is the best constant with ``|f| <= C2 x e^{nu x}`` on the grid.
    The maximum over ``N = 1..n_max`` and all samples is multiplied by
    ``safety``.
    """
    if not samples:
        raise ValueError("need at least one sample")
    best = 0.0
    c = ck_constant(k)
    for f in samples:
        x = f.x[:, None]
        envelope = x * np.exp(nu * x)
        C2 = np.max(np.abs(f.values) / envelope)
        if C2 == 0:
            continue
        C = ck_matrix(f)
        g = f.values
        for N in range(1, n_max + 1):
            g = C @ g
            ratio = np.max(np.abs(g) / (C2 * c**N * x ** (N + 1) * np.exp(nu * x)))
            best = max(best, ratio ** (1 / N))
    if best == 0:
        raise ValueError("all samples vanish")
    return safety * best


class SmallTauError(ValueError):
    """A factor of the nonlinear product does not vanish like ``tau^k`` at 0."""


class NonlinearOperator:
    """Discrete form of ``tau^k int int Q1 w1 Q2 w2 / ((tau^k - s) s) ds dm1``.

    The phases cancel on a ray, leaving
    ``x int_0^x g1(x - y, .) * g2(y, .) dy`` with ``g_i = Q_i(im) w_i / x`` and
    ``*`` the trapezoid convolution in ``m`` (zero extension).  The
    ``(2 pi)^{-1/2}`` factor is not included.
    """

    def __init__(self, radial: RadialGrid, m: np.ndarray, *, tilt: float = 0.0, chunk: int = 16):
        self.radial = radial
        self.tilt = float(tilt)
        self.m = np.asarray(m, dtype=float)
        self.h = float(self.m[1] - self.m[0])
        n = radial.size
        x = radial.nodes
        y, w = symmetric_rule(x)
        self.nq = y.shape[1]
        self.weights = w.ravel()
        nm = self.m.size
        self.nfft = sfft.next_fast_len(2 * nm - 1)
        self.offset = (nm - 1) // 2
        ia, ca = radial.interpolation((x[:, None] - y))
        ib, cb = radial.interpolation(y)
        rows = np.repeat(np.arange(n * self.nq), radial.order)
        self.PA = sparse.csr_matrix((ca.ravel(), (rows, ia.ravel())), shape=(n * self.nq, n))
        self.PB = sparse.csr_matrix((cb.ravel(), (rows, ib.ravel())), shape=(n * self.nq, n))
        self.chunk = chunk
        self.x = x
        self._blocks = [(start, min(n, start + chunk),
                         self.PA[start * self.nq:min(n, start + chunk) * self.nq],
                         self.PB[start * self.nq:min(n, start + chunk) * self.nq])
                        for start in range(0, n, chunk)]

    def _convolve(self, g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
        n, nm = g1.shape
        # the interpolation matrices are real: gather on a float view of the spectra
        F1 = sfft.fft(g1, self.nfft, axis=1).view(float)
        F2 = sfft.fft(g2, self.nfft, axis=1).view(float)
        out = np.empty((n, nm), dtype=complex)
        for start, stop, PA, PB in self._blocks:
            A = (PA @ F1).view(complex)
            B = (PB @ F2).view(complex)
            wq = self.weights[start * self.nq:stop * self.nq, None]
            S = (wq * A * B).reshape(stop - start, self.nq, self.nfft).sum(axis=1)
            out[start:stop] = sfft.ifft(S, axis=1)[:, self.offset:self.offset + nm]
        return out * self.h

    def integrate(self, g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
        """``x_i sum_q w_q (g1(x_i - y_q) * g2(y_q))(m_j)`` for all nodes.

        With ``tilt > 0`` the factors are multiplied by ``e^{+-tilt m}``
        before the FFT so that the tails, which the weighted norms magnify
        by ``e^{tilt |m|}``, keep their relative accuracy.
        """
        if self.tilt == 0:
            return self._convolve(g1, g2) * self.x[:, None]
        e = np.exp(self.tilt * self.m)[None, :]
        plus = self._convolve(g1 * e, g2 * e) / e
        minus = self._convolve(g1 / e, g2 / e) * e
        out = np.where(self.m[None, :] >= 0, plus, minus)
        return out * self.x[:, None]

    def apply(self, w1: np.ndarray, w2: np.ndarray, Q1m: np.ndarray, Q2m: np.ndarray) -> np.ndarray:
        x = self.x[:, None]
        return self.integrate(Q1m[None, :] * w1 / x, Q2m[None, :] * w2 / x)

    def envelope(self, env: np.ndarray) -> np.ndarray:
        """``sum_n |P_n(y_q)| env_n`` at every quadrature point, for both factors."""
        la = abs(self.PA) @ env
        lb = abs(self.PB) @ env
        return la.reshape(-1, self.nq), lb.reshape(-1, self.nq)


def nonlinear_operator(radial: RadialGrid, m: np.ndarray, tilt: float = 0.0) -> NonlinearOperator:
    key = ("NL", _grid_key(radial), np.asarray(m).tobytes(), float(tilt))
    if key not in _MATRIX_CACHE:
        _MATRIX_CACHE[key] = NonlinearOperator(radial, m, tilt=tilt)
    return _MATRIX_CACHE[key]


def check_small_tau(values: np.ndarray, radial: RadialGrid, factor: float = 10.0) -> None:
    """Reject grids whose ``|w|/x`` blows up across the first panel."""
    x = radial.nodes
    first = np.max(np.abs(values[0])) / x[0]
    last = np.max(np.abs(values[radial.order - 1])) / x[radial.order - 1]
    if first > factor * last and first > 0:
        raise SmallTauError(f"|w|/|tau|^k grows toward 0 ({first:.3g} vs {last:.3g}); w must vanish like tau^k")


def nonlinear_product(w1: BorelGrid, w2: BorelGrid, Q1, Q2) -> BorelGrid:
    """``(2 pi)^{-1/2} tau^k int_0^{tau^k} int Q1 w1 Q2 w2 / ((tau^k - s) s) dm1 ds`` on the grid."""
    if w1.radial is not w2.radial and _grid_key(w1.radial) != _grid_key(w2.radial):
        raise ValueError("factors live on different grids")
    check_small_tau(w1.values, w1.radial)
    check_small_tau(w2.values, w2.radial)
    op = nonlinear_operator(w1.radial, w1.m, w1.beta)
    vals = op.apply(w1.values, w2.values, Q1(1j * w1.m), Q2(1j * w1.m)) / SQRT_2PI
    return w1.with_values(vals, eps=w1.eps)
