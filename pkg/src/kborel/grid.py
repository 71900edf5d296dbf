"""Discretisation of one Borel ray and of the Fourier line.

Along a ray ``tau = r e^{i gamma}`` everything is parametrised by
``x = |tau|^k`` so that ``tau^k = x e^{i k gamma}``.  The radial axis is a
union of Gauss-Legendre panels, geometrically graded toward ``x = 0`` and
with a panel edge at the cut-disc split point.  Off-node values come from
the Lagrange polynomial of the panel containing the point.
"""
from __future__ import annotations

import math

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[-1, 1]``."""
    t, w = leggauss(n)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


@lru_cache(maxsize=None)
def gauss_jacobi(n: int, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``(1 - t)^alpha (1 + t)^beta`` on ``[-1, 1]``."""
    if alpha == 0 and beta == 0:
        return gauss_legendre(n)
    t, w = roots_jacobi(n, alpha, beta)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def lagrange_basis(t: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Values of the Lagrange cardinal polynomials at ``t``, shape ``(len(t), len(nodes))``."""
    t = np.asarray(t, dtype=float)[:, None, None]
    n = nodes.size
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    num = t - nodes[None, None, :]
    ratio = num / diff[None, :, :]
    idx = np.arange(n)
    ratio[:, idx, idx] = 1.0
    return np.prod(ratio, axis=2)


@dataclass(frozen=True)
class RadialGrid:
    """Composite Gauss-Legendre panels on ``[0, breaks[-1]]`` in the variable ``x``."""

    breaks: np.ndarray
    order: int = 10

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        if b[0] != 0 or np.any(np.diff(b) <= 0):
            raise ValueError("breaks must start at 0 and increase strictly")
        b.setflags(write=False)
        object.__setattr__(self, "breaks", b)

    @property
    def n_panels(self) -> int:
        return self.breaks.size - 1

    @property
    def size(self) -> int:
        return self.n_panels * self.order

    @property
    def x_max(self) -> float:
        return float(self.breaks[-1])

    @cached_property
    def nodes(self) -> np.ndarray:
        t, _ = gauss_legendre(self.order)
        a, b = self.breaks[:-1, None], self.breaks[1:, None]
        return ((a + b) / 2 + (b - a) / 2 * t[None, :]).ravel()

    @cached_property
    def weights(self) -> np.ndarray:
        _, w = gauss_legendre(self.order)
        h = np.diff(self.breaks)[:, None] / 2
        return (h * w[None, :]).ravel()

    def panel_of(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        p = np.searchsorted(self.breaks, y, side="right") - 1
        return np.clip(p, 0, self.n_panels - 1)

    def interpolation(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Gather indices and coefficients so that ``f(y) ~ sum(coef * f[idx], -1)``."""
        y = np.asarray(y, dtype=float)
        shape = y.shape
        y = y.ravel()
        p = self.panel_of(y)
        a, b = self.breaks[p], self.breaks[p + 1]
        t = (2 * y - a - b) / (b - a)
        nodes, _ = gauss_legendre(self.order)
        coef = lagrange_basis(t, nodes)
        idx = p[:, None] * self.order + np.arange(self.order)[None, :]
        return idx.reshape(shape + (self.order,)), coef.reshape(shape + (self.order,))

    def interpolate(self, values: np.ndarray, y) -> np.ndarray:
        """Evaluate the panel interpolant of nodal ``values`` (first axis radial) at ``y``."""
        idx, coef = self.interpolation(y)
        gathered = values[idx]
        extra = (None,) * (values.ndim - 1)
        return np.sum(coef[(...,) + extra] * gathered, axis=idx.ndim - 1)

    def refined(self, rate: float, lo: int = 0, hi: int | None = None,
                max_sub: int = 256) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and weights on the panels holding nodes ``lo:hi``, each split
        so that ``rate`` times the sub-panel width stays below 2.

        Used for integrands that oscillate or decay faster than the grid resolves.
        """
        hi = self.size if hi is None else hi
        t, wt = gauss_legendre(self.order)
        ys, ws = [], []
        for j in range(lo // self.order, hi // self.order):
            a, b = self.breaks[j], self.breaks[j + 1]
            s = int(min(max(math.ceil(rate * (b - a) / 2), 1), max_sub))
            edges = np.linspace(a, b, s + 1)
            h = np.diff(edges)[:, None] / 2
            ys.append(((edges[:-1, None] + edges[1:, None]) / 2 + h * t[None, :]).ravel())
            ws.append((h * wt[None, :]).ravel())
        return np.concatenate(ys), np.concatenate(ws)

    def truncate(self, x_end: float) -> "RadialGrid":
        """Prefix grid made of the panels ending at the break ``x_end``."""
        j = int(np.argmin(np.abs(self.breaks - x_end)))
        if not np.isclose(self.breaks[j], x_end, rtol=1e-12, atol=0) or j == 0:
            raise ValueError(f"{x_end} is not a panel break")
        return RadialGrid(self.breaks[: j + 1].copy(), self.order)

    def index_of_break(self, x_end: float) -> int:
        """Number of nodes lying before the break ``x_end``."""
        j = int(np.argmin(np.abs(self.breaks - x_end)))
        return j * self.order


def make_radial_grid(x_max: float, x_split: float, *, n_inner: int = 8, inner_ratio: float = 0.25,
                     n_outer: int = 14, outer_power: float = 1.5, order: int = 10) -> RadialGrid:
    """Graded panel grid on ``[0, x_max]`` with a break at ``x_split``.

    Inside ``[0, x_split]`` the breaks are ``x_split * inner_ratio^j``;
    beyond it ``n_outer`` panels are spaced by a power law that is finer
    near ``x_split``.
    """
    if not 0 < x_split < x_max:
        raise ValueError("need 0 < x_split < x_max")
    inner = x_split * inner_ratio ** np.arange(n_inner, -1, -1)
    s = np.linspace(0.0, 1.0, n_outer + 1)[1:] ** outer_power
    outer = x_split + (x_max - x_split) * s
    return RadialGrid(np.concatenate(([0.0], inner, outer)), order)


def uniform_m_grid(n: int, m_max: float) -> np.ndarray:
    """Odd-sized uniform grid symmetric about 0."""
    if n % 2 == 0:
        raise ValueError("use an odd number of Fourier nodes so m = 0 is a node")
    return np.linspace(-m_max, m_max, n)


@dataclass(frozen=True)
class MLine:
    """Values of a function of ``m`` on the shared Fourier grid."""

    m: np.ndarray
    values: np.ndarray

    @property
    def h(self) -> float:
        return float(self.m[1] - self.m[0])


@dataclass(frozen=True)
class BorelGrid:
    """A Borel-plane function on one ray, sampled on radial x Fourier nodes."""

    gamma: float
    radial: RadialGrid
    m: np.ndarray
    values: np.ndarray
    nu: float
    beta: float
    mu: float
    k: float
    rho: float
    eps: complex = 0j
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if abs(self.gamma) >= np.pi:
            raise ValueError("ray direction on the cut")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        m = np.asarray(self.m, dtype=float)
        if not np.allclose(m, -m[::-1]):
            raise ValueError("m nodes must be symmetric about 0")
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.radial.size, m.size):
            raise ValueError(f"values shape {vals.shape} != {(self.radial.size, m.size)}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "eps", complex(self.eps))

    @classmethod
    def template(cls, gamma: float, radial: RadialGrid, m, *, nu: float, beta: float, mu: float,
                 k: float, rho: float) -> "BorelGrid":
        m = np.asarray(m, dtype=float)
        return cls(gamma, radial, m, np.zeros((radial.size, m.size), complex), nu, beta, mu, k, rho)

    @property
    def x(self) -> np.ndarray:
        return self.radial.nodes

    @property
    def r(self) -> np.ndarray:
        return self.radial.nodes ** (1 / self.k)

    @property
    def tau(self) -> np.ndarray:
        return self.r * np.exp(1j * self.gamma)

    @property
    def phase(self) -> complex:
        """``e^{i k gamma}``, the argument of ``tau^k`` on this ray."""
        return complex(np.exp(1j * self.k * self.gamma))

    @property
    def tau_k(self) -> np.ndarray:
        return self.x * self.phase

    @property
    def h(self) -> float:
        return float(self.m[1] - self.m[0])

    def with_values(self, values, *, eps: complex | None = None, info: dict | None = None) -> "BorelGrid":
        return BorelGrid(self.gamma, self.radial, self.m, values, self.nu, self.beta, self.mu, self.k,
                         self.rho, self.eps if eps is None else eps, dict(info or {}))

    def zeros(self) -> "BorelGrid":
        return self.with_values(np.zeros_like(self.values))

    def on_ray(self, gamma: float) -> "BorelGrid":
        """Same discretisation on another direction, zero values."""
        return BorelGrid(gamma, self.radial, self.m, np.zeros_like(self.values), self.nu, self.beta,
                         self.mu, self.k, self.rho, self.eps)

    def truncated(self, x_end: float) -> "BorelGrid":
        radial = self.radial.truncate(x_end)
        return BorelGrid(self.gamma, radial, self.m, self.values[: radial.size], self.nu, self.beta,
                         self.mu, self.k, self.rho, self.eps)

    def weight(self) -> np.ndarray:
        """Def-4 weight at every node."""
        x = self.x[:, None]
        am = np.abs(self.m)[None, :]
        return (1 + am) ** self.mu * (1 + x**2) / x * np.exp(self.beta * am - self.nu * x)

    def metadata(self) -> dict:
        return {
            "gamma": self.gamma, "k": self.k, "nu": self.nu, "beta": self.beta, "mu": self.mu,
            "rho": self.rho, "eps": [self.eps.real, self.eps.imag],
            "breaks": self.radial.breaks.tolist(), "order": self.radial.order,
            "m": self.m.tolist(), "info": _jsonable(self.info),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


HEADER = ("gamma", "k", "nu", "beta", "mu", "rho", "eps_re", "eps_im")


def save_grid(grid: BorelGrid, path) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and ``path`` with suffix ``.json`` (metadata)."""
    path = Path(path)
    meta_path = path.with_suffix(".json")
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(HEADER)
        wr.writerow([repr(float(v)) for v in (grid.gamma, grid.k, grid.nu, grid.beta, grid.mu, grid.rho,
                                              grid.eps.real, grid.eps.imag)])
        wr.writerow(("r", "m", "re", "im"))
        r = grid.r
        for i in range(r.size):
            for j in range(grid.m.size):
                v = grid.values[i, j]
                wr.writerow((repr(float(r[i])), repr(float(grid.m[j])), repr(float(v.real)), repr(float(v.imag))))
    meta_path.write_text(json.dumps(grid.metadata(), indent=2, sort_keys=True) + "\n")
    return path, meta_path


def load_grid(path) -> BorelGrid:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    with path.open(newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        head = [float(v) for v in next(rd)]
        next(rd)
        rows = np.array([[float(v) for v in row] for row in rd])
    radial = RadialGrid(np.array(meta["breaks"]), int(meta["order"]))
    m = np.array(meta["m"])
    values = (rows[:, 2] + 1j * rows[:, 3]).reshape(radial.size, m.size)
    gamma, k, nu, beta, mu, rho, er, ei = head
    return BorelGrid(gamma, radial, m, values, nu, beta, mu, k, rho, complex(er, ei), meta.get("info", {}))
