"""Problem data, hypothesis checks and the Borel-plane forcing term.

A problem is described by a :class:`ProblemSpec`: the order ``k``, the
polynomials ``Q, Q1, Q2, R_1..R_D``, the perturbation levels and the forcing
profiles ``F_n(m, eps)``.  Everything here is immutable and pure.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln, rgamma

logger = logging.getLogger(__name__)

MAX_INDEX_SET = 16


class SpecError(ValueError):
    """Raised for structurally invalid problem data."""


@dataclass(frozen=True)
class ComplexPolynomial:
    """Polynomial with complex coefficients in ascending degree."""

    coefficients: tuple[complex, ...]

    def __post_init__(self):
        coeffs = tuple(complex(c) for c in self.coefficients)
        if not coeffs:
            raise SpecError("polynomial needs at least one coefficient")
        if coeffs[-1] == 0:
            raise SpecError("leading coefficient must be nonzero")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "ComplexPolynomial":
        """Build from ``[[re, im], ...]`` pairs (plain numbers are accepted too)."""
        coeffs = []
        for p in pairs:
            if isinstance(p, (int, float, complex)):
                coeffs.append(complex(p))
            else:
                re, im = p
                coeffs.append(complex(re, im))
        return cls(tuple(coeffs))

    def to_pairs(self) -> list[list[float]]:
        return [[c.real, c.imag] for c in self.coefficients]

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def lead(self) -> complex:
        return self.coefficients[-1]

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        out = np.zeros_like(x)
        for c in reversed(self.coefficients):
            out = out * x + c
        return out if out.ndim else complex(out)

    def disc_bound(self, radius: float) -> float:
        """Upper bound of ``|p(eps)|`` on the closed disc of the given radius."""
        return float(sum(abs(c) * radius**j for j, c in enumerate(self.coefficients)))


ONE = ComplexPolynomial((1.0,))


@dataclass(frozen=True)
class Level:
    """One perturbation level ``l`` of the equation."""

    index: int
    c: complex
    d: int
    delta: int
    Delta: int
    kappa: float
    A: Mapping[int, ComplexPolynomial]

    def __post_init__(self):
        object.__setattr__(self, "c", complex(self.c))
        object.__setattr__(self, "A", dict(sorted(self.A.items())))
        if any(n < 0 for n in self.A):
            raise SpecError(f"level {self.index}: index set I_l must lie in N")
        if min(self.d, self.delta, self.Delta) < 0:
            raise SpecError(f"level {self.index}: d, delta, Delta must be nonnegative")

    @property
    def eps_power(self) -> int:
        return self.Delta - self.d + self.delta


@dataclass(frozen=True)
class ForcingMode:
    """Closed-form profile ``amp (1+|m|)^-mu' e^{-beta'|m|} modal(freq m) P(eps)``.

    ``n`` is the power of ``T`` the mode multiplies.  ``modal`` is one of
    ``"none"``, ``"cos"`` or ``"sin"``.
    """

    n: int
    amplitude: complex = 1.0
    mu_prime: float = 0.0
    beta_prime: float = 0.0
    modal: str = "none"
    frequency: float = 0.0
    eps_poly: ComplexPolynomial = ONE

    def __post_init__(self):
        if self.n < 1:
            raise SpecError("forcing modes need n >= 1")
        if self.modal not in ("none", "cos", "sin"):
            raise SpecError(f"unknown modal factor {self.modal!r}")
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    def profile(self, m):
        m = np.asarray(m, dtype=float)
        base = self.amplitude * (1 + np.abs(m)) ** (-self.mu_prime) * np.exp(-self.beta_prime * np.abs(m))
        if self.modal == "cos":
            base = base * np.cos(self.frequency * m)
        elif self.modal == "sin":
            base = base * np.sin(self.frequency * m)
        return base

    def __call__(self, m, eps):
        return self.profile(m) * self.eps_poly(eps)


@dataclass(frozen=True)
class GeometricForcing:
    """Infinite family ``F_n = ratio^-n * mode profile`` for every ``n >= 1``."""

    ratio: float
    mode: ForcingMode

    def __post_init__(self):
        if self.ratio <= 0:
            raise SpecError("geometric forcing ratio must be positive")


@dataclass(frozen=True)
class ForcingSpec:
    modes: tuple[ForcingMode, ...]
    K0: float
    T0: float
    beta: float
    mu: float
    geometric: GeometricForcing | None = None

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.K0 <= 0 or self.T0 <= 0 or self.beta <= 0:
            raise SpecError("K0, T0 and beta must be positive")

    @property
    def is_zero(self) -> bool:
        return self.geometric is None and all(md.amplitude == 0 for md in self.modes)

    def finite_indices(self) -> list[int]:
        return sorted({md.n for md in self.modes})

    def coefficient(self, n: int, m, eps) -> np.ndarray:
        """``F_n(m, eps)`` on an array of ``m``."""
        m = np.asarray(m, dtype=float)
        out = np.zeros(m.shape, dtype=complex)
        for md in self.modes:
            if md.n == n:
                out += md(m, eps)
        if self.geometric is not None:
            out += self.geometric.ratio ** (-n) * self.geometric.mode(m, eps)
        return out

    def sup_norm(self, n: int, m, eps0: float) -> float:
        """Upper bound of ``sup_{|eps|<=eps0} ||F_n||_(beta,mu)`` on the m-grid."""
        m = np.asarray(m, dtype=float)
        weight = (1 + np.abs(m)) ** self.mu * np.exp(self.beta * np.abs(m))
        acc = np.zeros(m.shape)
        for md in self.modes:
            if md.n == n:
                acc += np.abs(md.profile(m)) * md.eps_poly.disc_bound(eps0)
        if self.geometric is not None:
            g = self.geometric
            acc += g.ratio ** (-n) * np.abs(g.mode.profile(m)) * g.mode.eps_poly.disc_bound(eps0)
        return float(np.max(weight * acc)) if acc.size else 0.0


@dataclass(frozen=True)
class ProblemSpec:
    """All data of the singularly perturbed problem.

    ``R`` holds ``R_1, ..., R_D`` so ``R[-1]`` is ``R_D``; ``levels`` holds
    the ``D - 1`` perturbation levels.
    """

    k: float
    alpha_D: float
    c12: complex
    cf: complex
    Q: ComplexPolynomial
    Q1: ComplexPolynomial
    Q2: ComplexPolynomial
    R: tuple[ComplexPolynomial, ...]
    levels: tuple[Level, ...]
    forcing: ForcingSpec
    eps0: float
    name: str = field(default="problem", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "R", tuple(self.R))
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "c12", complex(self.c12))
        object.__setattr__(self, "cf", complex(self.cf))
        if len(self.R) != len(self.levels) + 1:
            raise SpecError(f"need D = {len(self.levels) + 1} polynomials R_l, got {len(self.R)}")
        for i, lev in enumerate(self.levels, start=1):
            if lev.index != i:
                raise SpecError(f"levels must be numbered 1..D-1 in order, got {lev.index} at {i}")
        if self.alpha_D <= 0 or self.eps0 <= 0:
            raise SpecError("alpha_D and eps0 must be positive")

    @property
    def D(self) -> int:
        return len(self.levels) + 1

    @property
    def R_D(self) -> ComplexPolynomial:
        return self.R[-1]

    def level(self, l: int) -> Level:
        if not 1 <= l <= len(self.levels):
            raise SpecError(f"no level {l}")
        return self.levels[l - 1]

    def replace(self, **changes) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]
    annulus: dict
    warnings: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "annulus": self.annulus,
            "warnings": list(self.warnings),
        }


def check_order(k: float) -> None:
    if not 0.5 < k < 1:
        raise SpecError(f"hypothesis k in (1/2, 1) violated: k = {k}")


def annulus_data(spec: ProblemSpec, m_grid) -> dict:
    """Measured radii, bisector and half-aperture of the range of ``Q(im)/R_D(im)``."""
    m = np.asarray(m_grid, dtype=float)
    ratio = spec.Q(1j * m) / spec.R_D(1j * m)
    if spec.Q.degree == spec.R_D.degree:
        ratio = np.append(ratio, spec.Q.lead / spec.R_D.lead)
    mod = np.abs(ratio)
    args = np.angle(ratio)
    centre = float(np.angle(np.mean(np.exp(1j * args))))
    spread = float(np.max(np.abs(np.angle(np.exp(1j * (args - centre))))))
    return {"r1": float(mod.min()), "r2": float(mod.max()), "d": centre, "eta": spread}


def validate_spec(spec: ProblemSpec, m_grid) -> ValidationReport:
    """Check every structural hypothesis of the problem on a working m-grid.

    Raises :class:`SpecError` only when ``k`` leaves ``(1/2, 1)``; all other
    violations are reported as failed checks.
    """
    check_order(spec.k)
    m = np.asarray(m_grid, dtype=float)
    if m.size == 0:
        raise SpecError("m_grid must be nonempty")
    if not np.allclose(np.sort(m), -np.sort(m)[::-1]):
        raise SpecError("m_grid must be symmetric about 0")
    k = spec.k
    checks: list[Check] = []
    notes: list[str] = []

    deltas = [lev.delta for lev in spec.levels]
    checks.append(Check("delta_1 = 1", bool(deltas) and deltas[0] == 1, f"deltas={deltas}"))
    increasing = all(b > a for a, b in zip(deltas, deltas[1:]))
    checks.append(Check("delta_l strictly increasing", increasing, f"deltas={deltas}"))
    for lev in spec.levels:
        bound = lev.delta * (k + 1)
        checks.append(Check(f"d_{lev.index} > delta_{lev.index}(k+1)", lev.d > bound, f"{lev.d} vs {bound:.6g}"))
        checks.append(Check(f"Delta_{lev.index} - d_{lev.index} + delta_{lev.index} >= 0", lev.eps_power >= 0,
                            f"{lev.eps_power}"))
        checks.append(Check(f"kappa_{lev.index} > 0", lev.kappa > 0, f"{lev.kappa}"))
        checks.append(Check(f"|I_{lev.index}| <= {MAX_INDEX_SET}", len(lev.A) <= MAX_INDEX_SET, f"{len(lev.A)}"))
        for n in lev.A:
            total = k * (((n + lev.d - lev.delta * (k + 1)) / k - 1) + (lev.delta - 1) + 2)
            if abs(total - round(total)) > 1e-9:
                notes.append(f"level {lev.index}, n={n}: k(gamma2+gamma3+2) = {total:.6g} is not an integer")

    degQ, degRD = spec.Q.degree, spec.R_D.degree
    checks.append(Check("deg Q = deg R_D", degQ == degRD, f"{degQ} vs {degRD}"))
    checks.append(Check("deg R_D >= deg R_l", all(degRD >= r.degree for r in spec.R), ""))
    checks.append(Check("deg R_D >= deg Q1, deg Q2", degRD >= max(spec.Q1.degree, spec.Q2.degree), ""))

    for label, poly in (("Q", spec.Q), ("R_D", spec.R_D)):
        vals = np.abs(poly(1j * m))
        scale = max(1.0, float(np.max(vals)))
        bad = m[vals <= 1e-12 * scale]
        detail = "" if bad.size == 0 else f"vanishes at m = {bad.tolist()}"
        checks.append(Check(f"{label}(im) != 0", bad.size == 0, detail))

    mu_need = max(spec.Q1.degree, spec.Q2.degree) + 1
    fs = spec.forcing
    checks.append(Check("mu > max(deg Q1, deg Q2) + 1", fs.mu > mu_need, f"mu={fs.mu}, need > {mu_need}"))
    for md in fs.modes + ((fs.geometric.mode,) if fs.geometric else ()):
        ok = md.mu_prime >= fs.mu and md.beta_prime >= fs.beta
        checks.append(Check(f"mode n={md.n}: mu' >= mu, beta' >= beta", ok,
                            f"mu'={md.mu_prime}, beta'={md.beta_prime}"))
    indices = fs.finite_indices()
    if fs.geometric is not None:
        indices = sorted(set(indices) | set(range(1, 9)))
    worst = 0.0
    for n in indices:
        norm = fs.sup_norm(n, m, spec.eps0)
        worst = max(worst, norm / (fs.K0 * fs.T0 ** (-n)))
    checks.append(Check("||F_n|| <= K0 T0^-n", worst <= 1 + 1e-12, f"max ratio {worst:.6g}"))

    ann: dict = {}
    if all(c.passed for c in checks if c.name in ("Q(im) != 0", "R_D(im) != 0")):
        ann = annulus_data(spec, m)
        checks.append(Check("annulus inner radius > 1", ann["r1"] > 1, f"r1={ann['r1']:.6g}"))
    return ValidationReport(tuple(checks), ann, tuple(notes))


def d_lk(spec: ProblemSpec, l: int) -> float:
    """Return ``d_l - delta_l (k + 1)``, which must be positive."""
    lev = spec.level(l)
    value = lev.d - lev.delta * (spec.k + 1)
    if value <= 0:
        raise SpecError(f"d_{l} - delta_{l}(k+1) = {value:.6g} is not positive")
    return value


def tahara_coefficients(delta: int, k: float) -> np.ndarray:
    """Coefficients ``A_{delta,p}``, ``p = 1..delta-1``.

    On ``T^a`` the identity reduces to the polynomial relation
    ``(a)_delta = N_delta(a) + sum_p A_p N_p(a)`` with Newton factors
    ``N_p(a) = prod_{j<p} (a + j k)``.  The ``A_p`` are therefore the divided
    differences of the left-over polynomial at the nodes ``0, -k, -2k, ...``.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if delta == 1:
        return np.zeros(0)
    nodes = -k * np.arange(delta)

    def residual(a):
        falling = np.prod([a - j for j in range(delta)], axis=0)
        rising = np.prod([a + j * k for j in range(delta)], axis=0)
        return falling - rising

    table = residual(nodes).astype(float)
    coeffs = [table[0]]
    for order in range(1, delta):
        table = (table[1:] - table[:-1]) / (nodes[order:] - nodes[:-order])
        coeffs.append(table[0])
    # coeffs[0] is the value at 0, which vanishes identically
    return np.array(coeffs[1:], dtype=float)


def psi_tail_bound(spec: ProblemSpec, nu: float, n_from: int, n_terms: int = 400) -> float:
    """Bound of the weighted norm of ``sum_{n >= n_from}`` of the geometric family."""
    g = spec.forcing.geometric
    if g is None:
        return 0.0
    k = spec.k
    m_norm = g.mode.eps_poly.disc_bound(spec.eps0) * abs(g.mode.amplitude)
    total = 0.0
    for n in range(n_from, n_from + n_terms):
        a = n / k - 1
        # sup_x x^b e^{-nu x} = (b/nu)^b e^{-b}
        terms = []
        for b in (a, a + 2):
            terms.append(b * math.log(b / nu) - b if b > 0 else 0.0)
        log_sup = np.logaddexp(*terms) - gammaln(n / k) - n * math.log(g.ratio)
        term = m_norm * math.exp(log_sup) if log_sup > -745 else 0.0
        total += term
        if n > n_from + 5 and term < 1e-18 * max(total, 1e-300):
            break
    return total


def default_n_psi(spec: ProblemSpec, nu: float, tol: float = 1e-12, n_max: int = 200) -> int:
    """Smallest truncation index whose geometric tail bound is below ``tol``."""
    finite = spec.forcing.finite_indices()
    top = max(finite) if finite else 0
    if spec.forcing.geometric is None:
        return top
    for n in range(1, n_max + 1):
        if psi_tail_bound(spec, nu, n + 1) < tol:
            return max(n, top)
    warnings.warn(f"forcing tail above {tol} at N_psi = {n_max}", RuntimeWarning, stacklevel=2)
    return max(n_max, top)


def forcing_psi(spec: ProblemSpec, template, eps: complex = 0.0, n_psi: int | None = None):
    """Evaluate ``psi(tau, m, eps) = sum_n F_n(m, eps) tau^n / Gamma(n/k)`` on a grid.

    ``template`` is a :class:`kborel.grid.BorelGrid`; only its nodes and
    metadata are used.  The returned grid stores ``n_psi`` and the tail
    bound in ``info``.
    """
    k = spec.k
    if n_psi is None:
        n_psi = default_n_psi(spec, template.nu)
    tau = template.tau
    m = template.m
    values = np.zeros((tau.size, m.size), dtype=complex)
    for n in range(1, n_psi + 1):
        Fn = spec.forcing.coefficient(n, m, eps)
        if not np.any(Fn):
            continue
        values += np.outer(tau**n * rgamma(n / k), Fn)
    tail = psi_tail_bound(spec, template.nu, n_psi + 1)
    if tail > 1e-10:
        warnings.warn(f"forcing tail bound {tail:.3g} exceeds tolerance", RuntimeWarning, stacklevel=2)
    return template.with_values(values, eps=eps, info={"n_psi": n_psi, "tail_bound": tail})
