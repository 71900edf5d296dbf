"""Singularities of the Borel equation, forbidden directions, good coverings
and sampled lower bounds for ``H(tau, m)``."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .problem import ProblemSpec, SpecError
from .transforms import wrap

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 0.05


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Sector:
    direction: float
    aperture: float
    radius: float = math.inf

    def __post_init__(self):
        if self.aperture <= 0:
            raise ValueError("aperture must be positive")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def contains_angle(self, angle, slack: float = 0.0):
        return np.abs(wrap(np.asarray(angle) - self.direction)) < self.aperture / 2 + slack

    def contains(self, z, slack: float = 0.0):
        z = np.asarray(z, dtype=complex)
        return self.contains_angle(np.angle(z), slack) & (np.abs(z) < self.radius) & (z != 0)

    def to_dict(self) -> dict:
        return {"direction": self.direction, "aperture": self.aperture,
                "radius": None if math.isinf(self.radius) else self.radius}


@dataclass(frozen=True)
class ForbiddenInterval:
    l: int
    lo: float
    hi: float
    blocking: bool

    def to_dict(self) -> dict:
        return {"l": self.l, "lo": self.lo, "hi": self.hi, "blocking": self.blocking}


@dataclass(frozen=True)
class CoveringData:
    varsigma: int
    eps_sectors: tuple[Sector, ...]
    directions: tuple[float, ...]
    ray_sectors: tuple[Sector, ...]
    time_sector: Sector
    rho: float
    theta: float
    delta1: tuple[float, ...]
    checks: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def overlap(self, p: int) -> tuple[float, float]:
        """Angular interval of ``E_p`` and ``E_{p+1}`` (cyclic), as ``(lo, hi)``."""
        a = self.eps_sectors[p]
        b = self.eps_sectors[(p + 1) % self.varsigma]
        lo = b.direction - b.aperture / 2
        hi = a.direction + a.aperture / 2
        lo = a.direction + wrap(lo - a.direction)
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "varsigma": self.varsigma,
            "eps_sectors": [s.to_dict() for s in self.eps_sectors],
            "directions": list(self.directions),
            "ray_sectors": [s.to_dict() for s in self.ray_sectors],
            "time_sector": self.time_sector.to_dict(),
            "rho": self.rho, "theta": self.theta, "delta1": list(self.delta1),
            "checks": self.checks, "notes": list(self.notes),
        }


@dataclass(frozen=True)
class HBoundEstimates:
    direction: float
    aperture: float
    A_H: float
    B_H: float
    eta2: float
    K1: float
    margins: dict

    @property
    def prerequisite(self) -> bool:
        return all(v > 0 for v in self.margins.values())

    def to_dict(self) -> dict:
        return {"direction": self.direction, "aperture": self.aperture, "A_H": self.A_H, "B_H": self.B_H,
                "eta2": self.eta2, "K1": self.K1, "margins": {str(k): v for k, v in self.margins.items()},
                "prerequisite": self.prerequisite}


def _ratio(spec: ProblemSpec, m):
    m = np.asarray(m, dtype=float)
    q = spec.Q(1j * m)
    r = spec.R_D(1j * m)
    if np.any(q == 0) or np.any(r == 0):
        raise SpecError("Q(im) or R_D(im) vanishes")
    return q / r


def a_l(spec: ProblemSpec, m, l: int):
    """``log|Q/R_D| + i arg(Q/R_D) + 2 l pi i`` at ``im``."""
    q = _ratio(spec, m)
    return np.log(np.abs(q)) + 1j * (np.angle(q) + 2 * math.pi * l)


def tau_l(spec: ProblemSpec, m, l: int):
    """Root ``tau_l(m)`` of ``H(., m)``: ``alpha_D k tau^k = a_l(m)``."""
    a = a_l(spec, m, l)
    if np.any(a.real <= 0):
        raise GeometryError("|Q(im)/R_D(im)| <= 1: arg a_l may leave (-pi/2, pi/2)")
    k = spec.k
    return np.abs(a / (spec.alpha_D * k)) ** (1 / k) * np.exp(1j * np.angle(a) / k)


def H_value(spec: ProblemSpec, tau, m):
    """``Q(im) - exp(alpha_D k tau^k) R_D(im)`` with the principal branch of ``tau^k``."""
    tau = np.asarray(tau, dtype=complex)
    m = np.asarray(m, dtype=float)
    if np.any((tau.imag == 0) & (tau.real <= 0)):
        raise GeometryError("tau on the cut (-inf, 0]")
    val = spec.Q(1j * m) - np.exp(spec.alpha_D * spec.k * tau**spec.k) * spec.R_D(1j * m)
    return val if val.ndim else complex(val)


def H_on_ray(spec: ProblemSpec, x: np.ndarray, gamma: float, m: np.ndarray) -> np.ndarray:
    """``H`` at ``tau^k = x e^{i k gamma}`` for all ``(x, m)`` pairs."""
    sk = np.asarray(x)[:, None] * np.exp(1j * spec.k * gamma)
    return spec.Q(1j * m)[None, :] - np.exp(spec.alpha_D * spec.k * sk) * spec.R_D(1j * m)[None, :]


def ray_min_H_ratio(spec: ProblemSpec, gamma: float, m, x_max: float, l_max: int = 8) -> float:
    """Smallest ``|H| / |Q|`` at the points of the ray closest to the roots ``tau_l(m)``.

    In the variable ``s = tau^k`` the ray is a half-line and the roots are
    ``a_l(m) / (alpha_D k)``, so the closest points are exact projections.
    Returns ``inf`` when no root projects onto ``(0, x_max]``.
    """
    m = np.asarray(m, dtype=float)
    k = spec.k
    direction = np.exp(1j * k * gamma)
    absQ = np.abs(spec.Q(1j * m))
    best = math.inf
    for l in range(-l_max, l_max + 1):
        s_l = a_l(spec, m, l) / (spec.alpha_D * k)
        x_star = (s_l * np.conj(direction)).real
        ok = (x_star > 0) & (x_star <= x_max)
        if not np.any(ok):
            continue
        H = spec.Q(1j * m[ok]) - np.exp(spec.alpha_D * k * x_star[ok] * direction) * spec.R_D(1j * m[ok])
        best = min(best, float(np.min(np.abs(H) / absQ[ok])))
    return best


def forbidden_directions(spec: ProblemSpec, m_grid, l_range, margin: float = DEFAULT_MARGIN):
    """Intervals of ``arg(a_l(m)) / k`` over the grid, dilated by ``margin``.

    Intervals outside ``(-pi/2, pi/2)`` are kept and marked non-blocking.
    """
    out = []
    k = spec.k
    for l in l_range:
        args = np.angle(a_l(spec, m_grid, l)) / k
        lo, hi = float(args.min()) - margin, float(args.max()) + margin
        blocking = hi > -math.pi / 2 and lo < math.pi / 2
        out.append(ForbiddenInterval(int(l), lo, hi, bool(blocking)))
    return out


def _clearance(angle: float, intervals) -> float:
    best = math.inf
    for iv in intervals:
        if iv.lo <= angle <= iv.hi:
            return -min(angle - iv.lo, iv.hi - angle)
        best = min(best, abs(angle - iv.lo), abs(angle - iv.hi))
    return best


def _arc_samples(direction: float, aperture: float, n: int = 41) -> np.ndarray:
    return direction + aperture / 2 * np.linspace(-1, 1, n)


def plan_covering(spec: ProblemSpec, varsigma: int, theta: float, r_T: float, rho: float, m_grid, *,
                  l_max: int = 8, margin: float = DEFAULT_MARGIN, overlap: float = 0.3,
                  time_aperture: float = 0.2, ray_aperture: float = 0.1, min_gap: float = 0.2,
                  n_offsets: int = 181) -> CoveringData:
    """Choose a good covering ``{E_p}`` with directions ``d_p`` and check its properties.

    ``E_p`` are arcs of aperture ``2 pi / varsigma + overlap`` with
    equally spaced bisectors; the common offset and each direction ``d_p``
    are chosen to maximise the Laplace admissibility margin
    ``min cos(k (d_p - arg(eps t)))`` over ``eps in E_p`` and ``t`` in the time
    sector, while keeping the ray sector ``S_{d_p}`` clear of every
    forbidden interval.
    """
    if varsigma < 2:
        raise GeometryError("need at least two sectors")
    k = spec.k
    if theta <= math.pi / k:
        raise GeometryError(f"aperture theta = {theta} must exceed pi/k = {math.pi / k:.4f}")
    if overlap >= 2 * math.pi / varsigma:
        raise GeometryError("overlap too wide: triple intersections would appear")
    notes: list[str] = []
    l_range = range(-l_max, l_max + 1)
    forb = forbidden_directions(spec, m_grid, l_range, margin)
    blocking = [iv for iv in forb if iv.blocking]

    # admissible directions: inside (-pi/2, pi/2), clear of blocking intervals
    cand = np.linspace(-math.pi / 2, math.pi / 2, 2001)[1:-1]
    clear = np.array([_clearance(c, blocking) for c in cand])
    ok = clear >= ray_aperture / 2
    ok &= np.abs(cand) + ray_aperture / 2 < math.pi / 2
    if not np.any(ok):
        raise GeometryError("no admissible direction in (-pi/2, pi/2)")
    good = cand[ok]
    gaps = np.split(good, np.where(np.diff(good) > 1.5 * (cand[1] - cand[0]))[0] + 1)
    widest = max(g[-1] - g[0] for g in gaps)
    if widest < min_gap:
        raise GeometryError(f"widest gap {widest:.3g} is below {min_gap}")

    # radius of the cut disc
    taus = np.concatenate([np.atleast_1d(tau_l(spec, m_grid, l)) for l in l_range])
    rho_max = float(np.min(np.abs(taus)))
    if rho >= rho_max:
        new = 0.9 * rho_max
        msg = f"rho = {rho:g} reaches |tau_l| = {rho_max:.4g}; reduced to {new:.4g}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
        rho = new
    growth = [float(np.min(np.abs(tau_l(spec, m_grid, l)))) for l in range(l_max, l_max + 3)]
    growth_ok = all(b > a for a, b in zip(growth, growth[1:]))
    growth_neg = [float(np.min(np.abs(tau_l(spec, m_grid, -l)))) for l in range(l_max, l_max + 3)]
    growth_ok &= all(b > a for a, b in zip(growth_neg, growth_neg[1:]))

    ap = 2 * math.pi / varsigma + overlap
    t_args = _arc_samples(0.0, time_aperture, 9)

    def margin_for(d, eps_dir):
        e_args = _arc_samples(eps_dir, ap, 61)
        arg = np.add.outer(e_args, t_args).ravel()
        return float(np.min(np.cos(k * wrap(d - arg))))

    best = None
    for phi0 in np.linspace(0, 2 * math.pi / varsigma, n_offsets, endpoint=False):
        dirs, marg = [], []
        for p in range(varsigma):
            e_dir = float(wrap(phi0 + 2 * math.pi * p / varsigma))
            # choose d_p among admissible directions (coarse, then exact best)
            scores = [margin_for(d, e_dir) for d in good[::10]]
            j = int(np.argmax(scores))
            dirs.append(float(good[::10][j]))
            marg.append(scores[j])
        score = min(marg)
        if best is None or score > best[0] + 1e-12:
            best = (score, phi0, dirs, marg)
    score, phi0, dirs, marg = best
    if score <= 0:
        raise GeometryError("no covering with admissible Laplace directions exists for these parameters")
    e_dirs = [float(wrap(phi0 + 2 * math.pi * p / varsigma)) for p in range(varsigma)]
    # order sectors by bisector so that E_p and E_{p+1} are neighbours
    order = np.argsort(e_dirs)
    e_dirs = [e_dirs[i] for i in order]
    dirs = [dirs[i] for i in order]
    marg = [marg[i] for i in order]

    eps_sectors = tuple(Sector(d, ap, spec.eps0) for d in e_dirs)
    ray_sectors = tuple(Sector(d, ray_aperture) for d in dirs)
    time_sector = Sector(0.0, time_aperture, r_T)
    checks = _check_covering(spec, eps_sectors, ray_sectors, time_sector, theta, rho, taus, r_T)
    checks["tau_l growth beyond scanned range"] = bool(growth_ok)
    checks["forbidden"] = [iv.to_dict() for iv in forb]
    return CoveringData(varsigma, eps_sectors, tuple(dirs), ray_sectors, time_sector, rho, theta,
                        tuple(marg), checks, tuple(notes))


def _check_covering(spec, eps_sectors, ray_sectors, time_sector, theta, rho, taus, r_T) -> dict:
    n = len(eps_sectors)
    ang = np.linspace(-math.pi, math.pi, 3601)
    member = np.array([s.contains_angle(ang) for s in eps_sectors])
    counts = member.sum(axis=0)
    pairwise = all(np.any(member[p] & member[(p + 1) % n]) for p in range(n))
    triple = bool(np.any(counts >= 3)) if n >= 3 else False
    covers = bool(np.all(counts >= 1))
    clear_rays = all(not np.any(rs.contains(taus)) for rs in ray_sectors)
    outside_disc = bool(np.all(np.abs(taus) > rho))
    inside = True
    t_samples = time_sector.radius * 0.999 * np.array([0.1, 0.5, 1.0])[:, None] * np.exp(
        1j * _arc_samples(0.0, time_sector.aperture * 0.999, 7))[None, :]
    for p, (es, rs) in enumerate(zip(eps_sectors, ray_sectors)):
        e = spec.eps0 * 0.999 * np.array([0.1, 0.5, 1.0])[:, None] * np.exp(
            1j * _arc_samples(es.direction, es.aperture * 0.999, 21))[None, :]
        prod = np.multiply.outer(e.ravel(), t_samples.ravel()).ravel()
        target = Sector(rs.direction, theta, spec.eps0 * r_T)
        inside &= bool(np.all(target.contains(prod)))
    return {
        "pairwise overlaps": bool(pairwise),
        "no triple intersections": not triple,
        "union covers circle": covers,
        "tau_l outside ray sectors": bool(clear_rays),
        "tau_l outside cut disc": outside_disc,
        "eps t in S_(d_p, theta)": inside,
    }


def estimate_H_bounds(spec: ProblemSpec, direction: float, aperture: float, rho: float, m_grid, *,
                      x_max: float = 16.0, n_r: int = 200, K1: float | None = None,
                      safety: float = 0.9, floor: float = 1e-8) -> HBoundEstimates:
    """Sampled constants of the lower bounds of ``|H|`` on ``S_d`` and on the cut disc.

    ``B_H`` is ``safety`` times the asymptotic growth rate
    ``k min cos(k arg tau)`` over the sector; ``A_H`` is then the sampled
    minimum of ``|H| / (|Q| e^{B_H alpha_D |tau|^k})``.
    """
    k = spec.k
    m = np.asarray(m_grid, dtype=float)
    angles = _arc_samples(direction, aperture, 5)
    forb = [iv for iv in forbidden_directions(spec, m, range(-8, 9), margin=0.0)]
    for iv in forb:
        if iv.lo - 1e-12 <= direction + aperture / 2 and direction - aperture / 2 <= iv.hi + 1e-12:
            raise GeometryError(f"sector around {direction:.4g} meets forbidden directions of l={iv.l}")
    if np.max(np.abs(angles)) * k >= math.pi / 2:
        raise GeometryError("sector leaves the half-plane where |e^{tau^k}| grows")
    b_sup = k * float(np.min(np.cos(k * angles)))
    B = safety * b_sup
    x = np.concatenate([np.geomspace(1e-6, 1.0, n_r // 2, endpoint=False), np.linspace(1.0, x_max, n_r // 2)])
    absQ = np.abs(spec.Q(1j * m))
    A = math.inf
    for ang in angles:
        H = H_on_ray(spec, x, ang, m)
        A = min(A, float(np.min(np.abs(H) / (absQ[None, :] * np.exp(B * spec.alpha_D * x)[:, None]))))
    if not A > floor:
        raise GeometryError(f"A_H = {A:.3g}: direction too close to a singular ray")
    r = rho * np.linspace(0.0, 1.0, 41)[1:]
    th = np.linspace(-math.pi, math.pi, 73)[1:-1]
    xs = np.unique(r**k)
    eta2 = math.inf
    for ang in th:
        H = H_on_ray(spec, xs, ang, m)
        eta2 = min(eta2, float(np.min(np.abs(H) / absQ[None, :])))
    if K1 is None:
        K1 = default_K1(spec.k, 1.0)
    c = k / gamma_fn(1 / k - 1)
    margins = {lev.index: B * spec.alpha_D - lev.kappa * K1 * c for lev in spec.levels}
    return HBoundEstimates(direction, aperture, A, B, eta2, K1, margins)


def default_K1(k: float, nu: float, x_max: float = 16.0) -> float:
    """``K1`` fitted on the Def-4 envelope over a default grid."""
    from .convolution import estimate_K1
    from .grid import BorelGrid, make_radial_grid

    rad = make_radial_grid(x_max, 0.3)
    tmpl = BorelGrid.template(0.0, rad, np.array([0.0]), nu=nu, beta=1.0, mu=0.0, k=k, rho=1.0)
    x = tmpl.x[:, None]
    samples = [tmpl.with_values(x / (1 + x**2) * np.exp(nu * x)), tmpl.with_values(x * np.exp(nu * x))]
    return estimate_K1(k, nu, samples)
