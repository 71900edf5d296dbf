from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from kborel.desk import desk_m_grid
from kborel.geometry import (GeometryError, H_value, Sector, a_l, estimate_H_bounds, forbidden_directions,
                             plan_covering, ray_min_H_ratio, tau_l)

M = desk_m_grid()


def _tau0_oracle(spec):
    # Q/R_D = 2 for every m, so the real root solves alpha_D k tau^k = log 2
    return brentq(lambda t: spec.alpha_D * spec.k * t**spec.k - math.log(2), 0.1, 5.0, xtol=1e-15)


def test_principal_root_matches_brentq(spec):
    tau0 = tau_l(spec, M, 0)
    assert np.allclose(tau0, _tau0_oracle(spec), rtol=1e-13, atol=0)
    assert _tau0_oracle(spec) == pytest.approx(0.90023, abs=5e-6)


@pytest.mark.parametrize("l", [-2, -1, 0, 1, 2])
def test_roots_annihilate_H(spec, l):
    m = M[::16]
    tau = tau_l(spec, m, l)
    H = H_value(spec, tau, m)
    assert np.max(np.abs(H) / np.abs(spec.Q(1j * m))) < 1e-12


def test_first_nonprincipal_direction(spec):
    # arg(log 2 + 2 pi i) / k, independent of m for the reference problem
    expected = math.atan2(2 * math.pi, math.log(2)) / spec.k
    assert expected == pytest.approx(1.948, abs=1e-3)
    args = np.angle(tau_l(spec, M, 1))
    np.testing.assert_allclose(args, expected, atol=1e-13)
    iv = {f.l: f for f in forbidden_directions(spec, M, range(-2, 3))}
    assert iv[1].lo < expected < iv[1].hi
    assert not iv[1].blocking
    assert iv[0].blocking and iv[0].lo < 0 < iv[0].hi


def test_roots_require_annulus_outside_unit_disc(spec):
    from kborel.problem import ComplexPolynomial

    weak = spec.replace(Q=ComplexPolynomial((-0.5, 0.0, 0.5)))
    with pytest.raises(GeometryError):
        tau_l(weak, M, 0)


def test_H_refuses_the_cut(spec):
    with pytest.raises(GeometryError):
        H_value(spec, -1.0 + 0j, 0.0)


def test_ray_through_root_is_detected(spec):
    assert ray_min_H_ratio(spec, 0.0, M, 16.0) < 1e-14
    assert ray_min_H_ratio(spec, -1.52, M, 16.0) > 0.1


def test_a_l_branch_spacing(spec):
    d = a_l(spec, M, 3) - a_l(spec, M, 2)
    np.testing.assert_allclose(d, 2j * math.pi, atol=1e-14)


def test_sector_membership():
    s = Sector(0.5, 1.0, 2.0)
    z = np.array([np.exp(0.5j), 3 * np.exp(0.5j), np.exp(1.2j), 0.0])
    assert s.contains(z).tolist() == [True, False, False, False]


@pytest.fixture(scope="module")
def covering(spec, cfg):
    c = cfg.covering
    return plan_covering(spec, c.varsigma, c.theta, c.r_T, cfg.grid.rho, M, l_max=c.l_max, overlap=c.overlap,
                         time_aperture=c.time_aperture, ray_aperture=c.ray_aperture)


def test_covering_directions_clear_forbidden_set(spec, covering):
    blocking = [iv for iv in forbidden_directions(spec, M, range(-8, 9)) if iv.blocking]
    assert covering.varsigma == 2 and len(covering.directions) == 2
    for d in covering.directions:
        assert abs(d) < math.pi / 2
        assert all(not (iv.lo <= d <= iv.hi) for iv in blocking)


def test_covering_sectors_cover_the_circle(covering):
    angles = np.linspace(-math.pi, math.pi, 721)
    hit = np.zeros(angles.shape, bool)
    for s in covering.eps_sectors:
        hit |= s.contains_angle(angles)
    assert hit.all()


def test_H_bounds_on_covering_rays(spec, covering, cfg):
    for d in covering.directions:
        hb = estimate_H_bounds(spec, d, cfg.covering.ray_aperture, covering.rho, M)
        assert hb.prerequisite
