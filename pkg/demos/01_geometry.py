"""Where the Borel-plane solutions can live.

The reference problem has Q(X) / R_D(X) = 2 for every Fourier mode, so the
roots of H(tau, m) = Q(im) - exp(k tau^k) R_D(im) sit at the same points
for all m: tau_l^k = (log 2 + 2 pi i l) / k.  This script prints those
roots, the directions they forbid, and the good covering chosen around
them, then shows that the solver refuses the real axis, which runs
straight through tau_0.

Run:  python demos/01_geometry.py
"""
from __future__ import annotations

import argparse
import logging
import math

from kborel import desk_config, forbidden_directions, plan_covering, tau_l, uniform_m_grid, validate_spec
from kborel.geometry import ray_min_H_ratio
from kborel.solver import SolverError, solve_fixed_point

logger = logging.getLogger("demo.geometry")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--l-max", type=int, default=3, help="largest |l| to list")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = desk_config()
    spec, g, c = cfg.problem, cfg.grid, cfg.covering
    m = uniform_m_grid(g.n_m, g.m_max)

    report = validate_spec(spec, m)
    logger.info("hypotheses: %s", "all satisfied" if report.passed else report.failures())

    logger.info("\nroots of H (identical for every m here):")
    for l in range(-args.l_max, args.l_max + 1):
        tau = complex(tau_l(spec, m[:1], l)[0])
        logger.info("  l=%+d  tau=%.5f%+.5fi  |tau|=%.4f  arg=%+.4f", l, tau.real, tau.imag, abs(tau),
                    math.atan2(tau.imag, tau.real))

    logger.info("\nforbidden directions (blocking ones meet the right half-plane):")
    for iv in forbidden_directions(spec, m, range(-args.l_max, args.l_max + 1)):
        logger.info("  l=%+d  [%+.4f, %+.4f]  %s", iv.l, iv.lo, iv.hi, "blocking" if iv.blocking else "harmless")

    cov = plan_covering(spec, c.varsigma, c.theta, c.r_T, g.rho, m, l_max=c.l_max, overlap=c.overlap,
                        time_aperture=c.time_aperture, ray_aperture=c.ray_aperture)
    logger.info("\ncovering with %d sectors:", cov.varsigma)
    for p, (sec, d) in enumerate(zip(cov.eps_sectors, cov.directions)):
        logger.info("  E_%d: bisector %+.4f, aperture %.4f; ray d_%d = %+.4f, min |H|/|Q| near roots %.3f",
                    p, sec.direction, sec.aperture, p, d, ray_min_H_ratio(spec, d, m, g.x_max))

    logger.info("\nthe real axis passes through tau_0:")
    try:
        solve_fixed_point(spec, g.template(spec.k, 0.0, cov.rho), 0.05, force=True)
    except SolverError as exc:
        logger.info("  solver refused: %s", exc)
    logger.info("  min |H|/|Q| on that ray: %.2e", ray_min_H_ratio(spec, 0.0, m, g.x_max))


if __name__ == "__main__":
    main()
