"""Neighbouring sector solutions differ by an exponentially flat amount.

For each eps the solutions u_p and u_{p+1} are built on their own rays.
Their difference splits into two ray tails beyond |tau| = rho/2 plus an
integral over the arc joining the rays, and that split is checked
against the direct difference.  Fitting log sup|u_{p+1} - u_p| against
|eps|^{-k} should give a straight line, and scanning the exponent should
recover k.

The default is a short sweep of 5 values of eps.  The full 10-point sweep
(about 15 minutes on one core) is `kborel flatness` followed by `kborel fit`.

Run:  python demos/03_flatness.py --n-eps 5
"""
from __future__ import annotations

import argparse
import logging
from dataclasses import replace

from kborel import FitError, desk_config, gevrey_fit
from kborel.acceptance import run_sweep

logger = logging.getLogger("demo.flatness")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-eps", type=int, default=5)
    parser.add_argument("--eps-min", type=float, default=0.06)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    logging.getLogger("kborel").setLevel(logging.WARNING)

    cfg = desk_config()
    cfg = replace(cfg, sweep=replace(cfg.sweep, n_eps=args.n_eps, eps_min=args.eps_min))
    k = cfg.problem.k

    logger.info("%8s %12s %12s %12s %6s", "|eps|", "sup diff", "noise", "excess", "iters")
    sweep = run_sweep(cfg, workers=args.workers, progress=lambda r: logger.info(
        "%8.4f %12.4e %12.4e %12.4e %6s", abs(r.eps), r.supdiff, r.noise, r.consistency, r.iterations))

    try:
        fit = gevrey_fit(sweep.rows, k, (cfg.sweep.kappa_min, cfg.sweep.kappa_max),
                         noise_factor=cfg.sweep.noise_factor, min_rows=min(6, args.n_eps))
    except FitError as exc:
        logger.info("no fit: %s", exc)
        return
    logger.info("\nlog sup diff = %.3f - %.4f |eps|^-%.2f   (R^2 = %.7f, %d rows)", fit.log_K, fit.M, k,
                fit.quality, fit.n_used)
    logger.info("best exponent from the scan: %.4f (k = %.2f)", fit.kappa_hat, k)


if __name__ == "__main__":
    main()
