"""Command-line entry point: ``kborel <subcommand>``.

Exit codes: 0 success, 1 runtime failure, 2 validation or schema failure.
Every stage writes its artifacts to ``--out`` (JSON for reports, CSV for
numbers); nothing in them depends on wall-clock time.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import acceptance as acc
from .analysis import FitError, gevrey_fit, reconstruct_u
from .config import ConfigError, RunConfig, load_config
from .geometry import (CoveringData, GeometryError, estimate_H_bounds, forbidden_directions, plan_covering,
                       tau_l)
from .grid import save_grid, uniform_m_grid
from .problem import SpecError, validate_spec
from .solver import residual, smallness_ledger, solve_fixed_point

logger = logging.getLogger("kborel")

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


class StageError(RuntimeError):
    def __init__(self, stage: str, error: Exception):
        super().__init__(f"stage '{stage}' failed: {error}")
        self.stage = stage
        self.error = error


@dataclass
class RunReport:
    """Machine-readable summary assembled by the subcommands."""

    config: dict = field(default_factory=dict)
    validation: dict | None = None
    geometry: dict | None = None
    ledgers: list = field(default_factory=list)
    solve: dict | None = None
    traces: list = field(default_factory=list)
    sweep: list = field(default_factory=list)
    fit: dict | None = None
    acceptance: list = field(default_factory=list)
    failure: dict | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None and v != []}


def default_config_path() -> Path:
    return Path(str(resources.files("kborel") / "data" / "desk.toml"))


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _parse_complex(text: str) -> complex:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    try:
        if len(parts) == 1:
            return complex(float(parts[0]))
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected RE or RE,IM, got {text!r}")


# stages -------------------------------------------------------------------------------------------


def _m_grid(cfg: RunConfig) -> np.ndarray:
    return uniform_m_grid(cfg.grid.n_m, cfg.grid.m_max)


def stage_validate(cfg: RunConfig, out: Path, report: RunReport) -> bool:
    rep = validate_spec(cfg.problem, _m_grid(cfg))
    report.validation = rep.to_dict()
    write_json(out / "validation.json", rep.to_dict())
    return rep.passed


def stage_geometry(cfg: RunConfig, out: Path, report: RunReport) -> CoveringData:
    spec, g, c = cfg.problem, cfg.grid, cfg.covering
    m = _m_grid(cfg)
    covering = plan_covering(spec, c.varsigma, c.theta, c.r_T, g.rho, m, l_max=c.l_max, overlap=c.overlap,
                             time_aperture=c.time_aperture, ray_aperture=c.ray_aperture)
    rows = []
    for l in range(-c.l_max, c.l_max + 1):
        try:
            taus = tau_l(spec, m, l)
        except GeometryError:
            continue
        rows.extend((l, float(mj), float(t.real), float(t.imag)) for mj, t in zip(m, taus))
    write_csv(out / "singularities.csv", ["l", "m", "tau_re", "tau_im"], rows)
    forb = [iv.to_dict() for iv in forbidden_directions(spec, m, range(-c.l_max, c.l_max + 1))]
    write_json(out / "forbidden.json", forb)
    write_json(out / "covering.json", covering.to_dict())
    hb = [estimate_H_bounds(spec, d, c.ray_aperture, covering.rho, m, x_max=g.x_max).to_dict()
          for d in covering.directions]
    write_json(out / "hbounds.json", hb)
    report.geometry = {"covering": covering.to_dict(), "forbidden": forb, "hbounds": hb}
    return covering


def stage_ledger(cfg: RunConfig, covering: CoveringData, out: Path, report: RunReport) -> list:
    ledgers = []
    for p, d in enumerate(covering.directions):
        tm = cfg.grid.template(cfg.problem.k, d, covering.rho)
        led = smallness_ledger(cfg.problem, tm)
        ledgers.append({"p": p, "direction": d, **led.to_dict()})
    write_json(out / "ledger.json", ledgers)
    report.ledgers = ledgers
    return ledgers


def stage_solve(cfg: RunConfig, covering: CoveringData, p: int, eps: complex, out: Path, report: RunReport, *,
                gamma: float | None = None, force: bool = False, tol: float | None = None,
                max_iter: int | None = None):
    spec = cfg.problem
    direction = covering.directions[p] if gamma is None else gamma
    tm = cfg.grid.template(spec.k, direction, covering.rho)
    led = None if force else smallness_ledger(spec, tm)
    w, trace = solve_fixed_point(spec, tm, eps, tol=tol or cfg.solver.tol, max_iter=max_iter or cfg.solver.max_iter,
                                 ledger=led, force=force)
    res = residual(w, spec, None, eps)
    tag = f"p{p}"
    save_grid(w, out / f"w_{tag}.csv")
    entry = {"p": p, "direction": direction, "eps": [eps.real, eps.imag], "residual": res, **trace.to_dict()}
    write_json(out / f"trace_{tag}.json", entry)
    if led is not None:
        write_json(out / f"ledger_{tag}.json", led.to_dict())
    report.solve = entry
    return w, trace


def stage_reconstruct(cfg: RunConfig, covering: CoveringData, w, p: int, eps: complex, out: Path) -> Path:
    _, t, z = acc.sample_grids(cfg, covering, p)
    u = reconstruct_u(w, cfg.problem, covering, p, t, z, eps)
    rows = [(ti.real, ti.imag, zj.real, zj.imag, u[i, j].real, u[i, j].imag)
            for i, ti in enumerate(t) for j, zj in enumerate(z)]
    return write_csv(out / f"u_p{p}.csv", ["t_re", "t_im", "z_re", "z_im", "u_re", "u_im"], rows)


def stage_flatness(cfg: RunConfig, out: Path, report: RunReport, workers: int) -> acc.DeskSweep:
    sweep = acc.run_sweep(cfg, workers=workers,
                          progress=lambda r: logger.info("eps=%.4g supdiff=%.3g noise=%.3g ok=%s",
                                                         abs(r.eps), r.supdiff, r.noise, r.ok))
    rows = [r.to_dict() for r in sweep.rows]
    write_csv(out / "sweep.csv", ["eps_abs", "eps_arg", "supdiff", "noise", "consistency_excess"],
              [(d["eps_abs"], d["eps_arg"], d["supdiff"], d["noise"], d["consistency_excess"]) for d in rows])
    write_json(out / "sweep.json", {"sigma": sweep.sigma, "rows": rows})
    report.sweep = rows
    report.traces.extend({"eps": [r.eps.real, r.eps.imag], "iterations": list(r.iterations),
                          "max_ratio": r.max_ratio, "norms": list(r.norms), "residuals": list(r.residuals),
                          "ok": r.ok} for r in sweep.rows)
    return sweep


def read_sweep_csv(path: Path) -> list[tuple[float, float, float]]:
    if not path.is_file():
        raise ConfigError(f"sweep file {path} not found; run 'kborel flatness' first or pass --sweep")
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        missing = {"eps_abs", "supdiff"} - set(rd.fieldnames or [])
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        rows = []
        for r in rd:
            y = float(r["supdiff"])
            if math.isfinite(y):
                rows.append((float(r["eps_abs"]), y, float(r.get("noise") or 0.0)))
    return rows


def stage_fit(cfg: RunConfig, rows, out: Path, report: RunReport) -> dict:
    k = cfg.problem.k
    s = cfg.sweep
    fit = gevrey_fit(rows, k, (s.kappa_min, s.kappa_max), p=s.p, noise_factor=s.noise_factor)
    data = fit.to_dict()
    write_json(out / "fit.json", data)
    plot = []
    for row in rows:
        e, y, nz = (abs(row.eps), row.supdiff, row.noise) if hasattr(row, "eps") else row
        used = y > s.noise_factor * nz and y > 0
        plot.append((e, e ** (-k), math.log(y) if y > 0 else float("nan"), int(used)))
    write_csv(out / "fit_plot.csv", ["eps_abs", "eps_abs_pow_minus_k", "log_supdiff", "used"], plot)
    report.fit = data
    return data


# command handlers -------------------------------------------------------------------------------


def _load(args) -> RunConfig:
    path = Path(args.config) if args.config else default_config_path()
    return load_config(path, force=args.force)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate(args, report: RunReport) -> int:
    path = Path(args.config) if args.config else default_config_path()
    cfg = load_config(path, force=True)
    report.config = cfg.to_dict()
    ok = stage_validate(cfg, _out(args), report)
    for chk in report.validation["checks"]:
        print(f"{'ok  ' if chk['passed'] else 'FAIL'} {chk['name']}: {chk['detail']}")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_geometry(args, report: RunReport) -> int:
    cfg = _load(args)
    covering = stage_geometry(cfg, _out(args), report)
    print(json.dumps({"directions": covering.directions, "rho": covering.rho}, default=_json_default))
    return EXIT_OK


def cmd_ledger(args, report: RunReport) -> int:
    cfg = _load(args)
    out = _out(args)
    covering = stage_geometry(cfg, out, report)
    ledgers = stage_ledger(cfg, covering, out, report)
    for led in ledgers:
        print(f"p={led['p']} direction={led['direction']:.4f} passed={led['passed']} varpi={led['varpi']}")
    return EXIT_OK if all(led["passed"] for led in ledgers) else EXIT_RUNTIME


def _eps(args, cfg: RunConfig) -> complex:
    return args.eps if args.eps is not None else complex(cfg.sweep.eps_max * np.exp(1j * cfg.sweep.eps_arg))


def cmd_solve(args, report: RunReport) -> int:
    cfg = _load(args)
    out = _out(args)
    covering = stage_geometry(cfg, out, report)
    w, trace = stage_solve(cfg, covering, args.p, _eps(args, cfg), out, report, gamma=args.gamma,
                           force=args.force, tol=args.tol, max_iter=args.max_iter)
    print(f"converged in {trace.iterations} iterations, norm {trace.norms[-1]:.6g}, "
          f"residual {report.solve['residual']:.3g}")
    return EXIT_OK


def cmd_reconstruct(args, report: RunReport) -> int:
    cfg = _load(args)
    out = _out(args)
    covering = stage_geometry(cfg, out, report)
    eps = _eps(args, cfg)
    w, _ = stage_solve(cfg, covering, args.p, eps, out, report, force=args.force)
    path = stage_reconstruct(cfg, covering, w, args.p, eps, out)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_flatness(args, report: RunReport) -> int:
    cfg = _load(args)
    out = _out(args)
    sweep = stage_flatness(cfg, out, report, args.workers)
    failed = [r for r in sweep.rows if not r.ok]
    print(f"{len(sweep.rows)} sweep points, {len(failed)} failed; wrote {out / 'sweep.csv'}")
    return EXIT_OK if not failed else EXIT_RUNTIME


def cmd_fit(args, report: RunReport) -> int:
    cfg = _load(args)
    out = _out(args)
    path = Path(args.sweep) if args.sweep else out / "sweep.csv"
    data = stage_fit(cfg, read_sweep_csv(path), out, report)
    print(json.dumps(data, default=_json_default))
    return EXIT_OK


def cmd_pipeline(args, report: RunReport) -> int:
    cfg = _load(args)
    out = _out(args)
    report.config = cfg.to_dict()
    stage = "validate"
    try:
        if not stage_validate(cfg, out, report) and not args.force:
            raise SpecError("validation failed")
        stage = "geometry"
        covering = stage_geometry(cfg, out, report)
        stage = "ledger"
        stage_ledger(cfg, covering, out, report)
        stage = "solve"
        eps = complex(cfg.sweep.eps_max * np.exp(1j * cfg.sweep.eps_arg))
        w, _ = stage_solve(cfg, covering, cfg.sweep.p, eps, out, report, force=args.force)
        stage = "reconstruct"
        stage_reconstruct(cfg, covering, w, cfg.sweep.p, eps, out)
        stage = "flatness"
        sweep = stage_flatness(cfg, out, report, args.workers)
        stage = "fit"
        try:
            stage_fit(cfg, sweep.rows, out, report)
        except FitError as exc:
            report.fit = {"error": str(exc)}
        stage = "acceptance"
        results = sorted(acc.fast_criteria(cfg) + acc.sweep_criteria(sweep, cfg), key=lambda r: r.number)
        for r in results:
            logger.info(r.line())
        report.acceptance = [r.to_dict() for r in results]
    except SpecError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc
    finally:
        write_json(out / "report.json", report.to_dict())
    for r in report.acceptance:
        print(f"criterion {r['number']:2d} {r['name']}: {'pass' if r['passed'] else 'FAIL'}")
    return EXIT_OK


# parser -----------------------------------------------------------------------------------------


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="run file (TOML); defaults to the bundled desk problem")
    parser.add_argument("--out", default=d("kborel_out"), help="output directory")
    parser.add_argument("--workers", type=int, default=d(1), help="worker processes for sweeps")
    parser.add_argument("--force", action="store_true", default=d(False),
                        help="proceed although validation or the smallness ledger fails")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kborel", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {}

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        handlers[name] = func
        sp.set_defaults(handler=func)
        return sp

    add("validate", cmd_validate, "check the problem hypotheses")
    add("geometry", cmd_geometry, "singularities, forbidden directions, covering and H bounds")
    add("ledger", cmd_ledger, "smallness ledger on every direction")
    for name, func, help_ in (("solve", cmd_solve, "fixed-point solve on one ray"),
                              ("reconstruct", cmd_reconstruct, "solve and evaluate u_p on the sample grid")):
        sp = add(name, func, help_)
        sp.add_argument("--eps", type=_parse_complex, default=None, help="RE or RE,IM")
        sp.add_argument("--p", type=int, default=0, help="direction index")
        if name == "solve":
            sp.add_argument("--gamma", type=float, default=None, help="override the ray direction")
            sp.add_argument("--tol", type=float, default=None)
            sp.add_argument("--max-iter", type=int, default=None)
    add("flatness", cmd_flatness, "sweep of sup |u_{p+1} - u_p| over eps")
    sp = add("fit", cmd_fit, "fit log supdiff against |eps|^-k and scan the order")
    sp.add_argument("--sweep", default=None, help="sweep CSV (defaults to OUT/sweep.csv)")
    add("pipeline", cmd_pipeline, "every stage plus the acceptance checks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    report = RunReport()
    try:
        return args.handler(args, report)
    except (ConfigError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        stage = args.command
        print(f"error: stage '{stage}' failed: {exc}", file=sys.stderr)
        report.failure = {"stage": stage, "error": str(exc)}
        try:
            write_json(_out(args) / "report.json", report.to_dict())
        except OSError:
            pass
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
