"""Problem and run files.

A run file is TOML.  The top level and the ``levels``/``forcing`` tables
describe the problem; the optional ``grid``, ``covering``, ``solver`` and
``sweep`` tables hold run parameters.  Complex numbers are written as
``[re, im]`` pairs (a plain number is read as a real value) and
polynomials as arrays of such pairs in ascending degree.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .desk import GridConfig
from .problem import (check_order, ComplexPolynomial, ForcingMode, ForcingSpec, GeometricForcing, Level, ProblemSpec,
                      SpecError, validate_spec)


class ConfigError(ValueError):
    """A run file that cannot be parsed or does not match the schema."""


@dataclass(frozen=True)
class CoveringConfig:
    varsigma: int = 2
    theta: float = math.pi / 0.75 + 0.2
    r_T: float = 1.0
    l_max: int = 8
    overlap: float = 0.3
    time_aperture: float = 0.2
    ray_aperture: float = 0.1


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iter: int = 60


@dataclass(frozen=True)
class SweepConfig:
    p: int = 0
    eps_min: float = 0.01
    eps_max: float = 0.1
    n_eps: int = 10
    eps_arg: float = 0.0
    spacing: str = "linear"
    n_angles: int = 40
    delta2_fraction: float = 0.5
    kappa_min: float = 0.3
    kappa_max: float = 1.5
    noise_factor: float = 10.0

    def eps_values(self) -> np.ndarray:
        if self.n_eps == 0:
            return np.zeros(0, dtype=complex)
        if self.spacing == "linear":
            r = np.linspace(self.eps_min, self.eps_max, self.n_eps)
        elif self.spacing == "geometric":
            r = np.geomspace(self.eps_min, self.eps_max, self.n_eps)
        else:
            raise ConfigError(f"sweep.spacing must be 'linear' or 'geometric', got {self.spacing!r}")
        return r * np.exp(1j * self.eps_arg)


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    grid: GridConfig = field(default_factory=GridConfig)
    covering: CoveringConfig = field(default_factory=CoveringConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    path: str | None = None

    def __post_init__(self):
        g = self.grid
        for name in ("n_inner", "n_outer", "order", "n_m"):
            if getattr(g, name) <= 0:
                raise ConfigError(f"grid.{name} must be positive")
        if g.n_m % 2 == 0:
            raise ConfigError("grid.n_m must be odd")
        for name in ("x_max", "m_max", "rho", "nu", "beta"):
            if getattr(g, name) <= 0:
                raise ConfigError(f"grid.{name} must be positive")
        if not 0 < self.solver.tol < 1:
            raise ConfigError("solver.tol must lie in (0, 1)")
        if self.solver.max_iter <= 0:
            raise ConfigError("solver.max_iter must be positive")
        if self.covering.varsigma < 2:
            raise ConfigError("covering.varsigma must be at least 2")
        s = self.sweep
        if s.n_eps < 0 or s.n_angles < 3:
            raise ConfigError("sweep.n_eps must be >= 0 and sweep.n_angles >= 3")
        if s.n_eps and not 0 < s.eps_min <= s.eps_max:
            raise ConfigError("sweep needs 0 < eps_min <= eps_max")

    def to_dict(self) -> dict:
        return {"problem": problem_to_dict(self.problem), "grid": asdict(self.grid),
                "covering": asdict(self.covering), "solver": asdict(self.solver), "sweep": asdict(self.sweep)}


def _complex(value, where: str) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        return complex(value[0], value[1])
    raise ConfigError(f"{where}: expected a number or a [re, im] pair, got {value!r}")


def _poly(value, where: str) -> ComplexPolynomial:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty array of [re, im] coefficients")
    try:
        return ComplexPolynomial(tuple(_complex(c, f"{where}[{i}]") for i, c in enumerate(value)))
    except SpecError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _need(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required field '{where}{key}'")
    return table[key]


def _number(table: dict, key: str, where: str, default=None):
    if key not in table:
        if default is None:
            raise ConfigError(f"missing required field '{where}{key}'")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}{key}: expected a number, got {v!r}")
    return v


def _mode(table: dict, where: str) -> ForcingMode:
    try:
        return ForcingMode(
            n=int(_number(table, "n", where)),
            amplitude=_complex(table.get("amplitude", 1.0), where + "amplitude"),
            mu_prime=float(_number(table, "mu_prime", where, 0.0)),
            beta_prime=float(_number(table, "beta_prime", where, 0.0)),
            modal=str(table.get("modal", "none")),
            frequency=float(_number(table, "frequency", where, 0.0)),
            eps_poly=_poly(table.get("eps_poly", [[1.0, 0.0]]), where + "eps_poly"),
        )
    except SpecError as exc:
        raise ConfigError(f"{where.rstrip('.')}: {exc}") from exc


def problem_from_dict(data: dict) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from the parsed TOML tables."""
    R = _need(data, "R", "")
    if not isinstance(R, list) or not R:
        raise ConfigError("R: expected an array of polynomials R_1 .. R_D")
    levels_raw = data.get("levels", [])
    if len(R) != len(levels_raw) + 1:
        raise ConfigError(f"R: need D = {len(levels_raw) + 1} polynomials (R_1 .. R_D, the last is R_D), "
                          f"got {len(R)}")
    levels = []
    for i, lv in enumerate(levels_raw):
        where = f"levels[{i}]."
        A_raw = _need(lv, "A", where)
        if not isinstance(A_raw, dict):
            raise ConfigError(f"{where}A: expected a table n = polynomial")
        try:
            A = {int(n): _poly(p, f"{where}A.{n}") for n, p in A_raw.items()}
        except ValueError as exc:
            raise ConfigError(f"{where}A: keys must be integers ({exc})") from exc
        try:
            levels.append(Level(int(lv.get("index", i + 1)), _complex(_need(lv, "c", where), where + "c"),
                                int(_number(lv, "d", where)), int(_number(lv, "delta", where)),
                                int(_number(lv, "Delta", where)), float(_number(lv, "kappa", where)), A))
        except SpecError as exc:
            raise ConfigError(f"{where.rstrip('.')}: {exc}") from exc
    try:
        check_order(float(_number(data, "k", "")))
    except SpecError as exc:
        raise ConfigError(f"k: {exc}") from exc
    fr = _need(data, "forcing", "")
    modes = tuple(_mode(md, f"forcing.modes[{j}].") for j, md in enumerate(fr.get("modes", [])))
    geo = None
    if "geometric" in fr:
        g = fr["geometric"]
        geo = GeometricForcing(float(_number(g, "ratio", "forcing.geometric.")),
                               _mode(_need(g, "mode", "forcing.geometric."), "forcing.geometric.mode."))
    try:
        forcing = ForcingSpec(modes, K0=float(_number(fr, "K0", "forcing.")), T0=float(_number(fr, "T0", "forcing.")),
                              beta=float(_number(fr, "beta", "forcing.")), mu=float(_number(fr, "mu", "forcing.")),
                              geometric=geo)
        return ProblemSpec(
            k=float(_number(data, "k", "")), alpha_D=float(_number(data, "alpha_D", "")),
            c12=_complex(_need(data, "c12", ""), "c12"), cf=_complex(_need(data, "cf", ""), "cf"),
            Q=_poly(_need(data, "Q", ""), "Q"), Q1=_poly(_need(data, "Q1", ""), "Q1"),
            Q2=_poly(_need(data, "Q2", ""), "Q2"),
            R=tuple(_poly(p, f"R[{i}]") for i, p in enumerate(R)), levels=tuple(levels), forcing=forcing,
            eps0=float(_number(data, "eps0", "")), name=str(data.get("name", "problem")),
        )
    except SpecError as exc:
        raise ConfigError(str(exc)) from exc


def _pairs(p: ComplexPolynomial) -> list[list[float]]:
    return p.to_pairs()


def _mode_dict(md: ForcingMode) -> dict:
    return {"n": md.n, "amplitude": [md.amplitude.real, md.amplitude.imag], "mu_prime": md.mu_prime,
            "beta_prime": md.beta_prime, "modal": md.modal, "frequency": md.frequency,
            "eps_poly": _pairs(md.eps_poly)}


def problem_to_dict(spec: ProblemSpec) -> dict:
    fr = spec.forcing
    forcing: dict[str, Any] = {"K0": fr.K0, "T0": fr.T0, "beta": fr.beta, "mu": fr.mu,
                               "modes": [_mode_dict(md) for md in fr.modes]}
    if fr.geometric is not None:
        forcing["geometric"] = {"ratio": fr.geometric.ratio, "mode": _mode_dict(fr.geometric.mode)}
    return {
        "name": spec.name, "k": spec.k, "alpha_D": spec.alpha_D, "eps0": spec.eps0,
        "c12": [spec.c12.real, spec.c12.imag], "cf": [spec.cf.real, spec.cf.imag],
        "Q": _pairs(spec.Q), "Q1": _pairs(spec.Q1), "Q2": _pairs(spec.Q2),
        "R": [_pairs(p) for p in spec.R],
        "levels": [{"index": lv.index, "c": [lv.c.real, lv.c.imag], "d": lv.d, "delta": lv.delta,
                    "Delta": lv.Delta, "kappa": lv.kappa, "A": {str(n): _pairs(p) for n, p in lv.A.items()}}
                   for lv in spec.levels],
        "forcing": forcing,
    }


def _section(cls, data: dict, name: str):
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"[{name}]: unknown fields {sorted(unknown)}")
    out = {}
    for key, value in raw.items():
        ftype = known[key].type
        if ftype in ("int", int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name}.{key}: expected an integer, got {value!r}")
        elif ftype in ("float", float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name}.{key}: expected a number, got {value!r}")
            value = float(value)
        out[key] = value
    return cls(**out)


def config_from_dict(data: dict, path: str | None = None) -> RunConfig:
    problem = problem_from_dict(data)
    return RunConfig(problem, _section(GridConfig, data, "grid"), _section(CoveringConfig, data, "covering"),
                     _section(SolverConfig, data, "solver"), _section(SweepConfig, data, "sweep"), path)


def load_config(path, *, force: bool = False) -> RunConfig:
    """Read a run file and validate its problem.

    Parse errors carry the TOML line and column; schema errors name the
    field.  Unless ``force`` is set, a problem failing validation raises
    :class:`~kborel.problem.SpecError`.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = config_from_dict(data, str(path))
    if not force:
        from .grid import uniform_m_grid

        report = validate_spec(cfg.problem, uniform_m_grid(cfg.grid.n_m, cfg.grid.m_max))
        if not report.passed:
            raise SpecError("validation failed: " + "; ".join(f"{c.name}: {c.detail}" for c in report.failures()))
    return cfg


def load_problem(path, *, force: bool = False) -> ProblemSpec:
    return load_config(path, force=force).problem


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v) if not (isinstance(v, float) and math.isinf(v)) else ("inf" if v > 0 else "-inf")
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


def _dump_table(lines: list[str], name: str, table: dict) -> None:
    scalars = {k: v for k, v in table.items() if not isinstance(v, dict) and not _is_table_list(v)}
    lines.append(f"[{name}]")
    lines.extend(f"{k} = {_toml_value(v)}" for k, v in scalars.items())
    lines.append("")
    for k, v in table.items():
        if isinstance(v, dict):
            _dump_table(lines, f"{name}.{k}", v)
        elif _is_table_list(v):
            for item in v:
                _dump_array_item(lines, f"{name}.{k}", item)


def _dump_array_item(lines: list[str], name: str, item: dict) -> None:
    lines.append(f"[[{name}]]")
    lines.extend(f"{k} = {_toml_value(v)}" for k, v in item.items() if not isinstance(v, dict))
    lines.append("")
    for k, v in item.items():
        if isinstance(v, dict):
            _dump_table(lines, f"{name}.{k}", v)


def _is_table_list(v) -> bool:
    return isinstance(v, list) and bool(v) and all(isinstance(x, dict) for x in v)


def dumps_config(cfg: RunConfig) -> str:
    d = cfg.to_dict()
    prob = d["problem"]
    lines = [f"{k} = {_toml_value(v)}" for k, v in prob.items() if k not in ("levels", "forcing")]
    lines.append("")
    for lv in prob["levels"]:
        _dump_array_item(lines, "levels", lv)
    _dump_table(lines, "forcing", prob["forcing"])
    for name in ("grid", "covering", "solver", "sweep"):
        _dump_table(lines, name, d[name])
    return "\n".join(lines)


def save_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(dumps_config(cfg))
    return path


def desk_config(**grid_overrides) -> RunConfig:
    from .desk import desk_spec

    return RunConfig(desk_spec(), replace(GridConfig(), **grid_overrides))
