"""Command line entry point: config ingestion, runs and plot-ready output.

Config files are sections of ``key = value`` lines; ``#`` starts a
comment. Unknown sections or keys are rejected, and every error message
carries the offending line number. Example::

    [grid]
    cells = 32, 32

    [time]
    dt = 1e-3
    t_end = 0.2

    [regularization]
    eps = 1e-2

Exit codes: 0 success, 1 assertion failure, 2 configuration error,
3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diagnostics import LEDGER_COLUMNS, RESIDUAL_COLUMNS, Recorder, write_rows
from .errors import SolverError
from .fields import Grid, ScalarField, VectorField, export_field
from .oracle import OracleDivergence
from .phi_dynamics import PhiParams
from .rheology import RheologyLaw
from .scaling import PhysicalScales, format_report, redimensionalize, reduce
from .stepper import LINEAR_SOLVERS, SimulationConfig, run

__all__ = [
    "ConfigError",
    "ParsedConfig",
    "RunManifest",
    "parse_config",
    "serialize_config",
    "emit_plots",
    "main",
    "EXIT_OK",
    "EXIT_ASSERTION",
    "EXIT_CONFIG",
    "EXIT_SOLVER",
]

EXIT_OK, EXIT_ASSERTION, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based or ``None``."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# schema: section -> key -> (kind, default); REQUIRED marks mandatory keys
REQUIRED = object()

SCHEMA = {
    "grid": {"cells": ("ints", REQUIRED), "extent": ("floats", None)},
    "time": {"dt": ("float", REQUIRED), "t_end": ("float", REQUIRED)},
    "regularization": {"eps": ("float", REQUIRED)},
    "rheology": {
        "kind": (("constant", "phi_linear", "mu_of_I"), "constant"),
        "alpha0": ("float", 1.0), "beta0": ("float", 1.0),
        "phi_min": ("float", 0.3), "phi_max": ("float", 0.6),
        "mu2": ("float", 2.0), "I0": ("float", 0.3), "d": ("float", 1.0),
        "rho0": ("float", 1.0), "phi0": ("float", None),
    },
    "phi": {
        "xi": ("float", REQUIRED),
        "init": (("bump", "uniform"), "bump"),
        "fraction": ("float", 0.9), "floor": ("float", 0.5), "value": ("float", None),
        "strict_bounds": ("bool", True),
    },
    "forcing": {"f": ("floats", None)},
    "solver": {
        "picard_tol": ("float", 1e-10), "picard_max_iter": ("int", 200),
        "anderson_depth": ("int", 5), "viscosity_floor": ("float", 1e-8),
        "viscosity": ("bool", True), "augmentation": ("bool", True),
        "linear_solver": (LINEAR_SOLVERS, "reuse"), "linear_tol": ("float", 1e-12),
    },
    "scales": {
        "L": ("float", REQUIRED), "U": ("float", REQUIRED), "T": ("float", REQUIRED),
        "d": ("float", REQUIRED), "g": ("float", 9.81), "rho0": ("float", 1.0),
        "phi0": ("float", 0.59), "phi_min": ("float", 0.4), "phi_max": ("float", 0.6),
        "alpha0": ("float", 0.5), "band": ("float", 10.0),
    },
    "initial": {"u": (("zero", "vortex"), "zero"), "amplitude": ("float", 0.1)},
}

SIMULATION_SECTIONS = ("grid", "time", "regularization")


@dataclass
class ParsedConfig:
    """Validated configuration plus its normalized key-value form."""

    values: dict
    simulation: Optional[SimulationConfig] = None
    phi: Optional[PhiParams] = None
    scales: Optional[PhysicalScales] = None
    band: float = 10.0
    lines: dict = field(default_factory=dict, repr=False, compare=False)

    def __eq__(self, other):
        return isinstance(other, ParsedConfig) and self.values == other.values


@dataclass(frozen=True)
class RunManifest:
    config_path: str
    out_dir: Optional[str]
    snapshot_every: int
    subcommand: str

    def __post_init__(self):
        if self.snapshot_every < 1:
            raise ConfigError(f"snapshot cadence must be >= 1, got {self.snapshot_every}")
        if self.out_dir is not None:
            os.makedirs(self.out_dir, exist_ok=True)
            if not os.access(self.out_dir, os.W_OK):
                raise ConfigError(f"output directory {self.out_dir!r} is not writable")


def _convert(kind, raw: str, line: int):
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError
        if kind in ("floats", "ints"):
            cast = float if kind == "floats" else int
            parts = [s.strip() for s in raw.split(",")]
            if not all(parts):
                raise ValueError
            return tuple(cast(s) for s in parts)
    except ValueError:
        raise ConfigError(f"cannot read {raw!r} as {kind}", line) from None
    if raw not in kind:
        raise ConfigError(f"{raw!r} is not one of {', '.join(kind)}", line)
    return raw


def _tokenize(text: str):
    """Raw ``{section: {key: (value, line)}}`` plus section header lines."""
    sections, headers, current = {}, {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError(f"malformed section header {body!r}", n)
            current = body[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]; known: {', '.join(SCHEMA)}", n)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", n)
            sections[current], headers[current] = {}, n
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", n)
        if current is None:
            raise ConfigError("key outside any section", n)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA[current]:
            raise ConfigError(
                f"unknown key {key!r} in [{current}]; known: {', '.join(SCHEMA[current])}", n)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", n)
        sections[current][key] = (value, n)
    return sections, headers


def _line_for(message: str, lines: dict, section_order):
    """Best line for an invariant message: the first key it names."""
    for sec in section_order:
        for key, n in lines.get(sec, {}).items():
            if key != "__header__" and re.search(rf"\b{re.escape(key)}\b", message):
                return n
    for sec in section_order:
        if sec in lines:
            return lines[sec]["__header__"]
    return None


def parse_config(text: str, require_simulation: bool = True) -> ParsedConfig:
    """Parse and fully validate a configuration text.

    Parameters
    ----------
    text : str
        Config file content.
    require_simulation : bool
        When false, the ``[grid]``, ``[time]`` and ``[regularization]``
        sections may be absent (scale-only files for ``reduce``).

    Raises
    ------
    ConfigError
        Unknown or missing keys, unreadable values or violated invariants,
        with the line number of the offending entry.
    """
    raw, headers = _tokenize(text)
    if require_simulation or any(s in raw for s in SIMULATION_SECTIONS):
        for sec in SIMULATION_SECTIONS:
            if sec not in raw:
                raise ConfigError(f"missing required section [{sec}]")
    values, lines = {}, {}
    for sec, entries in raw.items():
        vals, where = {}, {"__header__": headers[sec]}
        for key, (kind, default) in SCHEMA[sec].items():
            if key in entries:
                text_value, n = entries[key]
                vals[key] = _convert(kind, text_value, n)
                where[key] = n
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {key!r} in [{sec}]", headers[sec])
            else:
                vals[key] = default
        values[sec], lines[sec] = vals, where

    out = ParsedConfig(values=values, lines=lines)

    def guard(fn, sections):
        try:
            return fn()
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), _line_for(str(exc), lines, sections)) from None

    if "scales" in values:
        s = dict(values["scales"])
        band = s.pop("band")
        out.scales = guard(lambda: PhysicalScales(**s), ["scales"])
        if not band >= 1:
            raise ConfigError(f"band must be >= 1, got {band}", lines["scales"].get("band"))
        out.band = band
    if "grid" in values:
        out.simulation = guard(lambda: _build_simulation(values),
                               ["regularization", "time", "phi", "grid", "rheology",
                                "forcing", "solver", "initial"])
        if "phi" in values:
            law = out.simulation.law
            out.phi = guard(lambda: PhiParams(law.phi_min, law.phi_max, values["phi"]["xi"]),
                            ["phi", "rheology"])
    return out


def _build_simulation(values: dict) -> SimulationConfig:
    g = values["grid"]
    grid = Grid(g["cells"], g["extent"])
    r = dict(values.get("rheology", SCHEMA_DEFAULTS["rheology"]))
    law = RheologyLaw(**r)
    phi_vals = values.get("phi")
    if phi_vals is not None and law.kind == "constant":
        raise ValueError("the [phi] section needs a phi-dependent rheology kind "
                         "(phi_linear or mu_of_I)")
    f = values.get("forcing", {}).get("f")
    f = (0.0,) * grid.dim if f is None else f
    init = values.get("initial", SCHEMA_DEFAULTS["initial"])
    u_init = None
    if init["u"] == "vortex":
        from .harness import vortex_velocity

        u_init = vortex_velocity(grid, init["amplitude"])
    phi_init, xi = None, 0.0
    if phi_vals is not None:
        xi = phi_vals["xi"]
        if not 0 < xi <= law.delta_phi:
            raise ValueError(f"xi must satisfy 0 < xi <= phi_max - phi_min = {law.delta_phi}, got {xi}")
        if phi_vals["init"] == "bump":
            from .harness import bump_phi

            phi_init = bump_phi(grid, law, xi, phi_vals["fraction"], phi_vals["floor"])
        else:
            if phi_vals["value"] is None:
                raise ValueError("phi init = uniform needs a value")
            phi_init = ScalarField(grid, np.full(grid.cells, phi_vals["value"]))
    solver = dict(values.get("solver", SCHEMA_DEFAULTS["solver"]))
    strict = phi_vals["strict_bounds"] if phi_vals is not None else True
    t = values["time"]
    return SimulationConfig(grid, t_end=t["t_end"], dt=t["dt"],
                            eps=values["regularization"]["eps"], law=law, xi=xi, f=f,
                            u_init=u_init, phi_init=phi_init, strict_phi_bounds=strict, **solver)


SCHEMA_DEFAULTS = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    return str(v)


def serialize_config(cfg: ParsedConfig) -> str:
    """Normalized config text; ``parse_config`` of it gives back ``cfg``."""
    out = []
    for sec in SCHEMA:
        if sec not in cfg.values:
            continue
        out.append(f"[{sec}]")
        for key, v in cfg.values[sec].items():
            if v is not None:
                out.append(f"{key} = {_format_value(v)}")
        out.append("")
    return "\n".join(out)


# output

def _midline_profiles(state) -> list:
    """Rows along the first axis through the middle of the others."""
    grid = state.p.grid
    mid = tuple(n // 2 for n in grid.cells[1:])
    xs = grid.cell_centers()[0][(slice(None),) + mid]
    rows = []
    for i, x in enumerate(xs):
        idx = (i,) + mid
        row = {"x": float(x), "p": float(state.p.values[idx])}
        for k, comp in enumerate(state.u.components):
            # face values averaged to the cell centre
            lo = list(idx)
            hi = list(idx)
            hi[k] += 1
            row[f"u{k}"] = float(0.5 * (comp[tuple(lo)] + comp[tuple(hi)]))
        if state.phi is not None:
            row["phi"] = float(state.phi.values[idx])
        rows.append(row)
    return rows


STEP_COLUMNS = ["step", "time", "iterations", "increment", "residual_p", "residual_u"]

PLOT_STUB = '''"""Plot {title} from {data}. Edit freely; only the data file is assumed."""
import csv
import sys

import matplotlib.pyplot as plt

with open("{data}") as fh:
    rows = list(csv.DictReader(fh))
if not rows:
    sys.exit("no rows in {data}")
x = [float(r["{x}"]) for r in rows]
for name in {columns!r}:
    plt.plot(x, [float(r[name]) for r in rows], label=name)
plt.xlabel("{x}")
plt.legend()
plt.savefig("{png}")
'''


def emit_plots(out_dir: str, recorder: Recorder, state) -> list:
    """Write ledger, residual, step and profile tables plus plotting stubs.

    Returns the list of written file names. A run without steps gives
    header-only tables.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def put(name, rows, columns):
        write_rows(os.path.join(out_dir, name), rows, columns)
        written.append(name)

    put("ledger.csv", recorder.ledger_rows(), LEDGER_COLUMNS)
    put("residuals.csv", recorder.residual_rows(), RESIDUAL_COLUMNS)
    steps = STEP_COLUMNS + (["phi_min", "phi_max"] if state.phi is not None else [])
    put("steps.csv", recorder.step_rows(), steps)
    profile = _midline_profiles(state)
    put("profiles.csv", profile, list(profile[0].keys()))
    if recorder.budget:
        rows = [{"time": t, "lhs": a, "rhs": b} for t, a, b in recorder.budget]
        put("h1_budget.csv", rows, ["time", "lhs", "rhs"])
    stubs = [("plot_ledger.py", "energy ledger", "ledger.csv", "time",
              ["kinetic", "visc_dissipation", "pressure_dissipation", "work"]),
             ("plot_residuals.py", "residuals", "residuals.csv", "time",
              ["complementarity_defect", "neg_pressure_mass"]),
             ("plot_profiles.py", "midline profiles", "profiles.csv", "x",
              [c for c in profile[0] if c != "x"])]
    if state.phi is not None:
        stubs.append(("plot_phi_range.py", "phi range", "steps.csv", "time", ["phi_min", "phi_max"]))
    for name, title, data, x, cols in stubs:
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(PLOT_STUB.format(title=title, data=data, x=x, columns=cols,
                                      png=name.replace(".py", ".png")))
        written.append(name)
    return written


# subcommands

def _load(path: str, require_simulation: bool = True) -> ParsedConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    return parse_config(text, require_simulation)


def _cmd_run(args, want_phi: bool) -> int:
    parsed = _load(args.config)
    cfg = parsed.simulation
    if want_phi and not cfg.has_phi:
        raise ConfigError("run-phi needs a [phi] section")
    if not want_phi and cfg.has_phi:
        raise ConfigError("config has a [phi] section; use run-phi")
    manifest = RunManifest(args.config, args.out, args.snapshot_every, args.command)
    rec = Recorder(cfg)
    every = manifest.snapshot_every

    def snapshot(state, report):
        n = 0 if report is None else report.step
        if n % every == 0 or n == cfg.n_steps:
            export_field(state.u, os.path.join(manifest.out_dir, f"u_{n:06d}.txt"))
            export_field(state.p, os.path.join(manifest.out_dir, f"p_{n:06d}.txt"))
            if state.phi is not None:
                export_field(state.phi, os.path.join(manifest.out_dir, f"phi_{n:06d}.txt"))

    with open(os.path.join(manifest.out_dir, "config.cfg"), "w") as fh:
        fh.write(serialize_config(parsed))
    result = run(cfg, [rec, snapshot])
    emit_plots(manifest.out_dir, rec, result.state)
    s = rec.summary()
    print(f"steps = {cfg.n_steps}")
    for k, v in s.items():
        print(f"{k} = {v:.17g}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .harness import SweepSpec, run_sweep

    parsed = _load(args.config)
    try:
        values = [float(v) for v in args.values.split(",")]
    except ValueError:
        raise ConfigError(f"cannot read sweep values {args.values!r}") from None
    asserts = [a for a in args.asserts.split(",") if a] if args.asserts else []
    try:
        spec = SweepSpec(parsed.simulation, args.param, values, asserts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res = run_sweep(spec, workers=args.workers)
    if res.rows:
        columns = list(res.rows[0].keys())
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            write_rows(os.path.join(args.out, "sweep.csv"), res.rows, columns)
        print(",".join(columns))
        for r in res.rows:
            print(",".join(format(r[c], ".17g") if isinstance(r[c], float) else str(r[c])
                           for c in columns))
    for k, v in res.fits.items():
        print(f"fit {k} = {'n/a' if v is None else format(float(v), '.17g')}")
    for name, (ok, val) in res.assertions.items():
        print(f"assert {name}: {'pass' if ok else 'FAIL'} ({val})")
    if res.error:
        print(f"error: {res.error}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK if res.passed else EXIT_ASSERTION


def _cmd_contraction(args) -> int:
    from .harness import contraction_test

    cfg = _load(args.config).simulation
    res = contraction_test(cfg, amplitude=args.amplitude)
    ok = res.max_relative_growth <= 1e-3 and res.final_ratio < 1.0
    print(f"max_relative_growth = {res.max_relative_growth:.17g}")
    print(f"final_ratio = {res.final_ratio:.17g}")
    return EXIT_OK if ok else EXIT_ASSERTION


def _cmd_oracle(args) -> int:
    from .harness import oracle_check

    cfg = _load(args.config).simulation
    try:
        chk = oracle_check(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(f"gap = {chk.gap:.17g}")
    print(f"newton_iterations = {chk.newton_iterations}")
    print(f"picard_iterations = {chk.picard_iterations}")
    return EXIT_OK if chk.gap <= args.tol else EXIT_ASSERTION


def _cmd_reduce(args) -> int:
    parsed = _load(args.config, require_simulation=False)
    if parsed.scales is None:
        raise ConfigError("reduce needs a [scales] section")
    red = reduce(parsed.scales, parsed.band)
    text = format_report(red.report, red)
    back = redimensionalize(red.report, parsed.scales.L, parsed.scales.g)
    text += "".join(f"redimensionalized_{k} = {format(v, '.17g')}\n" for k, v in back.items())
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_check(args) -> int:
    from .harness import acceptance_suite

    if args.config:
        _load(args.config, require_simulation=False)
    only = [int(c) for c in args.only.split(",")] if args.only else None
    results = acceptance_suite(only=only, workers=args.workers,
                               report=lambda r: print(r.line(), flush=True))
    return EXIT_OK if all(r.passed for r in results) else EXIT_ASSERTION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="granflow", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "run-phi"):
        p = sub.add_parser(name, help=f"{'phi-coupled ' if name == 'run-phi' else ''}time run")
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--snapshot-every", type=int, default=50)
    p = sub.add_parser("sweep", help="parameter sweep with fitted rates")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, choices=("eps", "dt", "xi"))
    p.add_argument("--values", required=True, help="comma separated, descending")
    p.add_argument("--asserts", default="", help="comma separated assertion names")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p = sub.add_parser("contraction", help="perturbed-twin contraction test")
    p.add_argument("--config", required=True)
    p.add_argument("--amplitude", type=float, default=1e-6)
    p = sub.add_parser("oracle", help="one-step comparison with a Newton solve")
    p.add_argument("--config", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p = sub.add_parser("reduce", help="dimensionless groups and reduced coefficients")
    p.add_argument("--config", required=True)
    p = sub.add_parser("check", help="full invariant suite on the reference scenario")
    p.add_argument("--config")
    p.add_argument("--only", default="", help="comma separated criterion numbers")
    p.add_argument("--workers", type=int, default=1)
    return ap


COMMANDS = {
    "run": lambda a: _cmd_run(a, False),
    "run-phi": lambda a: _cmd_run(a, True),
    "sweep": _cmd_sweep,
    "contraction": _cmd_contraction,
    "oracle": _cmd_oracle,
    "reduce": _cmd_reduce,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, OracleDivergence) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
