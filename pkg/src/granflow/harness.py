"""Verification campaigns: sweeps, contraction runs, oracle comparison.

The reference scenario is the gravity box: unit square, 32 x 32 cells,
``f = (0, -1)``, ``eps = 1e-2``, ``dt = 1e-3`` and 200 steps, starting from
rest with zero pressure. Gravity drives compaction at the bottom, shear
along the walls and a pressure build-up, so yield, dilatancy and the
pressure equation are all active.

``acceptance_suite`` evaluates the ten acceptance properties; the CLI
``check`` command and the acceptance tests both go through it.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .diagnostics import Recorder, eps_scaling_probe
from .fields import (Grid, ScalarField, VectorField, deviator, divergence, sym_gradient,
                     tensor_norm)
from .oracle import NewtonOracle, OracleDivergence
from .regularization import v_eps
from .rheology import RheologyLaw
from .stepper import Integrator, SimulationConfig, initial_state, run

__all__ = [
    "gravity_box",
    "vortex_velocity",
    "bump_phi",
    "SweepSpec",
    "SweepResult",
    "run_sweep",
    "ContractionResult",
    "contraction_test",
    "OracleCheck",
    "oracle_check",
    "CriterionResult",
    "acceptance_suite",
    "CRITERIA",
]

SWEEP_PARAMS = ("eps", "dt", "xi")


# scenarios

def gravity_box(eps: float = 1e-2, dt: float = 1e-3, n_steps: int = 200, f=None,
                cells=(32, 32), u_init: VectorField = None, **kw) -> SimulationConfig:
    """The reference scenario; ``f`` defaults to unit gravity along the last axis."""
    grid = Grid(tuple(cells))
    if f is None:
        f = tuple([0.0] * (grid.dim - 1) + [-1.0])
    return SimulationConfig(grid, t_end=n_steps * dt, dt=dt, eps=eps, f=tuple(f),
                            u_init=u_init, **kw)


def vortex_velocity(grid: Grid, amplitude: float = 1.0) -> VectorField:
    """Discretely divergence-free vortex from ``psi = A sin^2(pi x) sin^2(pi y)``.

    Face velocities are differences of ``psi`` sampled at cell corners,
    so the discrete divergence vanishes to rounding and the normal
    velocity is zero on every wall. In 3D the same vortex spins about the
    z axis with a ``sin(pi z)`` envelope and ``u_z = 0``.
    """
    dim = grid.dim
    X = [np.linspace(0.0, grid.extent[0], grid.cells[0] + 1) / grid.extent[0],
         np.linspace(0.0, grid.extent[1], grid.cells[1] + 1) / grid.extent[1]]
    psi = amplitude * (np.sin(np.pi * X[0]) ** 2)[:, None] * (np.sin(np.pi * X[1]) ** 2)[None, :]
    hx, hy = grid.spacing[:2]
    ux = np.diff(psi, axis=1) / hy
    uy = -np.diff(psi, axis=0) / hx
    if dim == 2:
        return VectorField(grid, (ux, uy))
    zc = (np.arange(grid.cells[2]) + 0.5) / grid.cells[2]
    env = np.sin(np.pi * zc)[None, None, :]
    uz = np.zeros(grid.face_shape(2))
    return VectorField(grid, (ux[:, :, None] * env, uy[:, :, None] * env, uz))


def bump_phi(grid: Grid, law: RheologyLaw, xi: float, fraction: float = 0.9,
             floor: float = 0.5) -> ScalarField:
    """``phi_min + fraction (phi_max - xi - phi_min) b`` with a bump ``b`` in ``[floor, 1]``."""
    if not 0 <= floor <= 1:
        raise ValueError("floor must lie in [0, 1]")
    centers = grid.cell_centers()
    shape = np.ones(grid.cells)
    for k in range(grid.dim):
        shape = shape * np.sin(np.pi * centers[k] / grid.extent[k]) ** 2
    b = floor + (1.0 - floor) * shape
    return ScalarField(grid, law.phi_min + fraction * (law.phi_max - xi - law.phi_min) * b)


def phi_box(xi: float = 0.05, n_steps: int = 200, dt: float = 1e-3, eps: float = 1e-2,
            phi_min: float = 0.3, phi_max: float = 0.6, cells=(32, 32), **kw) -> SimulationConfig:
    """Gravity box with transported volume fraction and the phi-linear law."""
    law = RheologyLaw.phi_linear(phi_min, phi_max)
    grid = Grid(tuple(cells))
    f = tuple([0.0] * (grid.dim - 1) + [-1.0])
    return SimulationConfig(grid, t_end=n_steps * dt, dt=dt, eps=eps, law=law, xi=xi, f=f,
                            phi_init=bump_phi(grid, law, xi), **kw)


# sweeps

@dataclass
class SweepSpec:
    base: SimulationConfig
    param: str
    values: Sequence[float]
    assertions: Sequence[str] = ()
    uniform_factor: float = 3.0

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ValueError(f"swept parameter must be one of {SWEEP_PARAMS}, got {self.param!r}")
        vals = [float(v) for v in self.values]
        if not vals:
            raise ValueError("sweep needs at least one value")
        if any(not v > 0 for v in vals):
            raise ValueError("sweep values must be positive")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep values must be sorted strictly descending")
        unknown = set(self.assertions) - set(ASSERTIONS)
        if unknown:
            raise ValueError(f"unknown assertions {sorted(unknown)}; known: {sorted(ASSERTIONS)}")
        self.values = tuple(vals)

    def member(self, value: float) -> SimulationConfig:
        return replace(self.base, **{self.param: value})


@dataclass
class SweepResult:
    param: str
    rows: list
    fits: dict = field(default_factory=dict)
    assertions: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(ok for ok, _ in self.assertions.values())

    def table(self):
        return [dict(r) for r in self.rows]


def _member_row(cfg: SimulationConfig, param: str, value: float) -> dict:
    rec = Recorder(cfg)
    t0 = time.perf_counter()
    run(cfg, [rec])
    s = rec.summary()
    row = {param: value, "steps": cfg.n_steps, "seconds": time.perf_counter() - t0}
    row.update(s)
    row["energy0"] = rec.energy0
    row["numerical_dissipation"] = float(sum(abs(l.identity_residual) for l in rec.ledgers))
    row["max_closure"] = max([0.0] + [abs(l.closure) for l in rec.ledgers])
    row["picard_mean"] = float(np.mean([r.iterations for r in rec.reports])) if rec.reports else 0.0
    res = rec.residuals
    if res:
        pmax = max(1.0, max(r.p_max for r in res))
        row["complementarity_min"] = min(r.complementarity_min for r in res) / pmax
        row["complementarity_over_bound"] = max(r.complementarity_bound for r in res) / pmax
        row["threshold_slack"] = max(r.threshold_slack for r in res) / pmax
        row["neg_p_complementarity"] = max(r.neg_p_complementarity for r in res)
        row["trace_sigma"] = max(r.trace_sigma for r in res)
    if rec.reports and rec.reports[0].phi_range is not None:
        row["phi_min"] = min(r.phi_range[0] for r in rec.reports)
        row["phi_max"] = max(r.phi_range[1] for r in rec.reports)
    if rec.budget:
        row["h1_worst"] = max(l - r for _, l, r in rec.budget)
    return row


def _member_job(args):
    cfg, param, value = args
    return _member_row(cfg, param, value)


def _slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    keep = y > 0
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def _assert_energy(result, spec):
    def rel(r):
        inc = r["max_energy_increase"]
        if r["energy0"] > 0:
            return inc / r["energy0"]
        # no reference energy: any increase counts as a failure
        return math.inf if inc > 0 else 0.0

    worst = max(rel(r) for r in result.rows)
    return worst <= 1e-8, worst


def _assert_complementarity(result, spec):
    lo = min(r.get("complementarity_min", 0.0) for r in result.rows)
    hi = max(r.get("complementarity_over_bound", 0.0) for r in result.rows)
    sl = max(r.get("threshold_slack", 0.0) for r in result.rows)
    worst = max(-lo, hi, sl)
    return worst <= 1e-12, worst


def _assert_neg_slope(result, spec):
    s = result.fits.get("neg_pressure_slope")
    if s is None:
        return result.fits.get("exact_positivity", False), s
    return s >= 0.4, s


def _assert_uniform(result, spec):
    ratios = [result.fits[f"{k}_ratio"] for k in UNIFORM_KEYS]
    worst = max(ratios)
    return worst < spec.uniform_factor, worst


def _assert_dt_slope(result, spec):
    s = result.fits.get("dissipation_slope")
    return (s is not None and s >= 0.9), s


def _assert_phi(result, spec):
    law, xi = spec.base.law, spec.base.xi
    ok = all(r["phi_min"] >= law.phi_min - 1e-8 and r["phi_max"] <= law.phi_max - xi + 1e-8
             and r["h1_worst"] <= 0.0 for r in result.rows)
    return ok, min(min(r["phi_min"] - law.phi_min, law.phi_max - xi - r["phi_max"])
                   for r in result.rows)


ASSERTIONS = {
    "energy_monotone": _assert_energy,
    "complementarity": _assert_complementarity,
    "neg_pressure_slope": _assert_neg_slope,
    "uniform_bounds": _assert_uniform,
    "dissipation_slope": _assert_dt_slope,
    "phi_bounds": _assert_phi,
}

UNIFORM_KEYS = ("u_linf_l2", "du3", "p_l32")


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Run every member independently; rows come back sorted by value (descending).

    A failing member stops the sweep; rows finished so far are kept and
    the error is recorded on the result.
    """
    jobs = [(spec.member(v), spec.param, v) for v in spec.values]
    rows, error = [], None
    try:
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for row in pool.map(_member_job, jobs):
                    rows.append(row)
        else:
            for job in jobs:
                rows.append(_member_job(job))
    except Exception as exc:  # partial results are part of the contract
        error = f"{type(exc).__name__}: {exc}"
    rows.sort(key=lambda r: -r[spec.param])
    result = SweepResult(spec.param, rows, error=error)
    if len(rows) > 1:
        vals = [r[spec.param] for r in rows]
        if spec.param == "eps":
            probe = eps_scaling_probe(vals, [r["neg_pressure_mass"] for r in rows]) \
                if any(r["neg_pressure_mass"] > 0 for r in rows) else None
            result.fits["exact_positivity"] = probe is None
            result.fits["neg_pressure_slope"] = None if probe is None else probe.slope
        if spec.param == "dt":
            result.fits["dissipation_slope"] = _slope(vals, [r["numerical_dissipation"] for r in rows])
        for k in UNIFORM_KEYS:
            col = np.array([r[k] for r in rows])
            result.fits[f"{k}_ratio"] = float(col.max() / col.min()) if col.min() > 0 else math.inf
            result.fits[f"{k}_over_median"] = float(col.max() / np.median(col)) if np.median(col) > 0 else math.inf
    if error is None:
        for name in spec.assertions:
            ok, value = ASSERTIONS[name](result, spec)
            result.assertions[name] = (bool(ok), value)
    return result


# contraction

@dataclass
class ContractionResult:
    differences: np.ndarray
    max_relative_growth: float
    max_growth: float

    @property
    def final_ratio(self) -> float:
        d0 = self.differences[0]
        return float(self.differences[-1] / d0) if d0 > 0 else 0.0


def contraction_test(cfg: SimulationConfig, amplitude: float = 1e-6,
                     perturbation: VectorField = None, perturb: str = "u_init") -> ContractionResult:
    """Two runs differing only in ``u_init``; track ``|u2 - u1|_2`` per step.

    The perturbation defaults to the unit-norm vortex. Perturbing anything
    other than the initial velocity is refused: the test compares
    solutions of the same problem.
    """
    if perturb != "u_init":
        raise ValueError(f"contraction test perturbs u_init only, got perturb={perturb!r}; "
                         "both runs must share f and every other datum")
    grid = cfg.grid
    vol = grid.cell_volume
    delta = vortex_velocity(grid) if perturbation is None else perturbation
    d = delta.interior()
    norm = math.sqrt(vol * float(np.sum(d * d)))
    d = d / norm if norm > 0 else d
    base = cfg.u_init.interior() if cfg.u_init is not None else np.zeros_like(d)
    cfg2 = replace(cfg, u_init=VectorField.from_interior(grid, base + amplitude * d))
    s1, s2 = initial_state(cfg), initial_state(cfg2)
    i1, i2 = Integrator(cfg), Integrator(cfg2)

    def gap(a, b):
        e = a.u.interior() - b.u.interior()
        return math.sqrt(vol * float(np.sum(e * e)))

    diffs = [gap(s1, s2)]
    for n in range(cfg.n_steps):
        s1, _ = i1.step(s1, n)
        s2, _ = i2.step(s2, n)
        diffs.append(gap(s1, s2))
    diffs = np.array(diffs)
    growth = np.diff(diffs)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(diffs[:-1] > 0, growth / diffs[:-1], 0.0)
    return ContractionResult(diffs, float(rel.max(initial=-np.inf)) if len(rel) else 0.0,
                             float(growth.max(initial=-np.inf)) if len(growth) else 0.0)


# oracle

@dataclass
class OracleCheck:
    gap: float
    gap_u: float
    gap_p: float
    newton_iterations: int
    newton_residual: float
    picard_iterations: int


def oracle_check(cfg: SimulationConfig, state=None, tol: float = 1e-13) -> OracleCheck:
    """Max-norm gap between one stepper step and the Newton oracle.

    Raises ``OracleDivergence`` if the oracle fails; that is reported
    separately from a large gap.
    """
    oracle = NewtonOracle(cfg)
    state = initial_state(cfg) if state is None else state
    new, report = Integrator(cfg).step(state, int(round(state.time / cfg.dt)))
    ref = oracle.solve(state.u.interior(), state.p.values.ravel(), tol=tol)
    gu = float(np.abs(ref.u - new.u.interior()).max(initial=0.0))
    gp = float(np.abs(ref.p - new.p.values.ravel()).max(initial=0.0))
    return OracleCheck(max(gu, gp), gu, gp, ref.iterations, ref.residual, report.iterations)


# acceptance suite

@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: str
    threshold: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] criterion {self.number:2d} {self.name}: {self.measured} "
                f"(required {self.threshold}; {self.seconds:.1f} s)")


def _random_fields(rng, count, big):
    """Grid sizes for the deviator check: mostly small, a few large."""
    sizes = []
    for i in range(count):
        if i < big:
            sizes.append((32, 32, 32) if i % 2 == 0 else (32, 32))
        else:
            dim = 2 if i % 2 else 3
            sizes.append(tuple(int(n) for n in rng.integers(2, 9, size=dim)))
    return sizes


def criterion_deviator(n_fields: int = 10_000, n_large: int = 4, seed: int = 1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for cells in _random_fields(rng, n_fields, n_large):
        extent = tuple(float(e) for e in rng.uniform(0.5, 2.0, size=len(cells)))
        grid = Grid(cells, extent)
        comps = []
        for k in range(grid.dim):
            c = rng.normal(size=grid.face_shape(k))
            comps.append(c)
        u = VectorField.from_interior(grid, VectorField(grid, tuple(comps)).interior())
        D = sym_gradient(u)
        divu = divergence(u)
        S = deviator(D, divu, grid.dim)
        dn = tensor_norm(D).values ** 2
        sn = tensor_norm(S).values ** 2
        gap = np.abs(dn - sn - divu.values ** 2 / (2 * grid.dim))
        rel = gap / np.maximum(dn, np.finfo(float).tiny)
        worst = max(worst, float(rel.max()))
    return worst <= 1e-12, worst


def criterion_v_eps(n: int = 1_000_000, seed: int = 2):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-10.0, 10.0, n)
    y = rng.uniform(-10.0, 10.0, n)
    eps = rng.uniform(0.0, 2.0, n)
    eps = np.where(eps == 0.0, 2.0, eps)             # sample (0, 2]
    v = v_eps(x, eps)
    w = v_eps(y, eps)
    bad = {}
    h = 1e-13 * eps * eps
    right = v_eps(h, eps) / h
    left = v_eps(-h, eps) / (-h)
    bad["c1"] = int(np.sum(np.abs(right * eps - 1) > 1e-12) + np.sum(np.abs(left * eps - 1) > 1e-12))
    bad["sign"] = int(np.sum(x * v < 0))
    pos = x > 0
    gap = np.sqrt(x[pos]) - v[pos]
    bad["sqrt_gap"] = int(np.sum((gap < -1e-15) | (gap > eps[pos] / 2)))
    lo, hi = np.minimum(x, y), np.maximum(x, y)
    vlo, vhi = np.where(x < y, v, w), np.where(x < y, w, v)
    distinct = hi > lo
    bad["monotone"] = int(np.sum(distinct & ~(vhi > vlo)))
    mid = v_eps(0.5 * (x + y), eps)
    # relative slack: on the linear branch values reach 1e5 and one ulp is ~1e-11
    scale = np.maximum(1.0, np.maximum(np.abs(v), np.abs(w)))
    bad["concave"] = int(np.sum(mid < 0.5 * (v + w) - 1e-12 * scale))
    total = sum(bad.values())
    return total == 0, bad


def criterion_zero(n_steps: int = 100):
    cfg = gravity_box(f=(0.0, 0.0), n_steps=n_steps)
    st = initial_state(cfg)
    integ = Integrator(cfg)
    iters = []
    for n in range(cfg.n_steps):
        st, rep = integ.step(st, n)
        iters.append(rep.iterations)
        if not (all(np.all(c == 0) for c in st.u.components) and np.all(st.p.values == 0)):
            return False, f"nonzero at step {n + 1}"
    return max(iters) == 1, f"exactly zero for {n_steps} steps, {max(iters)} Picard iteration(s)"


ENERGY_DTS = (4e-3, 2e-3, 1e-3, 5e-4)


def energy_sweep(t_end: float = 0.1, amplitude: float = 0.1, workers: int = 1) -> SweepResult:
    grid = Grid((32, 32))
    base = SimulationConfig(grid, t_end=t_end, dt=ENERGY_DTS[0], eps=1e-2, f=(0.0, 0.0),
                            u_init=vortex_velocity(grid, amplitude), picard_tol=1e-10)
    spec = SweepSpec(base, "dt", ENERGY_DTS, ("energy_monotone", "dissipation_slope"))
    return run_sweep(spec, workers)


EPS_VALUES = (1e-1, 1e-2, 1e-3, 1e-4)


def eps_sweep(workers: int = 1) -> SweepResult:
    spec = SweepSpec(gravity_box(), "eps", EPS_VALUES,
                     ("neg_pressure_slope", "uniform_bounds", "complementarity"))
    return run_sweep(spec, workers)


def criterion_contraction():
    res = contraction_test(gravity_box(), 1e-6)
    ok = res.max_relative_growth <= 1e-3 and res.differences[-1] < res.differences[0]
    return ok, res


def criterion_phi():
    cfg = phi_box(strict_phi_bounds=False)
    row = _member_row(cfg, "xi", cfg.xi)
    law = cfg.law
    ok = (row["phi_min"] >= law.phi_min - 1e-8 and row["phi_max"] <= law.phi_max - cfg.xi + 1e-8
          and row["h1_worst"] <= 0.0)
    return ok, row


def criterion_scaling():
    from .scaling import PhysicalScales, analyze, redimensionalize

    s = PhysicalScales(L=0.1, U=0.1, T=0.01, d=0.01, g=10.0)
    r = analyze(s)
    exact = r.eps_scale == 1e-2 and r.Fr2 == 1e-2 and r.Di == 1e-2
    back = redimensionalize(r, s.L, s.g)
    err = max(abs(back[k] - getattr(s, k)) / getattr(s, k) for k in ("U", "T", "d", "phi_max"))
    return exact and err <= 1e-14, (r.eps_scale, r.Fr2, r.Di, err)


def criterion_oracle():
    grid = Grid((4, 4))
    cfg = SimulationConfig(grid, t_end=1e-3, dt=1e-3, eps=0.1, f=(1.0, 0.0))
    chk = oracle_check(cfg)
    return chk.gap <= 1e-8, chk


def _timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


def acceptance_suite(only: Sequence[int] = None, workers: int = 1,
                     report: Callable[[CriterionResult], None] = None) -> list:
    """Evaluate the acceptance properties; returns ``CriterionResult`` rows."""
    wanted = set(range(1, 11)) if only is None else set(only)
    out = []

    def emit(res):
        out.append(res)
        if report is not None:
            report(res)

    if 1 in wanted:
        (ok, worst), t = _timed(criterion_deviator)
        emit(CriterionResult(1, "deviator identity", ok, f"max relative gap {worst:.3e}", "<= 1e-12", t))
    if 2 in wanted:
        (ok, bad), t = _timed(criterion_v_eps)
        emit(CriterionResult(2, "V_eps kernel suite", ok, f"violations {bad}", "none", t))
    if 3 in wanted:
        (ok, msg), t = _timed(criterion_zero)
        emit(CriterionResult(3, "zero fixed point", ok, msg, "bitwise zero", t))
    if 4 in wanted:
        res, t = _timed(energy_sweep, workers=workers)
        mono = res.assertions.get("energy_monotone", (False, None))
        slope = res.assertions.get("dissipation_slope", (False, None))
        emit(CriterionResult(4, "energy dissipation", res.passed,
                             f"max increase/E0 {mono[1]:.3e}, defect slope {_fmt(slope[1])}",
                             "<= 1e-8 and slope >= 0.9, < 60 s", t))
        if t >= 60.0:
            out[-1].passed = False
    sweep = None
    if 5 in wanted or 6 in wanted:
        sweep, t6 = _timed(eps_sweep, workers=workers)
    if 5 in wanted:
        row = next(r for r in sweep.rows if r["eps"] == 1e-2) if sweep.rows else None
        if row is None:
            emit(CriterionResult(5, "complementarity", False, sweep.error or "no run", "", 0.0))
        else:
            worst = max(-row["complementarity_min"], row["complementarity_over_bound"],
                        row["threshold_slack"])
            emit(CriterionResult(5, "complementarity", worst <= 1e-12,
                                 f"worst relative violation {worst:.3e}", "<= 1e-12", row["seconds"]))
    if 6 in wanted:
        slope = sweep.fits.get("neg_pressure_slope")
        ratios = {k: sweep.fits.get(f"{k}_ratio") for k in UNIFORM_KEYS}
        ok = sweep.error is None and sweep.assertions["neg_pressure_slope"][0] \
            and sweep.assertions["uniform_bounds"][0] and t6 < 300.0
        emit(CriterionResult(6, "pressure positivity scaling", ok,
                             f"slope {_fmt(slope)}, ratios " +
                             ", ".join(f"{k} {v:.3f}" for k, v in ratios.items()),
                             "slope >= 0.4, ratios < 3, < 300 s", t6))
    if 7 in wanted:
        (ok, res), t = _timed(criterion_contraction)
        emit(CriterionResult(7, "contraction", ok,
                             f"max relative growth {res.max_relative_growth:.3e}, "
                             f"final/initial {res.final_ratio:.3e}", "<= 1e-3 and < 1", t))
    if 8 in wanted:
        (ok, row), t = _timed(criterion_phi)
        emit(CriterionResult(8, "phi bounds and H1 budget", ok,
                             f"phi in [{row['phi_min']:.6f}, {row['phi_max']:.6f}], "
                             f"budget worst lhs-rhs {row['h1_worst']:.3e}",
                             "[0.3 - 1e-8, 0.55 + 1e-8], lhs <= rhs", t))
    if 9 in wanted:
        (ok, vals), t = _timed(criterion_scaling)
        emit(CriterionResult(9, "scaling module", ok,
                             f"eps={vals[0]!r}, Fr2={vals[1]!r}, Di={vals[2]!r}, round trip {vals[3]:.1e}",
                             "exactly 1e-2, round trip <= 1e-14", t))
    if 10 in wanted:
        try:
            (ok, chk), t = _timed(criterion_oracle)
            emit(CriterionResult(10, "oracle equivalence", ok, f"max-norm gap {chk.gap:.3e}", "<= 1e-8", t))
        except OracleDivergence as exc:
            emit(CriterionResult(10, "oracle equivalence", False, f"oracle diverged: {exc}", "<= 1e-8"))
    return out


def _fmt(x):
    return "n/a" if x is None else f"{x:.4f}"


CRITERIA = tuple(range(1, 11))
