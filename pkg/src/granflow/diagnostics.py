"""Energy budget, pointwise residuals and run-level measurements.

Every integral is the cell-volume (midpoint) quadrature of the
discretization, so identities that hold algebraically for the scheme
close to solver tolerance here.

The discrete energy balance of one backward Euler step reads::

    E' - E + dt [4 |Du|_3^3 + 2 nu_min |Du|^2 + eps |grad p|^2 + int b p V(p)]
        - dt int f.u = -(|u' - u|^2 + eps |p' - p|^2) / 2

with ``E = |u|^2/2 + eps |p|^2/2`` (mass-weighted by ``phi`` on faces
for variable volume fraction runs). The right side is the numerical
dissipation of the implicit step; ``identity_residual`` is the left side
and ``closure`` is left minus right, which only carries solver error.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .fields import contraction_weights, mac_operators
from .regularization import shear_values, v_eps
from .rheology import law_coefficients

__all__ = [
    "EnergyLedger",
    "ResidualReport",
    "ledger",
    "residuals",
    "eps_scaling_probe",
    "ProbeResult",
    "Recorder",
    "write_rows",
    "neg_pressure_mass",
]


@dataclass
class EnergyLedger:
    time: float
    kinetic: float
    kinetic_u: float
    visc_dissipation: float
    floor_dissipation: float
    pressure_dissipation: float
    grad_p_dissipation: float
    coupling: float
    work: float
    numerical_dissipation: float
    identity_residual: float
    closure: float
    du3: float = 0.0


@dataclass
class ResidualReport:
    time: float
    complementarity_defect: float
    complementarity_min: float
    complementarity_bound: float
    neg_p_complementarity: float
    threshold_excess: float
    threshold_slack: float
    trace_sigma: float
    div_constraint_residual: float
    div_constraint_scale: float
    momentum_residual: float
    momentum_scale: float
    neg_pressure_mass: float
    p_min: float
    p_max: float
    stress_defect: float = 0.0
    alpha_p_plus: float = 0.0


class _Strain:
    def __init__(self, cfg, state):
        from .stepper import strain_parts

        grid = cfg.grid
        self.ops = mac_operators(grid)
        self.u = state.u.interior()
        self.p = state.p.values.ravel()
        D = self.ops.G @ self.u
        self.D = D
        self.S, self.Dn, self.Sn, self.divu = strain_parts(grid, D)
        phi = None if state.phi is None else state.phi.values.ravel()
        self.alpha, self.a, self.b = law_coefficients(cfg.law, phi, self.Sn, self.p)
        self.w = np.repeat(contraction_weights(grid.dim), grid.n_cells)


def _mass(cfg, state):
    from .stepper import face_average

    if state.phi is None:
        return np.ones(mac_operators(cfg.grid).n_u)
    return face_average(cfg.grid, state.phi.values)


def _energy(cfg, state):
    vol = cfg.grid.cell_volume
    u = state.u.interior()
    ku = 0.5 * vol * float(np.sum(_mass(cfg, state) * u * u))
    return ku + 0.5 * cfg.eps * vol * float(np.sum(state.p.values ** 2)), ku


def ledger(state, prev_state, cfg) -> EnergyLedger:
    """Energy balance of the step ``prev_state -> state``.

    Rates (dissipations, work) are per unit time at the new state; the
    kinetic column is the total energy ``E`` at the new state.
    """
    grid, eps, dt = cfg.grid, cfg.eps, cfg.dt
    vol = grid.cell_volume
    st = _Strain(cfg, state)
    ops = st.ops
    E, ku = _energy(cfg, state)
    E0, _ = _energy(cfg, prev_state)
    du3 = vol * float(np.sum(st.Dn ** 3))
    visc = 4.0 * du3 if cfg.viscosity else 0.0
    floor = 2.0 * cfg.viscosity_floor * vol * float(np.sum(st.Dn ** 2))
    pdis = vol * float(np.sum(st.b * st.p * v_eps(st.p, eps)))
    gp = ops.Grad_full @ st.p
    gdis = eps * float(np.sum(ops.grad_weights * gp * gp))
    coupling = 2.0 * vol * float(np.sum((st.alpha - st.a) * st.p * shear_values(st.Sn, eps)))
    work = vol * float(np.sum(cfg.forcing_interior() * st.u))
    du = st.u - prev_state.u.interior()
    dp = st.p - prev_state.p.values.ravel()
    mass0 = _mass(cfg, prev_state)
    num = 0.5 * vol * (float(np.sum(mass0 * du * du)) + eps * float(np.sum(dp * dp))) / dt
    resid = E - E0 + dt * (visc + floor + pdis + gdis + coupling) - dt * work
    return EnergyLedger(state.time, E, ku, visc, floor, pdis, gdis, coupling, work, num,
                        resid, resid + dt * num, du3)


def neg_pressure_mass(p, grid) -> float:
    vals = p.values if hasattr(p, "values") else np.asarray(p)
    return math.sqrt(grid.cell_volume * float(np.sum(np.minimum(vals, 0.0) ** 2)))


def residuals(state, prev_state, cfg) -> ResidualReport:
    """Pointwise stress checks and the discrete constraint residuals.

    ``complementarity_defect`` is ``max(2 alpha p+ |Su| - sigma:Su)`` over
    cells with ``p >= 0``, where it lies in ``[0, 2 eps alpha p+]``;
    ``neg_p_complementarity`` reports the same quantity on ``p < 0`` cells.
    ``stress_defect`` is ``int(sigma:Su - 2 alpha p |Su|)``, which lies in
    ``[-2 eps int(alpha p+), 0]`` up to the contribution of ``p < 0`` cells.
    """
    grid, eps, dt = cfg.grid, cfg.eps, cfg.dt
    vol = grid.cell_volume
    st = _Strain(cfg, state)
    ops = st.ops
    p, S, Sn = st.p, st.S, st.Sn
    sigma = (st.alpha * p / (Sn + eps)) * S
    M = contraction_weights(grid.dim)[:, None]
    contract = np.sum(M * sigma * S, axis=0)
    pp = np.maximum(p, 0.0)
    defect = 2.0 * st.alpha * pp * Sn - contract
    pos = p >= 0
    bound = 2.0 * eps * st.alpha * pp
    sig_norm = np.sqrt(0.5 * np.sum(M * sigma * sigma, axis=0))
    excess = sig_norm - st.alpha * pp
    dim = grid.dim
    trace = np.abs(sigma[:dim].sum(axis=0))

    p_prev = prev_state.p.values.ravel()
    lap = ops.Lap @ p
    terms = [st.divu, 2.0 * st.a * shear_values(Sn, eps), st.b * v_eps(p, eps),
             eps * (p - p_prev) / dt, eps * lap]
    r_div = terms[0] - terms[1] + terms[2] + terms[3] - terms[4]
    div_scale = max(math.sqrt(vol * float(np.sum(t * t))) for t in terms)

    u = st.u
    u_prev = prev_state.u.interior()
    mass = _mass(cfg, state)
    mass0 = _mass(cfg, prev_state)
    nu = (2.0 * st.Dn if cfg.viscosity else 0.0) + cfg.viscosity_floor
    tau = (np.tile(nu, len(S)).reshape(S.shape) * st.D.reshape(S.shape) + sigma)
    mterms = [(0.5 * (mass + mass0) * u - mass0 * u_prev) / dt, ops.Div.T @ p,
              ops.G.T @ (st.w * tau.ravel()), cfg.forcing_interior()]
    r_mom = mterms[0] - mterms[1] + mterms[2] - mterms[3]
    if state.phi is not None:
        from .phi_dynamics import convection_matrix

        conv = convection_matrix(grid, mass * u) @ u
        r_mom = r_mom + conv
        mterms.append(conv)
    mom_scale = max(math.sqrt(vol * float(np.sum(t * t))) for t in mterms)

    def _max(a, mask=None, default=0.0):
        a = a if mask is None else a[mask]
        return float(a.max()) if a.size else default

    return ResidualReport(
        time=state.time,
        complementarity_defect=_max(defect, pos),
        complementarity_min=-_max(-defect, pos),
        complementarity_bound=_max(defect - bound, pos),
        neg_p_complementarity=_max(defect, ~pos),
        threshold_excess=max(_max(excess), 0.0),
        threshold_slack=_max(sig_norm - st.alpha * np.abs(p)),
        trace_sigma=_max(trace),
        div_constraint_residual=math.sqrt(vol * float(np.sum(r_div * r_div))),
        div_constraint_scale=div_scale,
        momentum_residual=math.sqrt(vol * float(np.sum(r_mom * r_mom))),
        momentum_scale=mom_scale,
        neg_pressure_mass=neg_pressure_mass(state.p, grid),
        p_min=float(p.min()),
        p_max=float(p.max()),
        stress_defect=vol * float(np.sum(contract - 2.0 * st.alpha * p * Sn)),
        alpha_p_plus=vol * float(np.sum(st.alpha * pp)),
    )


@dataclass
class ProbeResult:
    slope: Optional[float]
    exact_positivity: bool
    eps: tuple
    neg_mass: tuple

    def __str__(self):
        if self.exact_positivity:
            return "exact positivity"
        return f"slope {self.slope:.4f}"


def eps_scaling_probe(eps_values: Sequence[float], neg_masses: Sequence[float]) -> ProbeResult:
    """Least-squares slope of ``log ||p-||`` against ``log eps``.

    Zero entries carry no information and are skipped. If every entry is
    zero the pressure stayed nonnegative and the result says so.
    """
    eps = np.asarray(eps_values, dtype=float)
    neg = np.asarray(neg_masses, dtype=float)
    if eps.shape != neg.shape:
        raise ValueError("eps and neg_masses must have the same length")
    if np.all(neg == 0):
        return ProbeResult(None, True, tuple(eps), tuple(neg))
    keep = neg > 0
    if keep.sum() < 2:
        raise ValueError("need at least two runs with a nonzero negative part to fit a slope")
    slope = np.polyfit(np.log(eps[keep]), np.log(neg[keep]), 1)[0]
    return ProbeResult(float(slope), False, tuple(eps), tuple(neg))


class Recorder:
    """Observer collecting ledger and residual rows plus run-level norms.

    Pass to ``run``; it needs the config the run uses. ``summary()``
    gives the bounded quantities: ``max_t |u|_2``, ``sum dt |Du|_3^3``,
    space-time ``|p|_{3/2}`` and the final ``|p-|_2``.
    """

    def __init__(self, cfg, residuals: bool = True, h1: bool = None):
        self.cfg = cfg
        self.want_residuals = residuals
        self.h1 = cfg.has_phi if h1 is None else h1
        self.prev = None
        self.ledgers: list = []
        self.residuals: list = []
        self.reports: list = []
        self.budget: list = []
        self.energy0 = None
        self.u_linf_l2 = 0.0
        self.du3 = 0.0
        self.p32 = 0.0
        self.stress_defect = 0.0
        self.alpha_p_plus = 0.0

    def __call__(self, state, report):
        cfg = self.cfg
        vol = cfg.grid.cell_volume
        u = state.u.interior()
        self.u_linf_l2 = max(self.u_linf_l2, math.sqrt(vol * float(np.sum(u * u))))
        if report is None:
            self.energy0 = _energy(cfg, state)[0]
            self.prev = state
            return
        led = ledger(state, self.prev, cfg)
        self.ledgers.append(led)
        self.du3 += cfg.dt * led.du3
        self.p32 += cfg.dt * vol * float(np.sum(np.abs(state.p.values) ** 1.5))
        if self.want_residuals:
            res = residuals(state, self.prev, cfg)
            self.residuals.append(res)
            self.stress_defect += cfg.dt * res.stress_defect
            self.alpha_p_plus += cfg.dt * res.alpha_p_plus
        if self.h1 and state.phi is not None:
            from .phi_dynamics import PhiParams, h1_budget, phi_step

            params = PhiParams(cfg.law.phi_min, cfg.law.phi_max, cfg.xi)
            _, parts = phi_step(self.prev.phi, self.prev.u, self.prev.p, params, cfg.dt,
                                strict=False, return_parts=True)
            lhs, rhs = h1_budget(self.prev.phi, state.phi, self.prev.u, self.prev.p,
                                 params, cfg.dt, sunk=parts.sunk)
            self.budget.append((state.time, lhs, rhs))
        self.reports.append(report)
        self.prev = state

    def summary(self) -> dict:
        pnorm = self.p32 ** (2.0 / 3.0)
        neg = self.residuals[-1].neg_pressure_mass if self.residuals else (
            neg_pressure_mass(self.prev.p, self.cfg.grid) if self.prev is not None else 0.0)
        return {
            "u_linf_l2": self.u_linf_l2,
            "du3": self.du3,
            "p_l32": pnorm,
            "neg_pressure_mass": neg,
            "max_energy_increase": max(
                [0.0] + [b.kinetic - a.kinetic for a, b in zip(self._energies(), self.ledgers)]),
        }

    def _energies(self):
        first = [EnergyLedger(0.0, self.energy0, *([0.0] * 11))]
        return first + self.ledgers[:-1]

    def ledger_rows(self):
        return [asdict(x) for x in self.ledgers]

    def residual_rows(self):
        return [asdict(x) for x in self.residuals]

    def step_rows(self):
        rows = []
        for r in self.reports:
            row = {"step": r.step, "time": r.time, "iterations": r.iterations,
                   "increment": r.increment, "residual_p": r.linear_residuals[0],
                   "residual_u": r.linear_residuals[1]}
            if r.phi_range is not None:
                row["phi_min"], row["phi_max"] = r.phi_range
            rows.append(row)
        return rows


def write_rows(path, rows, columns=None) -> None:
    """Delimited text with a header; floats at 17 significant digits."""
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format(row[c], ".17g") if isinstance(row[c], float) else row[c]
                             for c in columns])


LEDGER_COLUMNS = [f.name for f in fields(EnergyLedger)]
RESIDUAL_COLUMNS = [f.name for f in fields(ResidualReport)]
