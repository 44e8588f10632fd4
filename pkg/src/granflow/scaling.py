"""Dimensionless numbers and the leading-order reduced granular system.

With ``t = T t'``, ``x = L x'``, ``u = U u'`` and pressures scaled by
``g L rho0`` the dimensionless groups are::

    eps_scale = T U / L,   Fr2 = U^2 / (g L),   Di = (d / L) sqrt(Fr2)

For ``Fr2 ~ Di ~ phi_max - phi0 ~ eps_scale`` the leading-order system is::

    phi0 d_t v + lambda0 grad q = -phi0 lambda0 e + lambda0 div tau
    |tau| <= alpha0 q,   div v = 2 alpha0 |Sv| - gamma0 sqrt(q)
    d_t psi + phi0 div v = 0

with ``lambda0 = eps_scale / Fr2`` and
``gamma0 = 2 alpha0 (phi_max - phi0) / (Di (phi0 - phi_min))``.

Rational groups are evaluated exactly from the decimal form of the inputs
and rounded once, so ``L = 0.1, U = 0.1, T = 0.01`` gives
``eps_scale == 0.01`` rather than a neighbour of it.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

__all__ = [
    "PhysicalScales",
    "ScalingReport",
    "ReducedSystem",
    "analyze",
    "reduce",
    "redimensionalize",
    "psi_update",
    "format_report",
    "physical_inertial_number",
]


def _q(x) -> Fraction:
    """Exact rational of the shortest decimal representation of ``x``."""
    return Fraction(repr(float(x)))


def _sqrt(q: Fraction) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = 60
        return (Decimal(q.numerator) / Decimal(q.denominator)).sqrt()


@dataclass(frozen=True)
class PhysicalScales:
    L: float
    U: float
    T: float
    d: float
    g: float = 9.81
    rho0: float = 1.0
    phi0: float = 0.59
    phi_min: float = 0.4
    phi_max: float = 0.6
    alpha0: float = 0.5

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not self.phi_min < self.phi0 < self.phi_max:
            raise ValueError(
                f"need phi_min < phi0 < phi_max, got {self.phi_min}, {self.phi0}, {self.phi_max}"
            )


@dataclass(frozen=True)
class ScalingReport:
    eps_scale: float
    Fr2: float
    Di: float
    lambda0: float
    gamma0: float
    regime_flags: dict = field(default_factory=dict)
    band: float = 10.0
    alpha0: float = 0.5
    phi0: float = 0.59
    phi_min: float = 0.4


def _groups(s: PhysicalScales):
    L, U, T, d, g = map(_q, (s.L, s.U, s.T, s.d, s.g))
    eps = T * U / L
    fr2 = U * U / (g * L)
    with localcontext() as ctx:
        ctx.prec = 60
        di = Decimal(d.numerator) / Decimal(d.denominator) \
            / (Decimal(L.numerator) / Decimal(L.denominator)) * _sqrt(fr2)
    lam = eps / fr2
    gap = _q(s.phi_max) - _q(s.phi0)
    with localcontext() as ctx:
        ctx.prec = 60
        num = Decimal(2) * _dec(_q(s.alpha0)) * _dec(gap)
        gam = num / (di * _dec(_q(s.phi0) - _q(s.phi_min)))
    return eps, fr2, di, lam, gam, gap


def _dec(q: Fraction) -> Decimal:
    return Decimal(q.numerator) / Decimal(q.denominator)


def analyze(scales: PhysicalScales, band: float = 10.0) -> ScalingReport:
    """Dimensionless groups and regime flags.

    A flag is true when the ratio of the quantity to ``eps_scale`` lies in
    ``[1/band, band]``.
    """
    if not band >= 1:
        raise ValueError(f"band must be >= 1, got {band}")
    eps, fr2, di, lam, gam, gap = _groups(scales)
    eps_f, fr2_f, di_f = float(eps), float(fr2), float(di)

    def within(x):
        r = x / eps_f
        return bool(1.0 / band <= r <= band)

    flags = {"Fr2": within(fr2_f), "Di": within(di_f), "phi_gap": within(float(gap))}
    return ScalingReport(eps_f, fr2_f, di_f, float(lam), float(gam), flags, float(band),
                         scales.alpha0, scales.phi0, scales.phi_min)


@dataclass(frozen=True)
class ReducedSystem:
    """Reduced coefficients and their realization on the unit-mass stepper.

    Dividing the momentum equation by ``phi0`` and writing
    ``p = (lambda0/phi0) q`` gives unit mass, forcing ``-lambda0 e``,
    yield ``alpha0`` and ``beta0 = gamma0 sqrt(phi0 / lambda0)``.
    """

    lambda0: float
    gamma0: float
    alpha0: float
    phi0: float
    beta0: float
    pressure_factor: float
    forcing_magnitude: float
    report: ScalingReport

    def law(self):
        from .rheology import RheologyLaw

        return RheologyLaw.constant(alpha0=self.alpha0, beta0=self.beta0)

    def forcing(self, dim: int = 2):
        e = [0.0] * dim
        e[-1] = -self.forcing_magnitude
        return tuple(e)

    def q_from_p(self, p):
        return np.asarray(p) / self.pressure_factor


def reduce(scales: PhysicalScales, band: float = 10.0) -> ReducedSystem:
    report = analyze(scales, band)
    if not all(report.regime_flags.values()):
        off = [k for k, v in report.regime_flags.items() if not v]
        warnings.warn(f"scales outside the asymptotic regime for {off}; coefficients emitted anyway",
                      RuntimeWarning, stacklevel=2)
    lam, gam = report.lambda0, report.gamma0
    factor = lam / scales.phi0
    beta0 = gam * math.sqrt(scales.phi0 / lam)
    return ReducedSystem(lam, gam, scales.alpha0, scales.phi0, beta0, factor, lam, report)


def redimensionalize(report: ScalingReport, L: float, g: float) -> dict:
    """Invert ``analyze`` given ``L`` and ``g``: recover ``U, T, d, phi_max``."""
    U = math.sqrt(report.Fr2 * g * L)
    T = report.eps_scale * L / U
    d = report.Di * L / math.sqrt(report.Fr2)
    phi_max = report.phi0 + report.gamma0 * report.Di * (report.phi0 - report.phi_min) \
        / (2.0 * report.alpha0)
    return {"L": L, "U": U, "T": T, "d": d, "g": g, "phi_max": phi_max,
            "lambda0": report.eps_scale / report.Fr2}


def physical_inertial_number(scales: PhysicalScales, Su_norm, p):
    """Inertial number of dimensionless ``(|Su|, p)`` mapped back to physical units.

    Uses ``|Su| -> (U/L)|Su|`` and ``p -> g L rho0 p``. The result equals
    ``Di * 2|Su|/sqrt(p)``: the dimensionless law is evaluated at ``Di I``.
    """
    from .rheology import inertial_number

    s = np.asarray(Su_norm, dtype=float) * scales.U / scales.L
    q = np.asarray(p, dtype=float) * scales.g * scales.L * scales.rho0
    return inertial_number(s, q, scales.d, scales.rho0)


def psi_update(psi, divv, dt: float, phi0: float):
    """One explicit step of ``d_t psi = -phi0 div v`` (decoupled post-processing)."""
    return np.asarray(psi) - dt * phi0 * np.asarray(divv)


def format_report(report: ScalingReport, reduced: ReducedSystem = None) -> str:
    lines = [f"{k} = {format(getattr(report, k), '.17g')}"
             for k in ("eps_scale", "Fr2", "Di", "lambda0", "gamma0", "band")]
    for k, v in report.regime_flags.items():
        lines.append(f"regime_{k} = {str(v).lower()}")
    if reduced is not None:
        lines += [f"alpha0 = {format(reduced.alpha0, '.17g')}",
                  f"phi0 = {format(reduced.phi0, '.17g')}",
                  f"beta0 = {format(reduced.beta0, '.17g')}",
                  f"pressure_factor = {format(reduced.pressure_factor, '.17g')}",
                  f"forcing = {format(-reduced.forcing_magnitude, '.17g')}"]
    return "\n".join(lines) + "\n"
