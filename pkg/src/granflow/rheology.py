"""Yield and dilatancy coefficient laws.

Three variants share one interface:

``constant``
    yield ``alpha0``, dilatancy ``2 alpha0 |Su| - beta0 sqrt(p)``.
``phi_linear``
    yield ``phi - phi_min``, dilatancy
    ``2 (phi - phi_min) |Su| - (phi_max - phi) sqrt(p)``.
``mu_of_I``
    yield ``mu(I)``, dilatancy
    ``2 F(I) |Su| - gamma I_eq(phi) F(I_eq(phi)) sqrt(p)`` with
    ``gamma = 2 / (d sqrt(rho0))``.

At finite regularization the pressure may dip below zero, so every square
root of the pressure here is taken of ``max(p, 0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fields import ScalarField

__all__ = [
    "RheologyLaw",
    "yield_coefficient",
    "dilatancy_rhs",
    "i_eq",
    "inertial_number",
    "law_coefficients",
    "saturation_curve",
]

KINDS = ("constant", "phi_linear", "mu_of_I")
PHI_TOL = 1e-8


def saturation_curve(I, alpha0: float, mu2: float, I0: float):
    """``alpha0 + (mu2 - alpha0) I / (I0 + I)``; equals ``mu2`` at ``I = inf``."""
    I = np.asarray(I, dtype=float)
    frac = np.where(np.isinf(I), 1.0, I / (I0 + np.where(np.isinf(I), 0.0, I)))
    out = alpha0 + (mu2 - alpha0) * frac
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class RheologyLaw:
    kind: str = "constant"
    alpha0: float = 1.0
    beta0: float = 1.0
    phi_min: float = 0.3
    phi_max: float = 0.6
    # mu_of_I parameters; mu/F default to the saturation curve
    mu2: float = 2.0
    I0: float = 0.3
    d: float = 1.0
    rho0: float = 1.0
    phi0: Optional[float] = None
    mu: Optional[Callable] = None
    F: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown rheology kind {self.kind!r}; expected one of {KINDS}")
        if self.alpha0 < 0 or self.beta0 < 0:
            raise ValueError("alpha0 and beta0 must be nonnegative")
        if not 0 < self.phi_min < self.phi_max < 1:
            raise ValueError(
                f"need 0 < phi_min < phi_max < 1, got {self.phi_min}, {self.phi_max}"
            )
        if self.kind == "mu_of_I":
            if self.d <= 0 or self.rho0 <= 0 or self.I0 <= 0:
                raise ValueError("d, rho0 and I0 must be positive")
            if self.mu is None and self.mu2 <= self.alpha0:
                raise ValueError("default mu(I) curve needs mu2 > alpha0")
            if self.mu is not None and self.F is not None:
                if not math.isclose(float(self.mu(0.0)), float(self.F(0.0)), rel_tol=1e-12):
                    raise ValueError("mu(0) and F(0) must coincide")

    @classmethod
    def constant(cls, alpha0=1.0, beta0=1.0, **kw):
        return cls("constant", alpha0=alpha0, beta0=beta0, **kw)

    @classmethod
    def phi_linear(cls, phi_min, phi_max, **kw):
        return cls("phi_linear", phi_min=phi_min, phi_max=phi_max, **kw)

    @classmethod
    def mu_of_I(cls, alpha0, mu2=None, I0=0.3, d=1.0, rho0=1.0, **kw):
        mu2 = 2.0 * alpha0 + 0.1 if mu2 is None else mu2
        return cls("mu_of_I", alpha0=alpha0, mu2=mu2, I0=I0, d=d, rho0=rho0, **kw)

    @property
    def delta_phi(self) -> float:
        return self.phi_max - self.phi_min

    @property
    def gamma(self) -> float:
        """``2 / (d sqrt(rho0))``, the pressure factor of the mu(I) dilatancy law."""
        return 2.0 / (self.d * math.sqrt(self.rho0))

    def mu_fn(self, I):
        if self.mu is not None:
            return self.mu(I)
        return saturation_curve(I, self.alpha0, self.mu2, self.I0)

    def F_fn(self, I):
        if self.F is not None:
            return self.F(I)
        return self.mu_fn(I)


def _check_phi(law: RheologyLaw, phi):
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < law.phi_min - PHI_TOL) or np.any(phi > law.phi_max + PHI_TOL):
        raise ValueError(
            f"volume fraction outside [{law.phi_min}, {law.phi_max}]: "
            f"range [{phi.min()}, {phi.max()}]"
        )
    return phi


def i_eq(phi, phi_min: float, phi_max: float, return_flag: bool = False):
    """Equilibrium inertial number ``(phi_max - phi) / (phi - phi_min)``.

    Singular for ``phi <= phi_min``: those entries are ``+inf`` and, with
    ``return_flag=True``, reported in a boolean mask returned alongside.
    """
    phi = np.asarray(phi, dtype=float)
    singular = phi <= phi_min
    safe = np.where(singular, phi_min + 1.0, phi)
    out = np.where(singular, np.inf, (phi_max - safe) / (safe - phi_min))
    out = out if out.ndim else float(out)
    if return_flag:
        return out, (singular if singular.ndim else bool(singular))
    return out


def inertial_number(Su_norm, p, d: float = 1.0, rho0: float = 1.0,
                    return_flag: bool = False):
    """``I = 2 d |Su| / sqrt(p / rho0)``; ``d = rho0 = 1`` gives ``2|Su|/sqrt(p)``.

    ``p <= 0`` is the static limit: entries are ``+inf`` (flagged on request).
    """
    s = np.asarray(Su_norm, dtype=float)
    p = np.asarray(p, dtype=float)
    static = p <= 0
    root = np.sqrt(np.where(static, 1.0, p) / rho0)
    out = np.where(static, np.inf, 2.0 * d * s / root)
    out = out if out.ndim else float(out)
    if return_flag:
        return out, (static if static.ndim else bool(static))
    return out


def yield_coefficient(law: RheologyLaw, phi=None, I=0.0):
    """Threshold coefficient: ``alpha0``, ``phi - phi_min`` or ``mu(I)``."""
    if law.kind == "constant":
        return law.alpha0
    if law.kind == "phi_linear":
        return _check_phi(law, phi) - law.phi_min
    return law.mu_fn(I)


def _phi_values(law, phi, shape):
    if phi is None:
        if law.phi0 is None:
            raise ValueError(f"{law.kind} law needs a volume fraction (phi field or phi0)")
        return np.full(shape, float(law.phi0))
    return np.asarray(phi.values if isinstance(phi, ScalarField) else phi, dtype=float)


def law_coefficients(law: RheologyLaw, phi, S_norm: np.ndarray, p: np.ndarray):
    """Per-cell ``(alpha, a, b)``: yield, shear-dilatancy and pressure factors.

    The dilatancy target is ``2 a |Su| - b sqrt(p)`` and the stress is
    ``alpha p Su / |Su|``.
    """
    shape = np.shape(S_norm)
    if law.kind == "constant":
        return (np.full(shape, law.alpha0), np.full(shape, law.alpha0),
                np.full(shape, law.beta0))
    phi = _phi_values(law, phi, shape)
    if law.kind == "phi_linear":
        alpha = phi - law.phi_min
        return alpha, alpha, law.phi_max - phi
    I = inertial_number(S_norm, p, law.d, law.rho0)
    ieq = i_eq(phi, law.phi_min, law.phi_max)
    b = law.gamma * ieq * law.F_fn(ieq)
    return law.mu_fn(I), law.F_fn(I), b


def dilatancy_factorization(phi, Su_norm, p, phi_min: float, phi_max: float):
    """``2 K |Su| (I - I_eq(phi))`` with ``K = (phi - phi_min) / (dphi I)``.

    Dimensionless normalization (``I = 2|Su|/sqrt(p)``, ``p > 0``). The
    result equals ``(2 (phi - phi_min)|Su| - (phi_max - phi) sqrt(p)) / dphi``,
    the phi-linear dilatancy target scaled by ``1/dphi``.
    """
    phi = np.asarray(phi, dtype=float)
    s = np.asarray(Su_norm, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("factorization needs p > 0")
    I = inertial_number(s, p)
    dphi = phi_max - phi_min
    K = (phi - phi_min) / (dphi * I)
    return 2.0 * K * s * (I - i_eq(phi, phi_min, phi_max))


def dilatancy_rhs(law: RheologyLaw, Su_norm: ScalarField, p: ScalarField,
                  phi: ScalarField = None) -> ScalarField:
    """Target divergence ``2 a |Su| - b sqrt(max(p, 0))`` of the chosen law."""
    if law.kind == "phi_linear":
        _check_phi(law, _phi_values(law, phi, Su_norm.values.shape))
    _, a, b = law_coefficients(law, phi, Su_norm.values, p.values)
    root = np.sqrt(np.maximum(p.values, 0.0))
    return ScalarField(Su_norm.grid, 2.0 * a * Su_norm.values - b * root)
