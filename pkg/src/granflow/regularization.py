"""Smooth kernels that replace the threshold law and the square root."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ScalarField, SymTensorField, tensor_norm

__all__ = [
    "RegularizationParams",
    "v_eps",
    "v_eps_derivative",
    "regularized_stress",
    "regularized_shear",
    "stress_values",
    "shear_values",
]

EPS_MAX = 2.0


@dataclass(frozen=True)
class RegularizationParams:
    eps: float

    def __post_init__(self):
        check_eps(self.eps)


def check_eps(eps: float) -> float:
    if not np.isfinite(eps) or eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if eps > EPS_MAX:
        raise ValueError(
            f"eps = {eps} exceeds 2: the uniform pressure bound only holds for eps <= 2"
        )
    return float(eps)


def _positive_eps(eps):
    if not np.all(np.asarray(eps) > 0):
        raise ValueError(f"eps must be positive, got {eps}")


def v_eps(x, eps: float):
    """Concave C^1 surrogate of ``sqrt``.

    ``sqrt(x + (eps/2)^2) - eps/2`` for ``x > 0`` and ``x / eps`` otherwise.
    The positive branch is evaluated as ``x / (sqrt(x + (eps/2)^2) + eps/2)``,
    which is the same number without the cancellation for ``x << eps^2``.
    """
    _positive_eps(eps)
    x = np.asarray(x, dtype=float)
    half = 0.5 * eps
    pos = np.maximum(x, 0.0)
    out = np.where(x > 0, pos / (np.sqrt(pos + half * half) + half), x / eps)
    return out if out.ndim else float(out)


def v_eps_derivative(x, eps: float):
    _positive_eps(eps)
    x = np.asarray(x, dtype=float)
    half = 0.5 * eps
    pos = np.maximum(x, 0.0)
    out = np.where(x > 0, 0.5 / np.sqrt(pos + half * half), 1.0 / eps)
    return out if out.ndim else float(out)


def stress_values(p, S, S_norm, eps, alpha=1.0):
    """Array kernel: ``alpha * p * S / (|S| + eps)`` (components on axis 0)."""
    return (alpha * p / (S_norm + eps)) * S


def shear_values(S_norm, eps):
    """Array kernel: ``|S|^2 / (|S| + eps)``."""
    return S_norm * S_norm / (S_norm + eps)


def regularized_stress(p: ScalarField, Su: SymTensorField, eps: float,
                       alpha=1.0) -> SymTensorField:
    """Regularized threshold stress ``sigma = alpha p Su / (|Su| + eps)``.

    ``alpha`` is the yield coefficient (scalar or per-cell array). The
    result is traceless, vanishes where ``Su`` does and satisfies
    ``|sigma| <= alpha |p|``.
    """
    _positive_eps(eps)
    if p.grid != Su.grid:
        raise ValueError("grid mismatch")
    norm = tensor_norm(Su).values
    return SymTensorField(Su.grid, stress_values(p.values, Su.values, norm, eps, alpha))


def regularized_shear(Su: SymTensorField, eps: float) -> ScalarField:
    """``|Su|^2 / (|Su| + eps)``, within ``eps`` of ``|Su|`` from below."""
    _positive_eps(eps)
    return ScalarField(Su.grid, shear_values(tensor_norm(Su).values, eps))
