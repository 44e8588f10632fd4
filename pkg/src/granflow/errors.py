"""Exception types shared by the solver modules."""
from __future__ import annotations

from typing import Optional

__all__ = [
    "SolverError",
    "PicardNonConvergence",
    "LinearSolveError",
    "NonFiniteError",
    "CFLError",
    "PhiBoundError",
]


class SolverError(RuntimeError):
    """Base class of time-stepping failures (CLI exit code 3)."""

    step: Optional[int] = None
    time: Optional[float] = None


class PicardNonConvergence(SolverError):
    def __init__(self, increment: float, iterations: int):
        super().__init__(
            f"Picard loop did not converge in {iterations} iterations "
            f"(last increment {increment:.3e}); retry with a smaller dt"
        )
        self.increment = increment
        self.iterations = iterations


class LinearSolveError(SolverError):
    pass


class NonFiniteError(SolverError):
    def __init__(self, field_name: str):
        super().__init__(f"non-finite values in {field_name}")
        self.field = field_name


class CFLError(SolverError):
    def __init__(self, courant: float):
        super().__init__(f"CFL number {courant:.3g} exceeds 1; use a smaller dt")
        self.courant = courant


class PhiBoundError(SolverError):
    def __init__(self, time, cell, value, lo, hi):
        super().__init__(
            f"volume fraction {value!r} at cell {cell} (t = {time}) leaves [{lo}, {hi}]"
        )
        self.cell, self.value = cell, value
