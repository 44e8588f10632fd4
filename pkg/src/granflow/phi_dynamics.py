"""Volume-fraction transport and the skew-symmetric inertia term.

``phi`` obeys ``d_t phi + div(phi u) = xi (Lap phi - phi sqrt(p+))`` with
homogeneous Neumann data. One step is split as

1. explicit upwind advection (zero flux through the walls, so mass is
   conserved to rounding);
2. explicit sink ``phi <- phi (1 - dt xi sqrt(p+))``;
3. implicit diffusion ``(I - dt xi L_N) phi' = phi``.

Each stage is monotone under the CFL restriction, which is what keeps the
discrete field inside its admissible band.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CFLError, PhiBoundError
from .fields import Grid, ScalarField, VectorField, _kron, divergence

log = logging.getLogger(__name__)

__all__ = [
    "PhiParams",
    "phi_step",
    "PhiStepParts",
    "upwind_flux",
    "neumann_laplacian",
    "courant_number",
    "check_bounds",
    "h1_budget",
    "skew_inertia",
    "convection_matrix",
]

BOUND_TOL = 1e-8


@dataclass(frozen=True)
class PhiParams:
    phi_min: float
    phi_max: float
    xi: float

    def __post_init__(self):
        if not 0 < self.phi_min < self.phi_max < 1:
            raise ValueError(f"need 0 < phi_min < phi_max < 1, got {self.phi_min}, {self.phi_max}")
        if not 0 < self.xi <= self.phi_max - self.phi_min:
            raise ValueError(
                f"xi must satisfy 0 < xi <= phi_max - phi_min, got {self.xi}"
            )

    @property
    def lower(self) -> float:
        return self.phi_min

    @property
    def upper(self) -> float:
        return self.phi_max - self.xi


def courant_number(u: VectorField, dt: float) -> float:
    h = u.grid.spacing
    return max(dt * float(np.abs(c).max(initial=0.0)) / h[k] for k, c in enumerate(u.components))


def upwind_flux(phi: np.ndarray, u: VectorField):
    """Upwind fluxes ``phi_up u`` on every face; zero on the walls."""
    fluxes = []
    for k, uk in enumerate(u.components):
        n = phi.shape[k]
        lo = np.take(phi, np.arange(n - 1), axis=k)
        hi = np.take(phi, np.arange(1, n), axis=k)
        inner = np.take(uk, np.arange(1, n), axis=k)
        F = np.where(inner > 0, inner * lo, inner * hi)
        pad = [(0, 0)] * phi.ndim
        pad[k] = (1, 1)
        fluxes.append(np.pad(F, pad))
    return fluxes


def _flux_divergence(grid: Grid, fluxes) -> np.ndarray:
    out = np.zeros(grid.cells)
    for k, F in enumerate(fluxes):
        out += np.diff(F, axis=k) / grid.spacing[k]
    return out


def _neumann1(n, h):
    main = -2.0 * np.ones(n)
    main[0] = main[-1] = -1.0
    if n == 1:
        main[:] = 0.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], shape=(n, n)) / (h * h)


@lru_cache(maxsize=32)
def neumann_laplacian(grid: Grid) -> sp.csr_matrix:
    """Cell-centred Laplacian with zero normal derivative on the walls."""
    dim = grid.dim
    total = None
    for k in range(dim):
        mats = [sp.identity(grid.cells[j]) for j in range(dim)]
        mats[k] = _neumann1(grid.cells[k], grid.spacing[k])
        term = _kron(mats)
        total = term if total is None else total + term
    return total.tocsr()


@lru_cache(maxsize=32)
def _diffusion_factor(grid: Grid, coef: float):
    n = grid.n_cells
    A = (sp.identity(n) - coef * neumann_laplacian(grid)).tocsc()
    return spla.splu(A)


@dataclass
class PhiStepParts:
    """Stages of one phi step, kept for budget checks."""

    advected: np.ndarray
    sunk: np.ndarray
    new: np.ndarray


def check_bounds(phi: np.ndarray, params: PhiParams, time: float = None, strict: bool = True,
                 tol: float = BOUND_TOL) -> bool:
    lo, hi = params.lower - tol, params.upper + tol
    bad = (phi < lo) | (phi > hi)
    if not bad.any():
        return True
    flat = np.flatnonzero(bad.ravel())
    for idx in flat[:10]:
        cell = tuple(int(i) for i in np.unravel_index(idx, phi.shape))
        value = float(phi.ravel()[idx])
        log.warning("phi bound violation", extra={"time": time, "cell": cell, "value": value})
    if strict:
        idx = flat[0]
        cell = tuple(int(i) for i in np.unravel_index(idx, phi.shape))
        raise PhiBoundError(time, cell, float(phi.ravel()[idx]), params.lower, params.upper)
    return False


def phi_step(phi: ScalarField, u: VectorField, p: ScalarField, params: PhiParams, dt: float,
             strict: bool = True, time: float = None, return_parts: bool = False):
    """Advance the volume fraction by one step (see module docstring)."""
    grid = phi.grid
    courant = courant_number(u, dt)
    if courant > 1.0:
        raise CFLError(courant)
    xi = params.xi
    adv = phi.values - dt * _flux_divergence(grid, upwind_flux(phi.values, u))
    sunk = adv * (1.0 - dt * xi * np.sqrt(np.maximum(p.values, 0.0)))
    # constants lie in the kernel of L_N: diffuse the deviation only, so a
    # uniform field passes through without rounding
    level = 0.5 * (sunk.max() + sunk.min())
    dev = _diffusion_factor(grid, dt * xi).solve((sunk - level).ravel())
    new = level + dev.reshape(grid.cells)
    check_bounds(new, params, time, strict)
    out = ScalarField(grid, new)
    if return_parts:
        return out, PhiStepParts(adv, sunk, new)
    return out


def _neumann_grad_sq(grid: Grid, phi: np.ndarray) -> float:
    """``||grad phi||^2`` over interior faces; equals ``-<phi, L_N phi>``."""
    total = 0.0
    vol = grid.cell_volume
    for k in range(grid.dim):
        g = np.diff(phi, axis=k) / grid.spacing[k]
        total += vol * float(np.sum(g * g))
    return total


def h1_budget(phi_old: ScalarField, phi_new: ScalarField, u: VectorField, p: ScalarField,
              params: PhiParams, dt: float, sunk: np.ndarray = None):
    """Left and right sides of the per-step L2/H1 budget.

    ``lhs = ||phi'||^2 - ||phi||^2 + 2 xi dt ||grad phi'||^2`` and
    ``rhs = dt phi_max^2 int(|div u| + 2 sqrt(p+)) + ||phi_s - phi||^2``
    where ``phi_s`` is the field before diffusion; the last term is the
    O(dt^2) splitting remainder. ``lhs <= rhs`` holds for this scheme.
    """
    grid = phi_old.grid
    vol = grid.cell_volume
    a, b = phi_old.values, phi_new.values
    lhs = vol * float(np.sum(b * b) - np.sum(a * a)) \
        + 2.0 * params.xi * dt * _neumann_grad_sq(grid, b)
    divu = divergence(u).values
    rhs = dt * params.phi_max ** 2 * vol * float(
        np.sum(np.abs(divu) + 2.0 * np.sqrt(np.maximum(p.values, 0.0))))
    if sunk is not None:
        rhs += vol * float(np.sum((sunk - a) ** 2))
    return lhs, rhs


def _unknown_index(grid: Grid):
    """Per-component full face arrays of unknown numbers (-1 on walls)."""
    out, offset = [], 0
    for k in range(grid.dim):
        idx = -np.ones(grid.face_shape(k), dtype=np.int64)
        sl = [slice(None)] * grid.dim
        sl[k] = slice(1, -1)
        count = idx[tuple(sl)].size
        idx[tuple(sl)] = np.arange(offset, offset + count).reshape(idx[tuple(sl)].shape)
        offset += count
        out.append(idx)
    return out, offset


def convection_matrix(grid: Grid, w) -> sp.csr_matrix:
    """Skew matrix ``C(w)`` with ``C(w) u = div(w u)/2 + (w . grad) u / 2``.

    ``w`` is a mass flux (interior vector or ``VectorField``). Each
    velocity component is convected on its own control volumes with
    centred fluxes; the ``-u div w / 2`` correction cancels the diagonal,
    leaving ``C[i, j] = W_ij / (2 h)`` with ``W_ij = -W_ji``, so
    ``u . C u = 0`` exactly.
    """
    if not isinstance(w, VectorField):
        w = VectorField.from_interior(grid, np.asarray(w))
    idx, n = _unknown_index(grid)
    rows, cols, vals = [], [], []
    for k in range(grid.dim):
        for j in range(grid.dim):
            nf = idx[k].shape[j]
            lo = np.take(idx[k], np.arange(nf - 1), axis=j)
            hi = np.take(idx[k], np.arange(1, nf), axis=j)
            if j == k:
                wk = w.components[k]
                W = 0.5 * (np.take(wk, np.arange(nf - 1), axis=k) + np.take(wk, np.arange(1, nf), axis=k))
            else:
                wj = np.take(w.components[j], np.arange(1, grid.cells[j]), axis=j)
                pad = [(0, 0)] * grid.dim
                pad[k] = (1, 1)
                ext = np.pad(wj, pad)
                m = ext.shape[k]
                W = 0.5 * (np.take(ext, np.arange(m - 1), axis=k) + np.take(ext, np.arange(1, m), axis=k))
            keep = (lo >= 0) & (hi >= 0) & (W != 0)
            c = W[keep] / (2.0 * grid.spacing[j])
            rows += [lo[keep], hi[keep]]
            cols += [hi[keep], lo[keep]]
            vals += [c, -c]
    if rows:
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def skew_inertia(phi: ScalarField, u: VectorField, u_prev: VectorField, dt: float,
                 phi_prev: ScalarField = None) -> VectorField:
    """Discrete ``D_t(phi, u)`` on interior faces.

    Time part ``[phi_prev (u - u_prev) + (phi - phi_prev) u / 2] / dt`` plus
    the skew convection ``C(phi u) u``. Then ``<D_t, u>`` equals the
    backward difference of ``int phi |u|^2 / 2`` plus the nonnegative
    remainder ``int phi_prev |u - u_prev|^2 / (2 dt)``.
    ``phi_prev`` defaults to ``phi`` (frozen volume fraction).
    """
    grid = phi.grid
    phi_prev = phi if phi_prev is None else phi_prev
    from .stepper import face_average

    pf = face_average(grid, phi.values)
    pf0 = face_average(grid, phi_prev.values)
    un, u0 = u.interior(), u_prev.interior()
    time_part = (pf0 * (un - u0) + 0.5 * (pf - pf0) * un) / dt
    conv = convection_matrix(grid, pf * un) @ un
    return VectorField.from_interior(grid, time_part + conv)
