"""Semi-implicit time integration of the regularized granular system.

One step advances ``(u, p)`` (and ``phi`` for variable volume fraction
runs) by backward Euler. The nonlinear algebraic system is solved by a
segregated Picard loop:

1. freeze ``u^m, p^m`` and evaluate ``Du``, ``Su``, the law coefficients;
2. pressure: ``eps (p - p^n)/dt - eps Lap p + b [V(p^m) + V'(p^m)(p - p^m)]
   = 2 a |Su|^2/(|Su|+eps) - div u^m``;
3. velocity: ``m (u - u^n)/dt - div(nu Du) - grad(g div(u - u^m))
   = f - grad p + div sigma`` with ``nu = 2|Du^m| + nu_min`` and
   ``sigma = alpha p Su/(|Su|+eps)``.

The grad-div term in (3), with ``g = 1/(eps/dt + b V'(p))``, mimics the
pressure response to a change of divergence. It vanishes at the fixed point
and makes the loop converge for small ``eps`` where the plain alternation
stalls.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (LinearSolveError, NonFiniteError, PicardNonConvergence,
                     SolverError)
from .fields import (Grid, ScalarField, VectorField, contraction_weights,
                     mac_operators)
from .regularization import check_eps, shear_values, v_eps, v_eps_derivative
from .rheology import RheologyLaw, law_coefficients

log = logging.getLogger(__name__)

__all__ = [
    "SimulationConfig",
    "State",
    "StepReport",
    "RunResult",
    "SolverError",
    "PicardNonConvergence",
    "LinearSolveError",
    "NonFiniteError",
    "initial_state",
    "step",
    "run",
]

LINEAR_SOLVERS = ("reuse", "direct", "cg")


@dataclass
class SimulationConfig:
    grid: Grid
    t_end: float
    dt: float
    eps: float = 1e-2
    law: RheologyLaw = field(default_factory=RheologyLaw)
    xi: float = 0.0
    f: object = (0.0, 0.0)
    u_init: Optional[VectorField] = None
    phi_init: Optional[ScalarField] = None
    picard_tol: float = 1e-10
    picard_max_iter: int = 200
    anderson_depth: int = 5
    viscosity_floor: float = 1e-8
    viscosity: bool = True
    augmentation: bool = True
    linear_solver: str = "reuse"
    linear_tol: float = 1e-12
    strict_phi_bounds: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"t_end = {self.t_end} is not a multiple of dt = {self.dt}")
        self.eps = check_eps(self.eps)
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max_iter < 1:
            raise ValueError("picard_max_iter must be at least 1")
        if self.anderson_depth < 0:
            raise ValueError("anderson_depth must be nonnegative")
        if self.viscosity_floor < 0:
            raise ValueError("viscosity_floor must be nonnegative")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ValueError(f"linear_solver must be one of {LINEAR_SOLVERS}, got {self.linear_solver!r}")
        if isinstance(self.f, VectorField):
            if self.f.grid != self.grid:
                raise ValueError("forcing field lives on another grid")
        else:
            self.f = tuple(float(c) for c in self.f)
            if len(self.f) != self.grid.dim:
                raise ValueError(f"forcing has {len(self.f)} components on a {self.grid.dim}D grid")
        if self.u_init is not None and self.u_init.grid != self.grid:
            raise ValueError("u_init lives on another grid")
        if self.phi_init is not None:
            law = self.law
            if self.phi_init.grid != self.grid:
                raise ValueError("phi_init lives on another grid")
            if not 0 < self.xi <= law.delta_phi:
                raise ValueError(
                    f"xi must satisfy 0 < xi <= phi_max - phi_min = {law.delta_phi}, got {self.xi}"
                )
            lo, hi = self.phi_init.values.min(), self.phi_init.values.max()
            if lo < law.phi_min or hi > law.phi_max - self.xi:
                raise ValueError(
                    f"phi_init range [{lo}, {hi}] must lie in [phi_min, phi_max - xi] = "
                    f"[{law.phi_min}, {law.phi_max - self.xi}] (existence hypothesis)"
                )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def has_phi(self) -> bool:
        return self.phi_init is not None

    def forcing_interior(self) -> np.ndarray:
        if isinstance(self.f, VectorField):
            return self.f.interior()
        g = self.grid
        parts = []
        for k, fk in enumerate(self.f):
            shape = list(g.face_shape(k))
            shape[k] -= 2
            parts.append(np.full(int(np.prod(shape)), fk))
        return np.concatenate(parts)


@dataclass
class State:
    time: float
    u: VectorField
    p: ScalarField
    phi: Optional[ScalarField] = None

    def copy(self) -> "State":
        return State(self.time, self.u.copy(), self.p.copy(),
                     None if self.phi is None else self.phi.copy())


@dataclass
class StepReport:
    step: int
    time: float
    iterations: int
    increment: float
    linear_residuals: tuple
    phi_range: Optional[tuple] = None


@dataclass
class RunResult:
    state: State
    reports: list


def initial_state(cfg: SimulationConfig) -> State:
    u = VectorField.zeros(cfg.grid) if cfg.u_init is None else cfg.u_init
    u = VectorField.from_interior(cfg.grid, u.interior())
    phi = None if cfg.phi_init is None else cfg.phi_init.copy()
    return State(0.0, u, ScalarField.zeros(cfg.grid), phi)


def face_average(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Cell scalar averaged onto interior faces (unknown ordering)."""
    parts = []
    for k in range(grid.dim):
        lo = np.take(phi, np.arange(0, grid.cells[k] - 1), axis=k)
        hi = np.take(phi, np.arange(1, grid.cells[k]), axis=k)
        parts.append((0.5 * (lo + hi)).ravel())
    return np.concatenate(parts)


def strain_parts(grid: Grid, D: np.ndarray):
    """From raveled Du components: (S components, |D|, |S|)."""
    dim, nc = grid.dim, grid.n_cells
    Dc = D.reshape(-1, nc)
    w = contraction_weights(dim)[:, None]
    S = Dc.copy()
    tr = Dc[:dim].sum(axis=0)
    S[:dim] -= tr / dim
    Dn = np.sqrt(0.5 * (w * Dc * Dc).sum(axis=0))
    Sn = np.sqrt(0.5 * (w * S * S).sum(axis=0))
    return S, Dn, Sn, tr


def deviator_matrix(grid: Grid) -> sp.csr_matrix:
    """Linear map from raveled tensor components to their deviator."""
    dim, nc = grid.dim, grid.n_cells
    ncomp = dim * (dim + 1) // 2
    block = np.eye(ncomp)
    block[:dim, :dim] -= 1.0 / dim
    return sp.kron(sp.csr_matrix(block), sp.identity(nc), format="csr")


class _GramPattern:
    """``diag(m) + sum_i K_i^T diag(d_i) K_i`` on a fixed sparsity pattern.

    The stacked ``K`` never changes, so the matrix data is one sparse
    product ``B @ d`` followed by a diagonal update.
    """

    def __init__(self, blocks):
        K = sp.vstack(blocks).tocsr()
        K.sum_duplicates()
        n = K.shape[1]
        pattern = (abs(K).T @ abs(K) + sp.identity(n)).tocsr()
        pattern.sort_indices()
        self.indptr, self.indices = pattern.indptr.copy(), pattern.indices.copy()
        self.shape = pattern.shape
        row_of = np.repeat(np.arange(K.shape[0]), np.diff(K.indptr))
        length = np.diff(K.indptr)[row_of]
        first = np.repeat(np.arange(K.nnz), length)
        start = np.repeat(K.indptr[row_of], length)
        offset = np.arange(len(first)) - np.repeat(np.cumsum(length) - length, length)
        second = start + offset
        keys = np.repeat(np.arange(n), np.diff(self.indptr)) * n + self.indices
        pos = np.searchsorted(keys, K.indices[first] * n + K.indices[second])
        self.B = sp.csr_matrix((K.data[first] * K.data[second], (pos, row_of[first])),
                               shape=(pattern.nnz, K.shape[0]))
        self.diag = np.searchsorted(keys, np.arange(n) * (n + 1))

    def assemble(self, d, m):
        data = self.B @ d
        data[self.diag] += m
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


def _factor(A):
    return spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A",
                     options=dict(SymmetricMode=True), diag_pivot_thresh=0.0)


class _Solver:
    """Linear solves for the Picard loop.

    ``direct`` factorizes every matrix. ``reuse`` keeps the last
    factorization of each system as a preconditioner for CG (GMRES when
    nonsymmetric) and refactorizes once the Krylov count grows past
    ``refactor_after``. ``cg`` is Jacobi-preconditioned CG.
    """

    refactor_after = 25

    def __init__(self, kind: str, tol: float):
        self.kind, self.tol = kind, tol
        self.factors = {}

    def __call__(self, name, A, b, x0, symmetric=True, rtol=None):
        if not np.any(b):
            return np.zeros_like(b), 0.0
        tol = self.tol if rtol is None else max(rtol, self.tol)
        nb = np.linalg.norm(b)
        if self.kind == "direct":
            x = _factor(A).solve(b)
        elif self.kind == "reuse":
            x = self._reuse(name, A, b, x0, symmetric, tol)
        else:
            x = self._krylov(A, b, x0, sp.diags(1.0 / A.diagonal()), symmetric, 20 * len(b), tol)[0]
        if not np.all(np.isfinite(x)):
            raise LinearSolveError("linear solve produced non-finite values")
        res = np.linalg.norm(A @ x - b) / nb
        if res > max(1e-8, 1e3 * tol):
            raise LinearSolveError(f"linear solve residual {res:.3e} too large")
        return x, res

    def _krylov(self, A, b, x0, M, symmetric, maxiter, tol):
        count = [0]

        def cb(_):
            count[0] += 1

        if symmetric:
            x, info = spla.cg(A, b, x0=x0, rtol=tol, atol=0.0, M=M,
                              maxiter=maxiter, callback=cb)
        else:
            x, info = spla.gmres(A, b, x0=x0, rtol=tol, atol=0.0, M=M, restart=maxiter,
                                 maxiter=1, callback=cb, callback_type="pr_norm")
        if info < 0:
            raise LinearSolveError(f"iterative solver breakdown (info={info})")
        return x, info == 0, count[0]

    def _reuse(self, name, A, b, x0, symmetric, tol):
        lu = self.factors.get(name)
        if lu is not None:
            M = spla.LinearOperator(A.shape, matvec=lu.solve)
            x, ok, its = self._krylov(A, b, x0, M, symmetric, 2 * self.refactor_after, tol)
            if ok:
                if its > self.refactor_after:
                    self.factors.pop(name)
                return x
        lu = _factor(A)
        self.factors[name] = lu
        return lu.solve(b)


def _relative(new, old):
    diff = np.linalg.norm(new - old)
    if diff == 0.0:
        return 0.0
    return diff / max(np.linalg.norm(new), np.finfo(float).tiny)


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(name)


class Integrator:
    """Assembled pieces of one configuration, reused across steps."""

    def __init__(self, cfg: SimulationConfig):
        self.cfg = cfg
        self.grid = cfg.grid
        self.ops = mac_operators(cfg.grid)
        self.f = cfg.forcing_interior()
        self.w = np.repeat(contraction_weights(cfg.grid.dim), cfg.grid.n_cells)
        self.solve = _Solver(cfg.linear_solver, cfg.linear_tol)
        self.neg_lap = (-self.ops.Lap).tocsr()
        self.P = deviator_matrix(cfg.grid)
        self.gram = _GramPattern([self.ops.G, self.P @ self.ops.G, self.ops.Div])
        self.ncomp = len(self.w) // cfg.grid.n_cells
        n = cfg.grid.n_cells
        base = (cfg.eps * self.neg_lap + sp.identity(n)).tocsr()
        base.sort_indices()
        self.p_base = base
        keys = np.repeat(np.arange(n), np.diff(base.indptr)) * n + base.indices
        self.p_diag = np.searchsorted(keys, np.arange(n) * (n + 1))
        self.p_data = base.data.copy()
        self.p_data[self.p_diag] -= 1.0

    def _accelerate(self, history, u, p, u_new, p_new):
        """Anderson mixing of the Picard map; plain update if depth is 0."""
        depth = self.cfg.anderson_depth
        if depth == 0:
            return u_new, p_new
        n = len(u)
        x = np.concatenate([u, p])
        gx = np.concatenate([u_new, p_new])
        gs, fs = history
        fx = gx - x
        if fs and np.linalg.norm(fx) > np.linalg.norm(fs[-1]):
            # restart when the mixed iterate made things worse
            gs.clear()
            fs.clear()
        gs.append(gx)
        fs.append(fx)
        if len(gs) > depth + 1:
            gs.pop(0)
            fs.pop(0)
        if len(gs) > 1:
            dF = np.diff(np.array(fs), axis=0).T
            dG = np.diff(np.array(gs), axis=0).T
            gamma = np.linalg.lstsq(dF, fs[-1], rcond=None)[0]
            gx = gx - dG @ gamma
        return gx[:n], gx[n:]

    def step(self, state: State, index: int = 0):
        from .phi_dynamics import PhiParams, convection_matrix, phi_step

        cfg, ops, grid = self.cfg, self.ops, self.grid
        eps, dt = cfg.eps, cfg.dt
        u_n = state.u.interior()
        p_n = state.p.values.ravel()

        phi_new = None
        if cfg.has_phi:
            params = PhiParams(cfg.law.phi_min, cfg.law.phi_max, cfg.xi)
            phi_new = phi_step(state.phi, state.u, state.p, params, dt,
                               strict=cfg.strict_phi_bounds, time=state.time + dt)
            phi_f_old = face_average(grid, state.phi.values)
            phi_f_new = face_average(grid, phi_new.values)
            mass_lhs = 0.5 * (phi_f_old + phi_f_new) / dt
            mass_rhs = phi_f_old * u_n / dt
            phi_cells = phi_new.values.ravel()
        else:
            mass_lhs = np.full(ops.n_u, 1.0 / dt)
            mass_rhs = u_n / dt
            phi_cells = None

        u, p = u_n.copy(), p_n.copy()
        residuals = (0.0, 0.0)
        increment = np.inf
        history = ([], [])
        for it in range(1, cfg.picard_max_iter + 1):
            D = ops.G @ u
            S, Dn, Sn, divu = strain_parts(grid, D)
            alpha, a, b = law_coefficients(cfg.law, phi_cells, Sn, p)

            # pressure substep
            dV = v_eps_derivative(p, eps)
            data = self.p_data.copy()
            data[self.p_diag] += eps / dt + b * dV
            A_p = sp.csr_matrix((data, self.p_base.indices, self.p_base.indptr),
                                shape=self.p_base.shape)
            rhs_p = (eps / dt) * p_n - b * (v_eps(p, eps) - dV * p) \
                + 2.0 * a * shear_values(Sn, eps) - divu
            # inexact solves while the outer increment is large
            rtol = min(1e-6, increment * increment)
            p_new, res_p = self.solve("p", A_p, rhs_p, p, rtol=rtol)
            _check_finite("p", p_new)

            # velocity substep; the p+ part of sigma is taken implicitly
            # through the lagged coefficient c = alpha p+/(|Su^m| + eps)
            coef = alpha / (Sn + eps)
            c = coef * np.maximum(p_new, 0.0)
            sigma_explicit = (coef * np.minimum(p_new, 0.0)) * S
            nu = (2.0 * Dn if cfg.viscosity else 0.0) + cfg.viscosity_floor
            rhs_u = mass_rhs + self.f + ops.Div.T @ p_new \
                - ops.G.T @ (self.w * sigma_explicit.ravel())
            if cfg.augmentation:
                g = 1.0 / (eps / dt + b * v_eps_derivative(p_new, eps))
                rhs_u = rhs_u + ops.Div.T @ (g * (ops.Div @ u))
            else:
                g = np.zeros(grid.n_cells)
            nu = np.broadcast_to(nu, c.shape)
            d = np.concatenate([self.w * np.tile(nu, self.ncomp), self.w * np.tile(c, self.ncomp), g])
            A_u = self.gram.assemble(d, mass_lhs)
            symmetric = True
            if cfg.has_phi:
                A_u = A_u + convection_matrix(grid, phi_f_new * u)
                symmetric = False
            u_new, res_u = self.solve("u", A_u.tocsr(), rhs_u, u, symmetric=symmetric, rtol=rtol)
            _check_finite("u", u_new)

            increment = max(_relative(u_new, u), _relative(p_new, p))
            residuals = (res_p, res_u)
            # an increment only certifies convergence after full-accuracy solves
            strict = rtol <= cfg.linear_tol or max(res_p, res_u) <= cfg.linear_tol
            if increment < cfg.picard_tol and strict:
                u, p = u_new, p_new
                break
            u, p = self._accelerate(history, u, p, u_new, p_new)
        else:
            raise PicardNonConvergence(increment, cfg.picard_max_iter)

        new_state = State(
            (index + 1) * dt if index is not None else state.time + dt,
            VectorField.from_interior(grid, u),
            ScalarField(grid, p.reshape(grid.cells)),
            phi_new,
        )
        phi_range = None
        if phi_new is not None:
            phi_range = (float(phi_new.values.min()), float(phi_new.values.max()))
        report = StepReport(index + 1, new_state.time, it, increment, residuals, phi_range)
        return new_state, report


def step(state: State, cfg: SimulationConfig, index: int = None):
    """Advance ``state`` by ``cfg.dt``; returns ``(new_state, StepReport)``."""
    if index is None:
        index = int(round(state.time / cfg.dt))
    return Integrator(cfg).step(state, index)


def run(cfg: SimulationConfig, observers: Sequence = (), state: State = None) -> RunResult:
    """Integrate to ``cfg.t_end``.

    Each observer is called once with ``(initial_state, None)`` and then
    after every step with ``(state, report)``.
    """
    state = initial_state(cfg) if state is None else state
    for obs in observers:
        obs(state, None)
    integ = Integrator(cfg)
    reports = []
    for n in range(cfg.n_steps):
        try:
            state, report = integ.step(state, n)
        except SolverError as exc:
            exc.step, exc.time = n + 1, (n + 1) * cfg.dt
            exc.args = (f"step {n + 1} (t = {(n + 1) * cfg.dt:.6g}): {exc.args[0]}",)
            raise
        reports.append(report)
        for obs in observers:
            obs(state, report)
    return RunResult(state, reports)


def with_changes(cfg: SimulationConfig, **changes) -> SimulationConfig:
    return replace(cfg, **changes)
