"""Monolithic damped-Newton solve of one implicit step (small grids only).

Independent of the segregated stepper: the full nonlinear residual of the
step is assembled densely and solved by Newton with the exact Jacobian
and a backtracking line search::

    R_u = (u - u_n)/dt - Div^T p + G^T M (nu D + sigma) - f
    R_p = eps (p - p_n)/dt - eps Lap p + b V(p) - 2 a r(S) + div u

with ``D = G u``, ``S = P D``, ``nu = 2|D| + nu_min``,
``sigma = alpha p S / (|S| + eps)`` and ``r(S) = |S|^2 / (|S| + eps)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import contraction_weights, mac_operators
from .regularization import v_eps, v_eps_derivative

__all__ = ["NewtonOracle", "OracleDivergence", "OracleResult", "MAX_ORACLE_CELLS"]

MAX_ORACLE_CELLS = 5


class OracleDivergence(RuntimeError):
    """The Newton oracle itself failed (distinct from a gap failure)."""


@dataclass
class OracleResult:
    u: np.ndarray
    p: np.ndarray
    iterations: int
    residual: float


class NewtonOracle:
    def __init__(self, cfg):
        if cfg.has_phi:
            raise ValueError("the Newton oracle covers constant volume fraction runs only")
        if cfg.law.kind == "mu_of_I":
            raise ValueError("the Newton oracle supports the constant and phi_linear laws")
        if max(cfg.grid.cells) > MAX_ORACLE_CELLS:
            raise ValueError(
                f"oracle limited to grids of at most {MAX_ORACLE_CELLS} cells per axis "
                f"(dense assembly), got {cfg.grid.cells}"
            )
        self.cfg = cfg
        g = cfg.grid
        self.ops = mac_operators(g)
        self.G = self.ops.G.toarray()
        self.Div = self.ops.Div.toarray()
        self.Lap = self.ops.Lap.toarray()
        self.dim, self.nc = g.dim, g.n_cells
        self.ncomp = self.dim * (self.dim + 1) // 2
        self.M = contraction_weights(self.dim)
        P = np.eye(self.ncomp)
        P[: self.dim, : self.dim] -= 1.0 / self.dim
        self.Pblock = P
        self.f = cfg.forcing_interior()
        from .rheology import law_coefficients

        phi = None
        if cfg.law.kind == "phi_linear":
            if cfg.law.phi0 is None:
                raise ValueError("phi_linear oracle needs law.phi0 (frozen volume fraction)")
        shape = (self.nc,)
        self.alpha, self.a, self.b = law_coefficients(cfg.law, phi, np.zeros(shape), np.zeros(shape))

    # per-cell algebra on arrays of shape (ncomp, nc)
    def _parts(self, u, p):
        D = (self.G @ u).reshape(self.ncomp, self.nc)
        S = self.Pblock @ D
        M = self.M[:, None]
        Dn = np.sqrt(0.5 * np.sum(M * D * D, axis=0))
        Sn = np.sqrt(0.5 * np.sum(M * S * S, axis=0))
        return D, S, Dn, Sn

    def residual(self, x, u_n, p_n):
        cfg = self.cfg
        eps, dt = cfg.eps, cfg.dt
        n = len(u_n)
        u, p = x[:n], x[n:]
        D, S, Dn, Sn = self._parts(u, p)
        nu = (2.0 * Dn if cfg.viscosity else 0.0) + cfg.viscosity_floor
        sigma = self.alpha * p / (Sn + eps) * S
        tau = nu * D + sigma
        Mtau = (self.M[:, None] * tau).ravel()
        R_u = (u - u_n) / dt - self.Div.T @ p + self.G.T @ Mtau - self.f
        r = Sn * Sn / (Sn + eps)
        R_p = eps * (p - p_n) / dt - eps * (self.Lap @ p) + self.b * v_eps(p, eps) \
            - 2.0 * self.a * r + self.Div @ u
        return np.concatenate([R_u, R_p])

    def jacobian(self, x, u_n):
        cfg = self.cfg
        eps, dt = cfg.eps, cfg.dt
        n = len(u_n)
        nc, ncomp = self.nc, self.ncomp
        u, p = x[:n], x[n:]
        D, S, Dn, Sn = self._parts(u, p)
        M = self.M
        # d(M tau)/dD per cell: (ncomp, ncomp, nc)
        eye = np.eye(ncomp)[:, :, None]
        nu = (2.0 * Dn if cfg.viscosity else 0.0) + cfg.viscosity_floor
        Jtau = nu * eye
        if cfg.viscosity:
            safe = np.where(Dn > 0, Dn, 1.0)
            Jtau = Jtau + np.where(Dn > 0, D[:, None, :] * (M[:, None] * D)[None, :, :] / safe, 0.0)
        safeS = np.where(Sn > 0, Sn, 1.0)
        denom = Sn + eps
        coef = self.alpha * p
        Jsig = coef / denom * eye - np.where(
            Sn > 0, coef * S[:, None, :] * (M[:, None] * S)[None, :, :] / (2.0 * safeS * denom ** 2), 0.0)
        # chain with the deviator map
        Jsig = np.einsum("ijc,jk->ikc", Jsig, self.Pblock)
        Jt = M[:, None, None] * (Jtau + Jsig)
        blk = np.zeros((ncomp * nc, ncomp * nc))
        for i in range(ncomp):
            for j in range(ncomp):
                blk[i * nc:(i + 1) * nc, j * nc:(j + 1) * nc] = np.diag(Jt[i, j])
        J_uu = np.eye(n) / dt + self.G.T @ blk @ self.G
        dsig_dp = (M[:, None] * self.alpha * S / denom).ravel()
        J_up = -self.Div.T + self.G.T @ (dsig_dp[:, None] * np.tile(np.eye(nc), (ncomp, 1)))
        drdS = (Sn + 2.0 * eps) / denom ** 2 * 0.5 * (M[:, None] * S)        # (ncomp, nc)
        drdD = self.Pblock.T @ drdS
        rows = np.zeros((nc, ncomp * nc))
        for j in range(ncomp):
            rows[:, j * nc:(j + 1) * nc] = np.diag(drdD[j])
        J_pu = self.Div - 2.0 * (self.a[:, None] * rows) @ self.G
        J_pp = (eps / dt) * np.eye(nc) - eps * self.Lap + np.diag(self.b * v_eps_derivative(p, eps))
        return np.block([[J_uu, J_up], [J_pu, J_pp]])

    def solve(self, u_n, p_n, x0=None, tol: float = 1e-13, max_iter: int = 100) -> OracleResult:
        n = len(u_n)
        x = np.concatenate([u_n, p_n]) if x0 is None else np.array(x0, dtype=float)
        R = self.residual(x, u_n, p_n)
        scale = max(1.0, np.abs(self.f).max(initial=0.0), np.abs(u_n).max(initial=0.0) / self.cfg.dt)
        for it in range(1, max_iter + 1):
            rn = np.linalg.norm(R)
            if np.abs(R).max(initial=0.0) <= tol * scale:
                return OracleResult(x[:n], x[n:], it - 1, float(np.abs(R).max(initial=0.0)))
            J = self.jacobian(x, u_n)
            try:
                dx = np.linalg.solve(J, -R)
            except np.linalg.LinAlgError as exc:
                raise OracleDivergence(f"singular Newton Jacobian at iteration {it}") from exc
            lam = 1.0
            while True:
                xt = x + lam * dx
                Rt = self.residual(xt, u_n, p_n)
                if np.linalg.norm(Rt) <= (1.0 - 1e-4 * lam) * rn or lam < 1e-10:
                    break
                lam *= 0.5
            if lam < 1e-10:
                # at rounding level a full step cannot reduce the norm any further
                if np.abs(Rt).max(initial=0.0) <= 1e3 * tol * scale:
                    return OracleResult(xt[:n], xt[n:], it, float(np.abs(Rt).max()))
                raise OracleDivergence(f"line search failed at iteration {it} (|R| = {rn:.3e})")
            x, R = xt, Rt
        raise OracleDivergence(f"Newton did not converge in {max_iter} iterations "
                               f"(|R| = {np.linalg.norm(R):.3e})")
