"""Sparse assembly of the coupled (u, mu) systems and linear solvers.

Unknowns are interleaved per node, x = (u_0, mu_0, u_1, mu_1, ...), so
the 2x2 node blocks stay contiguous for the ILU preconditioner.  The
iterative solver is BiCGStab(l) after Sleijpen and Fokkema; a sparse-LU
direct solve backs the small reference runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from dewet import model
from dewet.grid import Grid


class SolverFailed(Exception):
    """Base class for linear-solver failures."""


class Breakdown(SolverFailed):
    """A recurrence scalar vanished; the Krylov process cannot continue."""


class MaxIterExceeded(SolverFailed):
    """Residual tolerance not reached within the iteration budget."""


class SingularMatrix(SolverFailed):
    """Direct factorization hit a zero pivot."""


@dataclass
class SolverConfig:
    rtol: float = 1e-8
    atol: float = 1e-12
    max_iter: int = 400
    ell: int = 2
    precond: str = "ilu0"  # none | jacobi | ilu0
    method: str = "bicgstab"  # bicgstab | direct
    direct_cap: int = 400_000

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        if self.precond not in ("none", "jacobi", "ilu0"):
            raise ValueError(f"unknown preconditioner {self.precond!r}")
        if self.method not in ("bicgstab", "direct"):
            raise ValueError(f"unknown method {self.method!r}")


# ---------------------------------------------------------------------------
# Stencil matrices on a grid
# ---------------------------------------------------------------------------

def _div_scale(grid: Grid) -> np.ndarray:
    """Per-node divergence scale: 1/h interior, 2/h on boundary rows."""
    cx = np.full(grid.nx, 1.0 / grid.hx)
    cx[0] = cx[-1] = 2.0 / grid.hx
    cy = np.full(grid.ny, 1.0 / grid.hy)
    cy[0] = cy[-1] = 2.0 / grid.hy
    return cx, cy


def _face_div_coo(grid: Grid, ax_k, ax_kp, ay_k, ay_kp):
    """COO triplets of the operator f -> div(flux) with face fluxes
    flux_x = ax_k f_k + ax_kp f_kp (and likewise in y)."""
    idx = np.arange(grid.num_nodes).reshape(grid.shape)
    cx, cy = _div_scale(grid)
    rows, cols, vals = [], [], []

    k = idx[:-1, :].ravel()
    kp = idx[1:, :].ravel()
    ck = np.broadcast_to(cx[:-1, None], (grid.nx - 1, grid.ny)).ravel()
    ckp = np.broadcast_to(cx[1:, None], (grid.nx - 1, grid.ny)).ravel()
    axk = ax_k.ravel()
    axkp = ax_kp.ravel()
    rows += [k, k, kp, kp]
    cols += [k, kp, k, kp]
    vals += [ck * axk, ck * axkp, -ckp * axk, -ckp * axkp]

    k = idx[:, :-1].ravel()
    kp = idx[:, 1:].ravel()
    ck = np.broadcast_to(cy[None, :-1], (grid.nx, grid.ny - 1)).ravel()
    ckp = np.broadcast_to(cy[None, 1:], (grid.nx, grid.ny - 1)).ravel()
    ayk = ay_k.ravel()
    aykp = ay_kp.ravel()
    rows += [k, k, kp, kp]
    cols += [k, kp, k, kp]
    vals += [ck * ayk, ck * aykp, -ckp * ayk, -ckp * aykp]

    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def div_m_grad_matrix(grid: Grid, m: np.ndarray) -> sp.csr_matrix:
    """Matrix of f -> div(m grad f), matching grid.div_m_grad nodewise."""
    mx = 0.5 * (m[1:, :] + m[:-1, :])
    my = 0.5 * (m[:, 1:] + m[:, :-1])
    r, c, v = _face_div_coo(grid, -mx / grid.hx, mx / grid.hx,
                            -my / grid.hy, my / grid.hy)
    n = grid.num_nodes
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    ones = np.ones(grid.shape)
    return div_m_grad_matrix(grid, ones)


def div_u_grad_ref_matrix(grid: Grid, coeff: np.ndarray, ref: np.ndarray) -> sp.csr_matrix:
    """Matrix of u -> div( avg(coeff * u) grad ref ).

    Face values of coeff*u are arithmetic means of the node products,
    multiplied by the face gradient of the frozen reference field.
    """
    dref_x = np.diff(ref, axis=0) / grid.hx
    dref_y = np.diff(ref, axis=1) / grid.hy
    ax_k = 0.5 * coeff[:-1, :] * dref_x
    ax_kp = 0.5 * coeff[1:, :] * dref_x
    ay_k = 0.5 * coeff[:, :-1] * dref_y
    ay_kp = 0.5 * coeff[:, 1:] * dref_y
    r, c, v = _face_div_coo(grid, ax_k, ax_kp, ay_k, ay_kp)
    n = grid.num_nodes
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def interleave_blocks(a11, a12, a21, a22, n: int) -> sp.csr_matrix:
    """Compose a 2n x 2n system from n x n blocks with per-node interleaving.

    Row/column 2k is the u unknown at node k, 2k+1 the mu unknown.
    Blocks may be sparse matrices or 1-d arrays (diagonals).
    """
    rows, cols, vals = [], [], []
    for (p, q), blk in (((0, 0), a11), ((0, 1), a12), ((1, 0), a21), ((1, 1), a22)):
        if blk is None:
            continue
        if isinstance(blk, np.ndarray):
            d = blk.ravel()
            k = np.arange(n)
            rows.append(2 * k + p)
            cols.append(2 * k + q)
            vals.append(d)
        else:
            b = blk.tocoo()
            rows.append(2 * b.row + p)
            cols.append(2 * b.col + q)
            vals.append(b.data)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * n, 2 * n),
    ).tocsr()


def stage_operator_blocks(grid: Grid, u_ref: np.ndarray, mu_ref: np.ndarray,
                          params: model.ModelParams, jacobian_kind: str,
                          v: np.ndarray | None = None):
    """Blocks of the frozen-coefficient Jacobian F*_{c,uv} at (u_ref, mu_ref).

    Returns (J11, J12_diag, J21, J22) for the rows
        J11 u + J12 mu  =  g mu + eps lap u - (1/eps) B_c'' u [+ extras]
        J21 u + J22 mu  =  (1/eps) div(M grad mu) [+ extras]
    with the rosenbrock kind adding the g'(u) mu_ref and
    div(M'(u) u grad mu_ref) couplings.
    """
    if jacobian_kind not in ("semi_implicit", "rosenbrock"):
        raise ValueError(f"unknown jacobian_kind {jacobian_kind!r}")
    if not (np.all(np.isfinite(u_ref)) and np.all(np.isfinite(mu_ref))):
        raise ValueError("non-finite reference fields")
    eps = params.epsilon
    g = model.enhancing(u_ref, params.use_g)
    if params.use_g:
        g = g + model.G_FLOOR
    bcpp = model.split_convex_second(u_ref, params, v=v)
    lap = laplacian_matrix(grid)
    j11 = eps * lap - sp.diags((bcpp / eps).ravel() * np.ones(grid.num_nodes))
    j12 = g * np.ones(grid.shape)
    j22 = (1.0 / eps) * div_m_grad_matrix(grid, model.mobility(u_ref))
    j21 = None
    if jacobian_kind == "rosenbrock":
        gp = model.enhancing_prime(u_ref, params.use_g)
        extra = gp * mu_ref
        j11 = j11 + sp.diags(extra.ravel())
        j21 = (1.0 / eps) * div_u_grad_ref_matrix(
            grid, model.mobility_prime(u_ref), mu_ref)
    return j11, j12, j21, j22


def assemble_stage_operator(grid: Grid, u_ref: np.ndarray, mu_ref: np.ndarray,
                            params: model.ModelParams, tau_gamma: float,
                            jacobian_kind: str = "semi_implicit",
                            v: np.ndarray | None = None) -> sp.csr_matrix:
    """Block operator (1/tau_gamma) H - F*_{c,uv} on stacked (u, mu).

    Row 2k is the algebraic mu-equation (zero row of H), row 2k+1 the
    evolution equation carrying (1/tau_gamma) u.
    """
    if tau_gamma <= 0:
        raise ValueError("tau * gamma must be positive")
    n = grid.num_nodes
    j11, j12, j21, j22 = stage_operator_blocks(grid, u_ref, mu_ref, params,
                                               jacobian_kind, v=v)
    a11 = -j11
    a12 = -j12
    a21 = sp.eye(n, format="csr") / tau_gamma
    if j21 is not None:
        a21 = a21 - j21
    a22 = -j22
    return interleave_blocks(a11, a12, a21, a22, n)


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------

def make_preconditioner(a: sp.spmatrix, kind: str):
    """Return M^{-1} as a callable, or None for kind 'none'."""
    if kind == "none":
        return None
    if kind == "jacobi":
        d = a.diagonal().copy()
        d[d == 0.0] = 1.0
        dinv = 1.0 / d
        return lambda x: dinv * x
    if kind == "ilu0":
        # Single-domain incomplete LU (SuperLU ILUTP with minimal fill)
        # standing in for the block-Jacobi/ILU combination used at scale.
        try:
            ilu = spla.spilu(a.tocsc(), drop_tol=1e-5, fill_factor=10.0)
        except RuntimeError as exc:
            raise SingularMatrix(f"ILU factorization failed: {exc}") from exc
        return ilu.solve
    raise ValueError(f"unknown preconditioner {kind!r}")


def bicgstab_l(a: sp.spmatrix, b: np.ndarray, config: SolverConfig,
               x0: np.ndarray | None = None, m_inv=None):
    """BiCGStab(l) after Sleijpen & Fokkema, left-preconditioned.

    Returns (x, stats) with stats reporting iterations (matrix
    applications of the BiCG sweep) and the final true residual norm.
    Raises Breakdown or MaxIterExceeded on non-convergence.
    """
    n = b.shape[0]
    ell = config.ell
    if m_inv is None and config.precond != "none":
        m_inv = make_preconditioner(a, config.precond)
    if m_inv is None:
        m_inv = lambda x: x

    def amul(x):
        return m_inv(a @ x)

    x = np.zeros(n) if x0 is None else x0.copy()
    bnorm = np.linalg.norm(b)
    tol = max(config.rtol * bnorm, config.atol)
    r_true = b - a @ x
    if np.linalg.norm(r_true) <= tol:
        return x, {"iterations": 0, "residual": float(np.linalg.norm(r_true)),
                   "converged": True}

    r = m_inv(r_true)
    rt = r.copy()
    u = np.zeros(n)
    rho0, alpha, omega = 1.0, 0.0, 1.0
    matvecs = 0
    eps_break = 1e-300

    def check_done(x):
        return np.linalg.norm(b - a @ x) <= tol

    def breakdown(msg, x):
        # an exactly (or numerically) zero residual degenerates the
        # recurrences; distinguish convergence from genuine breakdown
        if check_done(x):
            return x, {"iterations": matvecs,
                       "residual": float(np.linalg.norm(b - a @ x)),
                       "converged": True}
        raise Breakdown(msg)

    while matvecs < config.max_iter * ell:
        rho0 = -omega * rho0
        rs = [r]
        us = [u]
        # BiCG sweep
        for j in range(ell):
            rho1 = rt @ rs[j]
            if abs(rho0) < eps_break:
                return breakdown("rho underflow in BiCGStab(l)", x)
            beta = alpha * rho1 / rho0
            rho0 = rho1
            for i in range(j + 1):
                us[i] = rs[i] - beta * us[i]
            us.append(amul(us[j]))
            matvecs += 1
            sigma = rt @ us[j + 1]
            if abs(sigma) < eps_break:
                return breakdown("sigma underflow in BiCGStab(l)", x)
            alpha = rho0 / sigma
            x = x + alpha * us[0]
            for i in range(j + 1):
                rs[i] = rs[i] - alpha * us[i + 1]
            rs.append(amul(rs[j]))
            matvecs += 1
            # a (near-)exact preconditioner converges mid-sweep; continuing
            # would divide by a vanishing sigma and corrupt the iterate
            if np.linalg.norm(rs[0]) <= tol and check_done(x):
                return x, {"iterations": matvecs,
                           "residual": float(np.linalg.norm(b - a @ x)),
                           "converged": True}
        # minimal-residual polynomial step (modified Gram-Schmidt)
        tau = np.zeros((ell + 1, ell + 1))
        sig = np.zeros(ell + 1)
        gam_p = np.zeros(ell + 1)
        for j in range(1, ell + 1):
            for i in range(1, j):
                tau[i, j] = (rs[j] @ rs[i]) / sig[i]
                rs[j] = rs[j] - tau[i, j] * rs[i]
            sig[j] = rs[j] @ rs[j]
            if sig[j] < eps_break:
                return breakdown("degenerate residual basis in BiCGStab(l)", x)
            gam_p[j] = (rs[0] @ rs[j]) / sig[j]
        gam = np.zeros(ell + 1)
        gam[ell] = gam_p[ell]
        omega = gam[ell]
        if abs(omega) < eps_break:
            return breakdown("omega underflow in BiCGStab(l)", x)
        for j in range(ell - 1, 0, -1):
            gam[j] = gam_p[j] - np.dot(tau[j, j + 1:ell + 1], gam[j + 1:ell + 1])
        gam_pp = np.zeros(ell + 1)
        for j in range(1, ell):
            gam_pp[j] = gam[j + 1] + np.dot(tau[j, j + 1:ell], gam[j + 2:ell + 1])
        x = x + gam[1] * rs[0]
        rs[0] = rs[0] - gam_p[ell] * rs[ell]
        us[0] = us[0] - gam[ell] * us[ell]
        for j in range(1, ell):
            us[0] = us[0] - gam[j] * us[j]
            x = x + gam_pp[j] * rs[j]
            rs[0] = rs[0] - gam_p[j] * rs[j]
        u, r = us[0], rs[0]

        r_true = b - a @ x
        if np.linalg.norm(r_true) <= tol:
            return x, {"iterations": matvecs, "residual": float(np.linalg.norm(r_true)),
                       "converged": True}

    raise MaxIterExceeded(
        f"BiCGStab({ell}) did not reach tol={tol:.3e} in {matvecs} matrix applications "
        f"(residual {np.linalg.norm(b - a @ x):.3e})")


def direct_solve(a: sp.spmatrix, b: np.ndarray, cap: int = 400_000) -> np.ndarray:
    """Sparse LU with partial pivoting for small reference systems."""
    n = b.shape[0]
    if n > cap:
        raise ValueError(f"direct solve capped at n={cap}, got n={n}")
    try:
        lu = spla.splu(a.tocsc())
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("direct solve produced non-finite values")
    return x


class FrozenLU:
    """LU factorization reused across the stage solves of one step."""

    def __init__(self, a: sp.spmatrix):
        try:
            self._lu = spla.splu(a.tocsc())
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrix("LU solve produced non-finite values")
        return x


def solve(a: sp.spmatrix, b: np.ndarray, config: SolverConfig,
          x0: np.ndarray | None = None, m_inv=None):
    """Solve Ax = b per the configured method; returns (x, stats)."""
    if config.method == "direct":
        x = direct_solve(a, b, cap=config.direct_cap)
        res = float(np.linalg.norm(b - a @ x))
        return x, {"iterations": 1, "residual": res, "converged": True}
    return bicgstab_l(a, b, config, x0=x0, m_inv=m_inv)


def write_matrix_coo(path, a: sp.spmatrix) -> None:
    """Coordinate text dump (row col value per line) for debugging."""
    coo = a.tocoo()
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
