"""Direct transcription of the minimal-supply problem into a box/equality NLP.

Decision vector layout: ``w = [x_0, ..., x_N, u_0, ..., u_{N-1}]`` with
controls held constant on each interval.  The equality map stacks the
one-leg residuals

    r_k = E(m_k) (x_{k+1} - x_k) - h ((J - R) eta (m_k) + B(m_k) u_k),
    m_k = theta x_{k+1} + (1 - theta) x_k,

followed by ``x_N - x_T``.  The cost is ``sum_k h y(m_k)^T u_k``.

``theta = 0.5`` is the implicit midpoint rule: second order and exact in
the discrete energy balance for quadratic storage.  It is not L-stable, so
with stiff dissipation and wide control bounds the discrete optimum can
alternate across the dissipation manifold from node to node while every
midpoint sits on it.  ``theta = 1`` (implicit Euler) damps such modes and
is the safer choice for optimal control on coarse grids.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import linalg
from .deriv import batched_jacobian
from .errors import DimensionError, IntegrationError, SingularSystemError
from .phsys import PHSystem, batch, output_batch, rhs_batch

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50


@dataclass
class OCPSpec:
    system: PHSystem
    x0: np.ndarray
    xT: np.ndarray
    T: float
    N: int
    u_lb: np.ndarray
    u_ub: np.ndarray
    x_lb: Optional[np.ndarray] = None
    x_ub: Optional[np.ndarray] = None
    theta: float = 0.5

    def __post_init__(self):
        n, m = self.system.n, self.system.m
        self.x0 = _vec(self.x0, n, "x0")
        self.xT = _vec(self.xT, n, "xT")
        self.u_lb = _vec(np.broadcast_to(self.u_lb, (m,)), m, "u_lb")
        self.u_ub = _vec(np.broadcast_to(self.u_ub, (m,)), m, "u_ub")
        if self.x_lb is not None:
            self.x_lb = _vec(np.broadcast_to(self.x_lb, (n,)), n, "x_lb", allow_inf=True)
        if self.x_ub is not None:
            self.x_ub = _vec(np.broadcast_to(self.x_ub, (n,)), n, "x_ub", allow_inf=True)
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        self.N = int(self.N)
        if np.any(self.u_lb > self.u_ub):
            raise ValueError("u_lb exceeds u_ub")
        self.theta = _theta(self.theta)

    @property
    def h(self):
        return self.T / self.N

    @property
    def dim(self):
        return (self.N + 1) * self.system.n + self.N * self.system.m

    @property
    def n_eq(self):
        return self.N * self.system.n + self.system.n


def _theta(theta):
    theta = float(theta)
    if not 0.5 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0.5, 1], got {theta}")
    return theta


def _vec(v, size, what, allow_inf=False):
    v = np.array(v, dtype=float).reshape(-1)
    if v.shape != (size,):
        raise DimensionError(f"{what} has length {v.size}, expected {size}")
    ok = ~np.isnan(v) if allow_inf else np.isfinite(v)
    if not np.all(ok):
        raise ValueError(f"{what} has non-finite entries")
    return v


@dataclass
class Trajectory:
    """Grid samples: ``t`` (N+1), ``x`` (N+1, n), ``u`` and ``y`` (N, m).

    Outputs are evaluated at the interval points ``theta x_{k+1} + (1 - theta) x_k``.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    theta: float = 0.5

    @property
    def h(self):
        return np.diff(self.t)

    @property
    def midpoints(self):
        return 0.5 * (self.x[:-1] + self.x[1:])

    @property
    def points(self):
        """Interval evaluation points used by the scheme."""
        return eval_points(self.x[:-1], self.x[1:], self.theta)

    @property
    def T(self):
        return float(self.t[-1])


@dataclass
class NLPProblem:
    """``min cost(w)`` subject to ``w_lb <= w <= w_ub`` and ``constraints(w) = 0``.

    ``lagrangian_hessian(w, mu)``, when given, returns the sparse Hessian of
    ``cost + mu^T constraints``.
    """

    dim: int
    cost: Callable
    cost_gradient: Callable
    constraints: Callable
    constraint_jacobian: Callable
    w_lb: np.ndarray
    w_ub: np.ndarray
    lagrangian_hessian: Optional[Callable] = None


# ------------------------------------------------------------- local blocks


def _rhs_state_jac(sys, Xm, U):
    if sys.rhs_jac is not None:
        return batch(sys, sys.rhs_jac, Xm, U)
    return batched_jacobian(lambda X: rhs_batch(sys, X, U), Xm)


def _output_state_jac(sys, Xm, U):
    if sys.output_jac is not None:
        return batch(sys, sys.output_jac, Xm, U)
    return batched_jacobian(lambda X: output_batch(sys, X), Xm)


def eval_points(Xk, Xk1, theta=0.5):
    """Interval evaluation points ``theta x_{k+1} + (1 - theta) x_k``."""
    return theta * Xk1 + (1.0 - theta) * Xk


def residuals(sys, h, Xk, Xk1, U, theta=0.5):
    """One-leg residuals for a stack of intervals, shape (K, n)."""
    P = eval_points(Xk, Xk1, theta)
    E = batch(sys, sys.E, P)
    return np.einsum("kij,kj->ki", E, Xk1 - Xk) - h * rhs_batch(sys, P, U)


def residual_blocks(sys, h, Xk, Xk1, U, theta=0.5):
    """Jacobian blocks of :func:`residuals` w.r.t. ``x_k``, ``x_{k+1}`` and ``u_k``."""
    P = eval_points(Xk, Xk1, theta)
    D = Xk1 - Xk
    E = batch(sys, sys.E, P)
    common = -h * _rhs_state_jac(sys, P, U)
    if not sys.E_constant:
        common = common + batched_jacobian(
            lambda X: np.einsum("kij,kj->ki", batch(sys, sys.E, X), D), P
        )
    dk = (1.0 - theta) * common - E
    dk1 = theta * common + E
    du = -h * batch(sys, sys.B, P)
    return dk, dk1, du


# ---------------------------------------------------------------- layout


def unpack(ocp, w):
    n, m, N = ocp.system.n, ocp.system.m, ocp.N
    w = np.asarray(w, dtype=float)
    if w.shape != (ocp.dim,):
        raise DimensionError(f"decision vector has length {w.size}, expected {ocp.dim}")
    X = w[: (N + 1) * n].reshape(N + 1, n)
    U = w[(N + 1) * n :].reshape(N, m)
    return X, U


def pack(ocp, X, U):
    return np.concatenate([np.asarray(X, dtype=float).reshape(-1), np.asarray(U, dtype=float).reshape(-1)])


def initial_guess(ocp):
    """States interpolated linearly from x0 to xT, controls zero (clipped to bounds)."""
    s = np.linspace(0.0, 1.0, ocp.N + 1)[:, None]
    X = (1.0 - s) * ocp.x0 + s * ocp.xT
    U = np.tile(np.clip(0.0, ocp.u_lb, ocp.u_ub), (ocp.N, 1))
    return pack(ocp, X, U)


def decode(ocp, w):
    """Trajectory stored in ``w``; outputs are evaluated at the interval points."""
    X, U = unpack(ocp, w)
    t = np.linspace(0.0, ocp.T, ocp.N + 1)
    Y = output_batch(ocp.system, eval_points(X[:-1], X[1:], ocp.theta))
    return Trajectory(t, X.copy(), U.copy(), Y, ocp.theta)


def encode(ocp, traj):
    return pack(ocp, traj.x, traj.u)


def transcribe(ocp):
    """Build the :class:`NLPProblem` for ``ocp``."""
    sys = ocp.system
    n, m, N, h, th = sys.n, sys.m, ocp.N, ocp.h, ocp.theta
    dim = ocp.dim
    u_off = (N + 1) * n

    w_lb = np.full(dim, -np.inf)
    w_ub = np.full(dim, np.inf)
    w_lb[:n] = w_ub[:n] = ocp.x0
    if ocp.x_lb is not None:
        w_lb[n : N * n] = np.tile(ocp.x_lb, N - 1)
    if ocp.x_ub is not None:
        w_ub[n : N * n] = np.tile(ocp.x_ub, N - 1)
    w_lb[u_off:] = np.tile(ocp.u_lb, N)
    w_ub[u_off:] = np.tile(ocp.u_ub, N)

    # sparsity pattern of the constraint Jacobian, row-major per block
    k = np.arange(N)[:, None, None]
    i = np.arange(n)[None, :, None]
    rows_blk = np.broadcast_to(k * n + i, (N, n, n))
    rows_u = np.broadcast_to(k * n + i, (N, n, m))
    cols_k = np.broadcast_to(k * n + np.arange(n)[None, None, :], (N, n, n))
    cols_u = np.broadcast_to(u_off + k * m + np.arange(m)[None, None, :], (N, n, m))
    term = np.arange(n)
    rows = np.concatenate([rows_blk.ravel(), rows_blk.ravel(), rows_u.ravel(), N * n + term])
    cols = np.concatenate([cols_k.ravel(), (cols_k + n).ravel(), cols_u.ravel(), N * n + term])
    shape = (ocp.n_eq, dim)

    def cost(w):
        X, U = unpack(ocp, w)
        Y = output_batch(sys, eval_points(X[:-1], X[1:], th))
        return float(h * np.sum(Y * U))

    def cost_gradient(w):
        X, U = unpack(ocp, w)
        P = eval_points(X[:-1], X[1:], th)
        Y = output_batch(sys, P)
        gp = h * np.einsum("km,kmn->kn", U, _output_state_jac(sys, P, U))
        gX = np.zeros((N + 1, n))
        gX[:-1] += (1.0 - th) * gp
        gX[1:] += th * gp
        return pack(ocp, gX, h * Y)

    def constraints(w):
        X, U = unpack(ocp, w)
        r = residuals(sys, h, X[:-1], X[1:], U, th)
        return np.concatenate([r.ravel(), X[-1] - ocp.xT])

    def constraint_jacobian(w):
        X, U = unpack(ocp, w)
        dk, dk1, du = residual_blocks(sys, h, X[:-1], X[1:], U, th)
        data = np.concatenate([dk.ravel(), dk1.ravel(), du.ravel(), np.ones(n)])
        return sp.csr_matrix((data, (rows, cols)), shape=shape)

    idx = np.concatenate(
        [
            np.arange(N)[:, None] * n + np.arange(n)[None, :],
            (np.arange(N)[:, None] + 1) * n + np.arange(n)[None, :],
            u_off + np.arange(N)[:, None] * m + np.arange(m)[None, :],
        ],
        axis=1,
    )
    p = 2 * n + m
    h_rows = np.broadcast_to(idx[:, :, None], (N, p, p)).ravel()
    h_cols = np.broadcast_to(idx[:, None, :], (N, p, p)).ravel()

    def lagrangian_hessian(w, mu):
        X, U = unpack(ocp, w)
        MU = np.asarray(mu, dtype=float)[: N * n].reshape(N, n)

        def local_grad(Z):
            Xk, Xk1, Uk = Z[:, :n], Z[:, n : 2 * n], Z[:, 2 * n :]
            dk, dk1, du = residual_blocks(sys, h, Xk, Xk1, Uk, th)
            P = eval_points(Xk, Xk1, th)
            gp = h * np.einsum("km,kmn->kn", Uk, _output_state_jac(sys, P, Uk))
            return np.concatenate(
                [
                    np.einsum("kin,ki->kn", dk, MU) + (1.0 - th) * gp,
                    np.einsum("kin,ki->kn", dk1, MU) + th * gp,
                    np.einsum("kim,ki->km", du, MU) + h * output_batch(sys, P),
                ],
                axis=1,
            )

        Z = np.concatenate([X[:-1], X[1:], U], axis=1)
        Hloc = batched_jacobian(local_grad, Z)
        Hloc = 0.5 * (Hloc + np.transpose(Hloc, (0, 2, 1)))
        return sp.csr_matrix((Hloc.ravel(), (h_rows, h_cols)), shape=(dim, dim))

    return NLPProblem(
        dim, cost, cost_gradient, constraints, constraint_jacobian, w_lb, w_ub, lagrangian_hessian
    )


# -------------------------------------------------------------- simulation


def _controls(u, N, m):
    u = np.asarray(u, dtype=float)
    if u.shape == (m,) or u.ndim == 0:
        return np.tile(np.broadcast_to(u, (m,)), (N, 1))
    if u.shape == (N, m) or (m == 1 and u.shape == (N,)):
        return u.reshape(N, m).copy()
    raise DimensionError(f"controls have shape {u.shape}, expected ({m},) or ({N}, {m})")


def simulate(sys, x0, u, T, N, theta=0.5):
    """Forward one-leg integration (implicit midpoint by default) with Newton solves per step.

    ``u`` is a constant input of shape (m,) or a piecewise-constant sequence
    of shape (N, m).  Raises :class:`IntegrationError` carrying the interval
    index when a Newton solve fails.
    """
    n, m = sys.n, sys.m
    theta = _theta(theta)
    x0 = _vec(x0, n, "x0")
    U = _controls(u, N, m)
    h = T / N
    X = np.empty((N + 1, n))
    X[0] = x0
    for k in range(N):
        xk = X[k][None, :]
        uk = U[k][None, :]
        z = xk.copy()
        r = residuals(sys, h, xk, z, uk, theta)
        rnorm = float(np.max(np.abs(r)))
        for _ in range(NEWTON_MAX_ITER):
            if rnorm == 0.0:
                break
            jac = residual_blocks(sys, h, xk, z, uk, theta)[1][0]
            try:
                delta = linalg.solve(jac, -r[0])
            except SingularSystemError as exc:
                raise IntegrationError(f"singular Newton matrix ({exc})", k) from exc
            alpha = 1.0
            while True:
                trial = z + alpha * delta
                rt = residuals(sys, h, xk, trial, uk, theta)
                rt_norm = float(np.max(np.abs(rt)))
                if rt_norm < rnorm or alpha < 1e-3:
                    break
                alpha *= 0.5
            z, r, rnorm = trial, rt, rt_norm
            if not np.all(np.isfinite(z)):
                raise IntegrationError("Newton iterate diverged", k)
            if alpha * np.max(np.abs(delta)) <= NEWTON_TOL * max(1.0, float(np.max(np.abs(z)))):
                break
        else:
            raise IntegrationError(f"Newton did not converge (residual {rnorm:.3e})", k)
        X[k + 1] = z[0]
    t = np.linspace(0.0, T, N + 1)
    Y = output_batch(sys, eval_points(X[:-1], X[1:], theta))
    return Trajectory(t, X, U, Y, theta)
