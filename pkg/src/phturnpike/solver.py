"""Augmented Lagrangian solver for ``min J(w)`` s.t. box bounds and ``G(w) = 0``.

Outer loop: minimise ``L_rho = J + lam^T G + rho/2 |G|^2`` over the box,
then ``lam <- lam + rho G``; ``rho`` grows by ``rho_growth`` whenever
``|G|_inf`` did not shrink by a factor 4.

Inner loop: when the problem supplies ``lagrangian_hessian`` a two-metric
projected Newton method on the exact sparse Hessian of ``L_rho`` is used;
otherwise projected L-BFGS.  Both take Armijo backtracking steps along the
projection arc.
"""
import logging
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded
from scipy.sparse.csgraph import reverse_cuthill_mckee

log = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60


@dataclass
class SolverOptions:
    eq_tol: float = 1e-6
    stat_tol: float = 1e-5
    rho0: float = 10.0
    rho_growth: float = 10.0
    max_outer: int = 30
    max_inner: int = 500
    lbfgs_memory: int = 10
    inner: str = "auto"

    def __post_init__(self):
        if self.inner not in ("auto", "newton", "lbfgs"):
            raise ValueError("inner must be 'auto', 'newton' or 'lbfgs'")
        for name, value in asdict(self).items():
            if name != "inner" and not value > 0:
                raise ValueError(f"solver option {name} must be positive")
        if not self.rho_growth > 1:
            raise ValueError("rho_growth must exceed 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class Solution:
    w_star: np.ndarray
    multipliers: np.ndarray
    cost: float
    eq_violation: float
    stationarity: float
    outer_iters: int
    inner_iters: int
    status: str
    history: list = field(default_factory=list)
    max_accepted_increase: float = -np.inf

    @property
    def converged(self):
        return self.status == "converged"

    def summary(self):
        return {
            "status": self.status,
            "cost": self.cost,
            "eq_violation": self.eq_violation,
            "stationarity": self.stationarity,
            "outer_iters": self.outer_iters,
            "inner_iters": self.inner_iters,
        }


def _proj_grad_norm(x, g, lb, ub):
    return float(np.max(np.abs(np.clip(x - g, lb, ub) - x), initial=0.0))


def _two_loop(q, pairs):
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q = q - a * y
    s, y, _ = pairs[-1]
    q = q * ((s @ y) / (y @ y))
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q = q + (a - b) * s
    return q


def _line_search(fun, x, f, g, d, lb, ub):
    """Backtracking Armijo search along the projection arc ``P(x + alpha d)``.

    Returns ``(xn, fn)``, or ``None`` when no step passes.  A step with
    ``fn > f`` is never accepted.
    """
    alpha = 1.0
    for _ in range(MAX_BACKTRACKS):
        xn = np.clip(x + alpha * d, lb, ub)
        slope = g @ (xn - x)
        if slope < 0.0:
            fn = fun(xn)
            if fn <= f + ARMIJO_C1 * slope:
                return xn, fn
        alpha *= BACKTRACK
    return None


@dataclass
class _InnerResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    iters: int
    status: str
    pgnorm: float
    worst_increase: float


def minimize_box(fun, grad, x0, lb, ub, tol, max_iter, memory):
    """Projected L-BFGS for a smooth function over the box ``[lb, ub]``.

    Variables sitting on a bound with the gradient pushing outward are held
    fixed; the curvature memory is cleared whenever that active set changes.
    """
    x = np.clip(x0, lb, ub)
    f = fun(x)
    g = grad(x)
    fixed = lb == ub
    pairs = deque(maxlen=memory)
    prev_active = None
    worst = -np.inf
    for it in range(max_iter):
        pgn = _proj_grad_norm(x, g, lb, ub)
        if pgn <= tol:
            return _InnerResult(x, f, g, it, "converged", pgn, worst)
        active = fixed | ((x <= lb) & (g > 0)) | ((x >= ub) & (g < 0))
        if prev_active is not None and not np.array_equal(active, prev_active):
            pairs.clear()
        prev_active = active
        free = ~active
        gf = np.where(free, g, 0.0)

        for attempt in range(2):
            if pairs:
                d = -np.where(free, _two_loop(gf, list(pairs)), 0.0)
                if gf @ d >= 0.0:
                    pairs.clear()
            if not pairs:
                d = -gf / max(1.0, float(np.max(np.abs(gf))))
            found = _line_search(fun, x, f, g, d, lb, ub)
            if found is not None or not pairs:
                break
            pairs.clear()
        if found is None:
            return _InnerResult(x, f, g, it, "line-search-failure", pgn, worst)

        xn, fn = found
        step = xn - x
        worst = max(worst, fn - f)
        gn = grad(xn)
        y = np.where(free, gn - g, 0.0)
        s = np.where(free, step, 0.0)
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = xn, fn, gn
    pgn = _proj_grad_norm(x, g, lb, ub)
    status = "converged" if pgn <= tol else "iteration-cap"
    return _InnerResult(x, f, g, max_iter, status, pgn, worst)


class BandedSPD:
    """Shifted Cholesky solves on a fixed sparsity pattern.

    The pattern is reordered once by reverse Cuthill-McKee; each
    :meth:`solve` factors ``H + tau I`` in banded form, raising ``tau`` until
    the factorization succeeds.
    """

    def __init__(self, pattern):
        pattern = sp.csr_matrix(pattern)
        n = pattern.shape[0]
        sym = (abs(pattern) + abs(pattern.T) + sp.identity(n, format="csr")).tocsr()
        self.perm = reverse_cuthill_mckee(sym, symmetric_mode=True)
        self.inv = np.empty_like(self.perm)
        self.inv[self.perm] = np.arange(n)
        coo = sym.tocoo()
        pi, pj = self.inv[coo.row], self.inv[coo.col]
        self.bw = int(np.max(np.abs(pi - pj), initial=0))
        self.n = n
        self.last_shift = 0.0

    def solve(self, H, rhs):
        H = sp.coo_matrix(H)
        i, j = self.inv[H.row], self.inv[H.col]
        upper = i <= j
        ab = np.zeros((self.bw + 1, self.n))
        np.add.at(ab, (self.bw + i[upper] - j[upper], j[upper]), H.data[upper])
        diag = ab[self.bw].copy()
        scale = max(1.0, float(np.max(np.abs(diag), initial=0.0)))
        tau = 0.0
        while True:
            ab[self.bw] = diag + tau
            try:
                c = cholesky_banded(ab, lower=False, check_finite=False)
                break
            except LinAlgError:
                tau = max(10.0 * tau, 1e-10 * scale)
                if tau > 1e12 * scale:
                    raise
        self.last_shift = tau
        y = cho_solve_banded((c, False), rhs[self.perm], check_finite=False)
        out = np.empty_like(y)
        out[self.perm] = y
        return out


def minimize_box_newton(fun, grad, hess, x0, lb, ub, tol, max_iter, eps_active=1e-2):
    """Two-metric projected Newton method over ``[lb, ub]``.

    Variables within ``min(eps_active, |projected gradient|)`` of a bound and
    with the gradient pushing outward are moved by a scaled gradient step;
    the rest take a Newton step on the (shifted) free-block Hessian.
    """
    x = np.clip(x0, lb, ub)
    f = fun(x)
    g = grad(x)
    fixed = lb == ub
    factor = None
    worst = -np.inf
    for it in range(max_iter):
        pgn = _proj_grad_norm(x, g, lb, ub)
        if pgn <= tol:
            return _InnerResult(x, f, g, it, "converged", pgn, worst)
        eps = min(eps_active, pgn)
        active = fixed | ((x <= lb + eps) & (g > 0)) | ((x >= ub - eps) & (g < 0))
        free = (~active).astype(float)
        H = sp.csr_matrix(hess(x))
        if factor is None:
            factor = BandedSPD(H)
        Dfree = sp.diags(free)
        Hf = (Dfree @ H @ Dfree + sp.diags(1.0 - free)).tocoo()
        d = -factor.solve(Hf, g * free)
        hdiag = np.abs(H.diagonal())
        d = np.where(active, -g / np.maximum(hdiag, 1.0), d)
        found = _line_search(fun, x, f, g, d, lb, ub)
        if found is None:
            return _InnerResult(x, f, g, it, "line-search-failure", pgn, worst)
        xn, fn = found
        worst = max(worst, fn - f)
        x, f = xn, fn
        g = grad(x)
    pgn = _proj_grad_norm(x, g, lb, ub)
    status = "converged" if pgn <= tol else "iteration-cap"
    return _InnerResult(x, f, g, max_iter, status, pgn, worst)


class _Lagrangian:
    """``L_rho`` and its gradient with a one-entry cache of (w, J, G)."""

    def __init__(self, nlp):
        self.nlp = nlp
        self.lam = None
        self.rho = None
        self._key = None
        self._val = None

    def _eval(self, w):
        if self._key is None or not np.array_equal(w, self._key):
            self._key = w.copy()
            self._val = (self.nlp.cost(w), np.asarray(self.nlp.constraints(w), dtype=float))
        return self._val

    def value(self, w):
        c, G = self._eval(w)
        return c + self.lam @ G + 0.5 * self.rho * (G @ G)

    def gradient(self, w):
        _, G = self._eval(w)
        jac = self.nlp.constraint_jacobian(w)
        return np.asarray(self.nlp.cost_gradient(w), dtype=float) + jac.T @ (self.lam + self.rho * G)

    def hessian(self, w):
        _, G = self._eval(w)
        jac = sp.csr_matrix(self.nlp.constraint_jacobian(w))
        mu = self.lam + self.rho * G
        return sp.csr_matrix(self.nlp.lagrangian_hessian(w, mu)) + self.rho * (jac.T @ jac)


def solve(nlp, w0, opts=None):
    """Solve ``nlp`` from ``w0`` (clamped into the box).

    Returns a :class:`Solution`; iteration caps and line-search failures are
    reported through ``status``.  One log line per outer iteration.
    """
    opts = opts or SolverOptions()
    lb, ub = np.asarray(nlp.w_lb, dtype=float), np.asarray(nlp.w_ub, dtype=float)
    w = np.clip(np.asarray(w0, dtype=float), lb, ub)
    lag = _Lagrangian(nlp)
    newton = getattr(nlp, "lagrangian_hessian", None) is not None and opts.inner != "lbfgs"
    lag.lam = np.zeros(np.asarray(nlp.constraints(w)).size)
    lag.rho = opts.rho0
    omega = max(opts.stat_tol, 1e-2)
    prev_viol = np.inf
    history = []
    inner_total = 0
    status = "iteration-cap"
    worst = -np.inf
    failures = 0
    stat = np.inf
    viol = np.inf
    outer = 0
    for outer in range(1, opts.max_outer + 1):
        if newton:
            res = minimize_box_newton(lag.value, lag.gradient, lag.hessian, w, lb, ub, omega, opts.max_inner)
        else:
            res = minimize_box(lag.value, lag.gradient, w, lb, ub, omega, opts.max_inner, opts.lbfgs_memory)
        w = res.x
        inner_total += res.iters
        worst = max(worst, res.worst_increase)
        cost, G = lag._eval(w)
        viol = float(np.max(np.abs(G), initial=0.0))
        stat = res.pgnorm
        record = {
            "iter": outer,
            "cost": float(cost),
            "eq_violation": viol,
            "rho": float(lag.rho),
            "stationarity": stat,
            "inner_iters": res.iters,
            "inner_status": res.status,
        }
        history.append(record)
        log.info(
            "iter=%d cost=%.12e eq_violation=%.3e rho=%.3e stationarity=%.3e inner=%d %s",
            outer, cost, viol, lag.rho, stat, res.iters, res.status,
        )
        lag.lam = lag.lam + lag.rho * G
        if viol <= opts.eq_tol and stat <= opts.stat_tol:
            status = "converged"
            break
        failures = failures + 1 if res.status == "line-search-failure" else 0
        if failures >= 2:
            status = "line-search-failure"
            break
        if viol > 0.25 * prev_viol:
            lag.rho *= opts.rho_growth
        prev_viol = viol
        omega = max(opts.stat_tol, 0.1 * omega)
    cost, _ = lag._eval(w)
    return Solution(
        w_star=w,
        multipliers=lag.lam,
        cost=float(cost),
        eq_violation=viol,
        stationarity=stat,
        outer_iters=outer,
        inner_iters=inner_total,
        status=status,
        history=history,
        max_accepted_increase=float(worst),
    )


def kkt_residuals(nlp, w, multipliers, bound_tol=1e-12):
    """Cost, ``|G|_inf``, projected Lagrangian stationarity and active bounds at ``w``."""
    w = np.asarray(w, dtype=float)
    lb, ub = np.asarray(nlp.w_lb, dtype=float), np.asarray(nlp.w_ub, dtype=float)
    G = np.asarray(nlp.constraints(w), dtype=float)
    grad = np.asarray(nlp.cost_gradient(w), dtype=float) + nlp.constraint_jacobian(w).T @ np.asarray(multipliers, dtype=float)
    fixed = lb == ub
    with np.errstate(invalid="ignore"):
        at_lo = (w <= lb + bound_tol * np.maximum(1.0, np.abs(lb))) & ~fixed
        at_hi = (w >= ub - bound_tol * np.maximum(1.0, np.abs(ub))) & ~fixed
    return {
        "cost": float(nlp.cost(w)),
        "eq_violation": float(np.max(np.abs(G), initial=0.0)),
        "stationarity": _proj_grad_norm(w, grad, lb, ub),
        "active_lower": np.flatnonzero(at_lo & (grad > 0)).tolist(),
        "active_upper": np.flatnonzero(at_hi & (grad < 0)).tolist(),
        "fixed": int(np.sum(fixed)),
    }


def kkt_report(nlp, sol):
    return kkt_residuals(nlp, sol.w_star, sol.multipliers)
