"""Port-Hamiltonian descriptor systems ``E(x) x' = (J(x) - R(x)) eta(x) + B(x) u``.

A :class:`PHSystem` is a bundle of callables.  Built-in systems are written
with numpy broadcasting so that every callable also accepts a stack of
points of shape ``(K, n)``; they set ``vectorized=True`` and the transcriber
evaluates all grid intervals in one call.  User systems may stay pointwise.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import linalg
from .deriv import DifferentiableMap, gradient
from .errors import DimensionError, StructureError

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PHSystem:
    """Callables of a feedthrough-free port-Hamiltonian descriptor system.

    Optional analytic derivatives:

    ``grad_H(x)``
        gradient of the Hamiltonian, shape (n,)
    ``f(x)``, ``f_jac(x)``
        dissipation map ``R(x)^{1/2} eta(x)`` and its Jacobian (n, n)
    ``rhs_jac(x, u)``
        state Jacobian of ``(J - R) eta + B u``, shape (n, n)
    ``output_jac(x, u)``
        state Jacobian of ``y = B^T eta``, shape (m, n)
    """

    name: str
    n: int
    m: int
    E: Fn
    J: Fn
    R: Fn
    eta: Fn
    B: Fn
    H: Callable[[np.ndarray], float]
    grad_H: Optional[Fn] = None
    f: Optional[Fn] = None
    f_jac: Optional[Fn] = None
    rhs_jac: Optional[Callable] = None
    output_jac: Optional[Callable] = None
    E_constant: bool = False
    vectorized: bool = False
    params: dict = field(default_factory=dict, compare=False)


def batch(sys, fn, X, *args):
    """Evaluate a system callable on the rows of ``X`` (and matching ``args``)."""
    X = np.asarray(X, dtype=float)
    if sys.vectorized:
        return np.asarray(fn(X, *args), dtype=float)
    rows = [np.asarray(fn(X[k], *(a[k] for a in args)), dtype=float) for k in range(X.shape[0])]
    return np.stack(rows)


def _check_vec(v, size, what):
    v = np.asarray(v, dtype=float)
    if v.shape != (size,):
        raise DimensionError(f"{what} has shape {v.shape}, expected ({size},)")
    return v


def rhs(sys, x, u):
    """Right-hand side ``(J(x) - R(x)) eta(x) + B(x) u`` (E is not applied)."""
    x = _check_vec(x, sys.n, "state")
    u = _check_vec(u, sys.m, "input")
    return (np.asarray(sys.J(x)) - np.asarray(sys.R(x))) @ np.asarray(sys.eta(x)) + np.asarray(sys.B(x)) @ u


def rhs_batch(sys, X, U):
    JR = batch(sys, sys.J, X) - batch(sys, sys.R, X)
    return np.einsum("kij,kj->ki", JR, batch(sys, sys.eta, X)) + np.einsum(
        "kij,kj->ki", batch(sys, sys.B, X), U
    )


def output(sys, x):
    """Collocated output ``y = B(x)^T eta(x)``."""
    x = _check_vec(x, sys.n, "state")
    return np.asarray(sys.B(x)).T @ np.asarray(sys.eta(x))


def output_batch(sys, X):
    return np.einsum("kij,ki->kj", batch(sys, sys.B, X), batch(sys, sys.eta, X))


def hamiltonian_batch(sys, X):
    return batch(sys, sys.H, X).reshape(-1)


def hamiltonian_map(sys):
    """The Hamiltonian as a scalar :class:`DifferentiableMap`."""
    analytic = None
    if sys.grad_H is not None:
        analytic = lambda x: np.asarray(sys.grad_H(x), dtype=float).reshape(1, sys.n)  # noqa: E731
    return DifferentiableMap(sys.n, 1, lambda x: np.atleast_1d(sys.H(x)), analytic)


@dataclass
class CheckResult:
    passed: bool
    worst_violation: float
    witness: Optional[np.ndarray]

    def to_dict(self):
        return {
            "passed": bool(self.passed),
            "worst_violation": float(self.worst_violation),
            "witness": None if self.witness is None else [float(v) for v in self.witness],
        }


@dataclass
class StructureReport:
    checks: dict

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def to_dict(self):
        return {"passed": self.passed, "checks": {k: c.to_dict() for k, c in self.checks.items()}}


def check_structure(sys, samples):
    """Sample the four structural conditions and report the worst violations.

    Checks ``J = -J^T`` (1e-12), ``R = R^T`` (1e-12), ``R >= 0`` (eigenvalues
    >= -1e-10), ``grad H = E^T eta`` (1e-6 relative) and ``H >= 0``.
    Failures are reported, never raised.
    """
    samples = [np.asarray(x, dtype=float) for x in samples]
    if not samples:
        raise ValueError("need at least one sample point")
    worst = {k: (0.0, None) for k in ("J_skew", "R_symmetric", "R_psd", "gradient", "H_nonnegative")}
    tol = {"J_skew": 1e-12, "R_symmetric": 1e-12, "R_psd": 1e-10, "gradient": 1e-6, "H_nonnegative": 0.0}
    hmap = hamiltonian_map(sys)

    def record(key, value, x):
        if worst[key][1] is None or value > worst[key][0]:
            worst[key] = (value, x)

    for x in samples:
        J = np.asarray(sys.J(x), dtype=float)
        R = np.asarray(sys.R(x), dtype=float)
        record("J_skew", float(np.max(np.abs(J + J.T))) / max(1.0, float(np.max(np.abs(J)))), x)
        asym = float(np.max(np.abs(R - R.T)))
        record("R_symmetric", asym / max(1.0, float(np.max(np.abs(R)))), x)
        lam_min = float(linalg.sym_eig(0.5 * (R + R.T), tol=np.inf)[0][-1])
        record("R_psd", max(0.0, -lam_min), x)
        target = np.asarray(sys.E(x), dtype=float).T @ np.asarray(sys.eta(x), dtype=float)
        g = gradient(hmap, x)
        record("gradient", float(np.linalg.norm(g - target)) / max(1.0, float(np.linalg.norm(target))), x)
        record("H_nonnegative", max(0.0, -float(sys.H(x))), x)

    checks = {
        k: CheckResult(worst[k][0] <= tol[k], worst[k][0], worst[k][1]) for k in worst
    }
    return StructureReport(checks)


# ---------------------------------------------------------------- built-ins


def _const(mat, x, n_out_shape):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(mat, x.shape[:-1] + n_out_shape).copy()


def _ph1_q(x):
    return 4.0 * np.sum(x * x, axis=-1) + 1.0


def builtin_ph1():
    """Two-state system with a single dissipative channel.

    ``R(x) = diag((4|x|^2 + 1)^2 / 4, 0)``, ``eta(x) = diag(2, 1) x``,
    ``H(x) = x^T diag(2, 1) x / 2``.  Its dissipation manifold is ``x_1 = 0``.
    """
    Jm = np.array([[0.0, 1.0], [-1.0, 0.0]])
    Bm = np.array([[1.0], [0.0]])
    Wm = np.diag([2.0, 1.0])

    def R(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 0.25 * _ph1_q(x) ** 2
        return out

    def eta(x):
        return np.asarray(x, dtype=float) @ Wm

    def H(x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] ** 2 + 0.5 * x[..., 1] ** 2

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = _ph1_q(x) * x[..., 0]
        return out

    def f_jac(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 12.0 * x1**2 + 4.0 * x2**2 + 1.0
        out[..., 0, 1] = 8.0 * x1 * x2
        return out

    def rhs_jac(x, u=None):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        q = _ph1_q(x)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = -0.5 * q**2 - 8.0 * q * x1**2
        out[..., 0, 1] = 1.0 - 8.0 * q * x1 * x2
        out[..., 1, 0] = -2.0
        return out

    def output_jac(x, u=None):
        return _const(np.array([[2.0, 0.0]]), x, (1, 2))

    return PHSystem(
        name="ph1",
        n=2,
        m=1,
        E=lambda x: _const(np.eye(2), x, (2, 2)),
        J=lambda x: _const(Jm, x, (2, 2)),
        R=R,
        eta=eta,
        B=lambda x: _const(Bm, x, (2, 1)),
        H=H,
        grad_H=eta,
        f=f,
        f_jac=f_jac,
        rhs_jac=rhs_jac,
        output_jac=output_jac,
        E_constant=True,
        vectorized=True,
    )


def builtin_ph2():
    """Three-state descriptor variant with singular ``E``.

    ``E = [[1,0,0],[0,0,1],[0,0,0]]``, ``eta = (2 xi_1, xi_2, xi_3)``,
    ``B = (1, 2, 0)^T``; dissipation manifold ``xi_1 = 0``.

    No scalar function satisfies ``grad H = E^T eta = (2 xi_1, 0, xi_2)``
    (the field is not curl-free), so the storage function shipped here is
    ``H = xi_1^2 + xi_3^2 / 2``, which matches ``E^T eta`` wherever
    ``xi_2 = xi_3``.  :func:`check_structure` reports the gradient mismatch.
    """
    Em = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    Jm = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    Bm = np.array([[1.0], [2.0], [0.0]])

    def q(x):
        return 4.0 * x[..., 0] ** 2 + 4.0 * x[..., 1] ** 2 + 1.0

    def R(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = 0.25 * q(x) ** 2
        return out

    def eta(x):
        x = np.asarray(x, dtype=float)
        out = x.copy()
        out[..., 0] *= 2.0
        return out

    def H(x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] ** 2 + 0.5 * x[..., 2] ** 2

    def grad_H(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = 2.0 * x[..., 0]
        out[..., 2] = x[..., 2]
        return out

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = q(x) * x[..., 0]
        return out

    def f_jac(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = 12.0 * x1**2 + 4.0 * x2**2 + 1.0
        out[..., 0, 1] = 8.0 * x1 * x2
        return out

    def rhs_jac(x, u=None):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        qq = q(x)
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = -0.5 * qq**2 - 8.0 * qq * x1**2
        out[..., 0, 1] = 1.0 - 8.0 * qq * x1 * x2
        out[..., 1, 0] = -2.0
        return out

    def output_jac(x, u=None):
        return _const(np.array([[2.0, 2.0, 0.0]]), x, (1, 3))

    return PHSystem(
        name="ph2",
        n=3,
        m=1,
        E=lambda x: _const(Em, x, (3, 3)),
        J=lambda x: _const(Jm, x, (3, 3)),
        R=R,
        eta=eta,
        B=lambda x: _const(Bm, x, (3, 1)),
        H=H,
        grad_H=grad_H,
        f=f,
        f_jac=f_jac,
        rhs_jac=rhs_jac,
        output_jac=output_jac,
        E_constant=True,
        vectorized=True,
    )


def builtin_linear(J, R, Q, B):
    """Linear system ``x' = (J - R) Q x + B u`` with ``H = x^T Q x / 2``.

    Raises :class:`StructureError` unless J is skew, R symmetric PSD and Q
    symmetric positive definite.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    B = np.asarray(B, dtype=float)
    n = J.shape[0]
    if B.ndim == 1:
        B = B.reshape(n, -1)
    for name, mat in (("J", J), ("R", R), ("Q", Q)):
        if mat.shape != (n, n):
            raise StructureError(f"{name} has shape {mat.shape}, expected ({n}, {n})")
    if B.shape[0] != n:
        raise StructureError(f"B has {B.shape[0]} rows, expected {n}")
    scale = max(1.0, float(np.max(np.abs(J))))
    if np.max(np.abs(J + J.T)) > 1e-12 * scale:
        raise StructureError("J is not skew-symmetric")
    if np.max(np.abs(R - R.T)) > 1e-12 * max(1.0, float(np.max(np.abs(R)))):
        raise StructureError("R is not symmetric")
    if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, float(np.max(np.abs(Q)))):
        raise StructureError("Q is not symmetric")
    rhalf = linalg.sqrt_psd(R)  # raises NotPSDError
    if linalg.sym_eig(Q)[0][-1] <= 0.0:
        raise StructureError("Q is not positive definite")
    m = B.shape[1]
    K = rhalf @ Q
    A = (J - R) @ Q
    BQ = B.T @ Q

    return PHSystem(
        name="linear",
        n=n,
        m=m,
        E=lambda x: _const(np.eye(n), x, (n, n)),
        J=lambda x: _const(J, x, (n, n)),
        R=lambda x: _const(R, x, (n, n)),
        eta=lambda x: np.asarray(x, dtype=float) @ Q.T,
        B=lambda x: _const(B, x, (n, m)),
        H=lambda x: 0.5 * np.einsum("...i,ij,...j->...", np.asarray(x, dtype=float), Q, np.asarray(x, dtype=float)),
        grad_H=lambda x: np.asarray(x, dtype=float) @ Q.T,
        f=lambda x: np.asarray(x, dtype=float) @ K.T,
        f_jac=lambda x: _const(K, x, (n, n)),
        rhs_jac=lambda x, u=None: _const(A, x, (n, n)),
        output_jac=lambda x, u=None: _const(BQ, x, (m, n)),
        E_constant=True,
        vectorized=True,
        params={"J": J.tolist(), "R": R.tolist(), "Q": Q.tolist(), "B": B.tolist()},
    )


BUILTINS = {"ph1": builtin_ph1, "ph2": builtin_ph2}
