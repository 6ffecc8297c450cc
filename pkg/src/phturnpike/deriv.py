"""Jacobians and gradients: analytic when supplied, central differences otherwise."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, EvaluationError

FD_STEP = np.cbrt(np.finfo(float).eps)


@dataclass(frozen=True)
class DifferentiableMap:
    """Vector map ``eval: R^input_dim -> R^output_dim`` with optional Jacobian."""

    input_dim: int
    output_dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    analytic_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        return np.asarray(self.eval(np.asarray(x, dtype=float)), dtype=float).reshape(self.output_dim)


def _check_point(fmap, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (fmap.input_dim,):
        raise DimensionError(f"point has shape {x.shape}, expected ({fmap.input_dim},)")
    if not np.all(np.isfinite(x)):
        raise EvaluationError("point has non-finite entries")
    return x


def fd_jacobian(fmap, x):
    """Central-difference Jacobian, step ``cbrt(eps) * max(1, |x_i|)``."""
    x = _check_point(fmap, x)
    jac = np.empty((fmap.output_dim, fmap.input_dim))
    for i in range(fmap.input_dim):
        step = FD_STEP * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        fp = fmap(xp)
        fm = fmap(xm)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise EvaluationError(f"non-finite evaluation near x along coordinate {i}")
        jac[:, i] = (fp - fm) / (xp[i] - xm[i])
    return jac


def jacobian(fmap, x):
    """Jacobian of ``fmap`` at ``x``; analytic path when available."""
    x = _check_point(fmap, x)
    if fmap.analytic_jacobian is not None:
        jac = np.asarray(fmap.analytic_jacobian(x), dtype=float)
        if jac.shape != (fmap.output_dim, fmap.input_dim):
            raise DimensionError(
                f"analytic Jacobian has shape {jac.shape}, expected "
                f"({fmap.output_dim}, {fmap.input_dim})"
            )
        return jac
    return fd_jacobian(fmap, x)


def gradient(fmap, x):
    """Gradient of a scalar map (``output_dim == 1``) as a flat vector."""
    if fmap.output_dim != 1:
        raise DimensionError("gradient needs a scalar map")
    return jacobian(fmap, x)[0]


def batched_jacobian(fn, X):
    """Central-difference Jacobians of a row-wise map at many points at once.

    ``fn`` maps an array of shape (K, n) to (K, p) row by row; the result has
    shape (K, p, n).
    """
    X = np.asarray(X, dtype=float)
    K, n = X.shape
    steps = FD_STEP * np.maximum(1.0, np.abs(X))
    cols = []
    for i in range(n):
        Xp = X.copy()
        Xm = X.copy()
        Xp[:, i] += steps[:, i]
        Xm[:, i] -= steps[:, i]
        diff = np.asarray(fn(Xp), dtype=float) - np.asarray(fn(Xm), dtype=float)
        if not np.all(np.isfinite(diff)):
            raise EvaluationError(f"non-finite evaluation along coordinate {i}")
        cols.append(diff.reshape(K, -1) / (Xp[:, i] - Xm[:, i])[:, None])
    return np.stack(cols, axis=-1)
