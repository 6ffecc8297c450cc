"""Dense kernels for small matrices: Jacobi eigen/SVD, PSD square root, solves.

The rotation sweeps run in a compiled extension when it is importable and in
``_jacobi_py`` otherwise.  Set ``PHTURNPIKE_PURE_PYTHON=1`` to force the
fallback.  ``BACKEND`` names the kernel in use.
"""
import os

import numpy as np

from ..errors import NotPSDError, SingularSystemError, StructureError

if os.environ.get("PHTURNPIKE_PURE_PYTHON", "") not in ("", "0"):
    from . import _jacobi_py as _kernel

    BACKEND = "python"
else:
    try:
        from . import _jacobi as _kernel

        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _jacobi_py as _kernel

        BACKEND = "python"

__all__ = ["BACKEND", "sym_eig", "sqrt_psd", "svd", "solve", "use_kernel"]

PSD_CLAMP = 1e-10
COND_LIMIT = 1e14


def use_kernel(name):
    """Switch the rotation kernel at runtime ("cython" or "python")."""
    global _kernel, BACKEND
    if name == "cython":
        from . import _jacobi as mod
    elif name == "python":
        from . import _jacobi_py as mod
    else:
        raise ValueError(f"unknown kernel {name!r}")
    _kernel = mod
    BACKEND = name


def _as_matrix(a):
    a = np.array(a, dtype=float, order="C", copy=True)
    if a.ndim != 2:
        raise StructureError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise StructureError("matrix has non-finite entries")
    return a


def sym_eig(a, tol=1e-10):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Symmetric within ``tol * max(1, max|a|)``; symmetrized before use.
    tol : float
        Symmetry tolerance.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in descending order.
    v : ndarray, shape (n, n)
        Orthogonal matrix whose columns are the eigenvectors.
    """
    a = _as_matrix(a)
    n, m = a.shape
    if n != m:
        raise StructureError(f"matrix is not square: {a.shape}")
    amax = float(np.max(np.abs(a))) if a.size else 0.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > tol * max(1.0, amax):
        raise StructureError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")
    return _kernel.eigh(0.5 * (a + a.T))


def sqrt_psd(a):
    """Non-negative square root of a symmetric positive semidefinite matrix.

    Eigenvalues down to ``-1e-10 * ||A||`` are clamped to zero; anything more
    negative raises :class:`NotPSDError`.
    """
    w, v = sym_eig(a)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if w.size and w[-1] < -PSD_CLAMP * scale:
        raise NotPSDError(f"eigenvalue {w[-1]:.3e} below clamp threshold")
    root = np.sqrt(np.clip(w, 0.0, None))
    s = (v * root) @ v.T
    return 0.5 * (s + s.T)


def svd(a):
    """Thin singular value decomposition by one-sided Jacobi.

    Returns ``(s, u, vt)`` with ``s`` descending, ``u`` of shape (m, k),
    ``vt`` of shape (k, n), ``k = min(m, n)`` and ``a = u @ diag(s) @ vt``.
    For square input ``vt`` is a full orthogonal matrix, so its trailing rows
    span the kernel.
    """
    a = _as_matrix(a)
    m, n = a.shape
    if m < n:
        s, u, vt = svd(a.T)
        return s, np.ascontiguousarray(vt.T), np.ascontiguousarray(u.T)
    return _kernel.svd(a)


def solve(a, b):
    """Solve ``a x = b`` for a square system.

    Raises :class:`SingularSystemError` when the 2-norm condition estimate
    exceeds 1e14 or the residual check fails.
    """
    a = _as_matrix(a)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise StructureError(f"matrix is not square: {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise StructureError(f"rhs length {b.shape[0]} does not match {a.shape[0]}")
    s = svd(a)[0]
    if s.size and (s[-1] == 0.0 or s[0] / s[-1] > COND_LIMIT):
        cond = np.inf if s[-1] == 0.0 else s[0] / s[-1]
        raise SingularSystemError(f"condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}")
    x = np.linalg.solve(a, b)
    res = np.linalg.norm(a @ x - b)
    if res > 1e-10 * (np.linalg.norm(a, 2) * np.linalg.norm(x) + np.linalg.norm(b)):
        raise SingularSystemError(f"residual {res:.3e} too large")
    return x
