"""Pure-Python twin of the compiled Jacobi kernels in ``_jacobi.pyx``.

Same algorithms, same in-place contract and return codes; rotations are
applied with numpy slice arithmetic instead of scalar loops.
"""
import math

import numpy as np


def eigh_inplace(a, v, max_sweeps=100):
    n = a.shape[0]
    scale = math.sqrt(float(np.sum(a * a)))
    if scale == 0.0:
        return 0
    for sweep in range(max_sweeps):
        offdiag = a - np.diag(np.diag(a))
        off = math.sqrt(float(np.sum(offdiag * offdiag)))
        if off <= 1e-15 * scale:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return -1


def svd_inplace(u, v, max_sweeps=100):
    n = u.shape[1]
    # columns with squared norm below tiny are numerically zero
    tiny = 1e-32 * float(np.sum(u * u))
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                up = u[:, p]
                uq = u[:, q]
                alpha = float(up @ up)
                beta = float(uq @ uq)
                gamma = float(up @ uq)
                if alpha <= tiny or beta <= tiny:
                    continue
                if gamma == 0.0 or abs(gamma) <= 1e-15 * math.sqrt(alpha) * math.sqrt(beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                up = up.copy()
                uq = uq.copy()
                u[:, p] = c * up - s * uq
                u[:, q] = s * up + c * uq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            return sweep
    return -1


def eigh(a):
    """Eigenvalues (descending) and orthonormal eigenvectors of symmetric ``a``."""
    a = np.array(a, dtype=float, order="C", copy=True)
    v = np.eye(a.shape[0])
    if eigh_inplace(a, v) < 0:
        raise ArithmeticError("Jacobi eigenvalue sweeps did not converge")
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], np.ascontiguousarray(v[:, order])


def _complete_basis(q, filled):
    m, k = q.shape
    basis = [q[:, j] for j in range(k) if filled[j]]
    for j in range(k):
        if filled[j]:
            continue
        for e in np.eye(m):
            cand = e.copy()
            for _ in range(2):
                for b in basis:
                    cand -= (b @ cand) * b
            nrm = np.linalg.norm(cand)
            if nrm > 1e-8:
                q[:, j] = cand / nrm
                basis.append(q[:, j])
                break
    return q


def svd(a):
    """Thin SVD ``(s, u, vt)`` of ``a`` with rows >= cols; ``s`` descending."""
    work = np.array(a, dtype=float, order="C", copy=True)
    m, n = work.shape
    v = np.eye(n)
    if n and svd_inplace(work, v) < 0:
        raise ArithmeticError("one-sided Jacobi sweeps did not converge")
    s = np.sqrt(np.sum(work * work, axis=0))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    work = work[:, order]
    v = v[:, order]
    smax = s[0] if n else 0.0
    filled = s > 1e-300 + 1e-15 * smax * max(m, n)
    u = np.zeros((m, n))
    u[:, filled] = work[:, filled] / s[filled]
    s = np.where(filled, s, 0.0)
    if not np.all(filled):
        u = _complete_basis(u, filled)
    return s, u, np.ascontiguousarray(v.T)
