"""Compiled Jacobi rotation kernels for small dense matrices.

Both routines work in place on C-contiguous float64 buffers and return the
number of sweeps used, or -1 when ``max_sweeps`` was exhausted.
"""
import numpy as np

from libc.math cimport sqrt, fabs, copysign


def eigh_inplace(double[:, ::1] a, double[:, ::1] v, int max_sweeps=100):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, q, k
    cdef double scale = 0.0, off, apq, theta, t, c, s, x, y
    cdef int sweep

    for p in range(n):
        for q in range(n):
            scale += a[p, q] * a[p, q]
    scale = sqrt(scale)
    if scale == 0.0:
        return 0

    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += a[p, q] * a[p, q]
        if sqrt(off) <= 1e-15 * scale:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = copysign(1.0, theta) / (fabs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    x = a[k, p]
                    y = a[k, q]
                    a[k, p] = c * x - s * y
                    a[k, q] = s * x + c * y
                for k in range(n):
                    x = a[p, k]
                    y = a[q, k]
                    a[p, k] = c * x - s * y
                    a[q, k] = s * x + c * y
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    x = v[k, p]
                    y = v[k, q]
                    v[k, p] = c * x - s * y
                    v[k, q] = s * x + c * y
    return -1


def svd_inplace(double[:, ::1] u, double[:, ::1] v, int max_sweeps=100):
    """One-sided (Hestenes) Jacobi on the columns of ``u`` (rows >= cols)."""
    cdef Py_ssize_t m = u.shape[0], n = u.shape[1]
    cdef Py_ssize_t p, q, k
    cdef double alpha, beta, gamma, zeta, t, c, s, x, y
    cdef double tiny = 0.0
    cdef int sweep
    cdef bint rotated

    # columns with squared norm below tiny are numerically zero
    for p in range(m):
        for q in range(n):
            tiny += u[p, q] * u[p, q]
    tiny *= 1e-32

    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for k in range(m):
                    alpha += u[k, p] * u[k, p]
                    beta += u[k, q] * u[k, q]
                    gamma += u[k, p] * u[k, q]
                if alpha <= tiny or beta <= tiny:
                    continue
                if gamma == 0.0 or fabs(gamma) <= 1e-15 * sqrt(alpha) * sqrt(beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = copysign(1.0, zeta) / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for k in range(m):
                    x = u[k, p]
                    y = u[k, q]
                    u[k, p] = c * x - s * y
                    u[k, q] = s * x + c * y
                for k in range(n):
                    x = v[k, p]
                    y = v[k, q]
                    v[k, p] = c * x - s * y
                    v[k, q] = s * x + c * y
        if not rotated:
            return sweep
    return -1


cdef void _order_desc(double[::1] vals, Py_ssize_t[::1] idx):
    cdef Py_ssize_t n = vals.shape[0], i, j, key
    for i in range(n):
        idx[i] = i
    for i in range(1, n):
        key = idx[i]
        j = i - 1
        while j >= 0 and vals[idx[j]] < vals[key]:
            idx[j + 1] = idx[j]
            j -= 1
        idx[j + 1] = key


def eigh(a):
    """Eigenvalues (descending) and orthonormal eigenvectors of symmetric ``a``."""
    cdef double[:, ::1] w = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = w.shape[0], i, k
    vv = np.eye(n)
    cdef double[:, ::1] v = vv
    if eigh_inplace(w, v) < 0:
        raise ArithmeticError("Jacobi eigenvalue sweeps did not converge")
    diag_arr = np.empty(n)
    cdef double[::1] d = diag_arr
    for i in range(n):
        d[i] = w[i, i]
    idx_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] idx = idx_arr
    _order_desc(d, idx)
    vals = np.empty(n)
    vecs = np.empty((n, n))
    cdef double[::1] ov = vals
    cdef double[:, ::1] ovec = vecs
    for i in range(n):
        ov[i] = d[idx[i]]
        for k in range(n):
            ovec[k, i] = v[k, idx[i]]
    return vals, vecs


def svd(a):
    """Thin SVD ``(s, u, vt)`` of ``a`` with rows >= cols; ``s`` descending."""
    cdef double[:, ::1] w = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t m = w.shape[0], n = w.shape[1], i, j, k, e, b
    vv = np.eye(n)
    cdef double[:, ::1] v = vv
    if n > 0 and svd_inplace(w, v) < 0:
        raise ArithmeticError("one-sided Jacobi sweeps did not converge")
    norms_arr = np.empty(n)
    cdef double[::1] norms = norms_arr
    cdef double acc, smax = 0.0, thresh, dot, nrm
    for j in range(n):
        acc = 0.0
        for k in range(m):
            acc += w[k, j] * w[k, j]
        norms[j] = sqrt(acc)
    idx_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] idx = idx_arr
    _order_desc(norms, idx)
    if n > 0:
        smax = norms[idx[0]]
    thresh = 1e-300 + 1e-15 * smax * (m if m > n else n)

    s_arr = np.zeros(n)
    u_arr = np.zeros((m, n))
    vt_arr = np.empty((n, n))
    filled_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] s = s_arr
    cdef double[:, ::1] u = u_arr
    cdef double[:, ::1] vt = vt_arr
    cdef unsigned char[::1] filled = filled_arr
    cdef bint missing = False
    for j in range(n):
        i = idx[j]
        for k in range(n):
            vt[j, k] = v[k, i]
        if norms[i] > thresh:
            s[j] = norms[i]
            filled[j] = 1
            for k in range(m):
                u[k, j] = w[k, i] / norms[i]
        else:
            missing = True
    if not missing:
        return s_arr, u_arr, vt_arr

    cand_arr = np.empty(m)
    cdef double[::1] cand = cand_arr
    cdef int rep
    for j in range(n):
        if filled[j]:
            continue
        for e in range(m):
            for k in range(m):
                cand[k] = 0.0
            cand[e] = 1.0
            for rep in range(2):
                for b in range(n):
                    if not filled[b]:
                        continue
                    dot = 0.0
                    for k in range(m):
                        dot += u[k, b] * cand[k]
                    for k in range(m):
                        cand[k] -= dot * u[k, b]
            nrm = 0.0
            for k in range(m):
                nrm += cand[k] * cand[k]
            nrm = sqrt(nrm)
            if nrm > 1e-8:
                for k in range(m):
                    u[k, j] = cand[k] / nrm
                filled[j] = 1
                break
    return s_arr, u_arr, vt_arr
