"""Dissipation map ``f(x) = R(x)^{1/2} eta(x)``, its zero set M, and distance bounds."""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import qmc

from . import linalg
from .deriv import DifferentiableMap, jacobian
from .errors import DegeneratePointError, InconclusiveCertificateError

PROJECT_MAX_ITER = 200


@dataclass(frozen=True)
class DissipationMap:
    """The map f of a system; singular values below ``rank_tol * max(1, s_max)`` count as zero."""

    system: object
    rank_tol: float = 1e-8

    def __post_init__(self):
        if not self.rank_tol > 0:
            raise ValueError("rank_tol must be positive")

    @property
    def fmap(self):
        sys = self.system
        if sys.f is not None:
            ev = lambda x: np.asarray(sys.f(x), dtype=float)  # noqa: E731
        else:
            ev = lambda x: generic_f(sys, x)  # noqa: E731
        jac = None
        if sys.f_jac is not None:
            jac = lambda x: np.asarray(sys.f_jac(x), dtype=float)  # noqa: E731
        return DifferentiableMap(sys.n, sys.n, ev, jac)


def generic_f(sys, x):
    """``sqrt_psd(R(x)) @ eta(x)`` from the raw system callables."""
    x = np.asarray(x, dtype=float)
    return linalg.sqrt_psd(np.asarray(sys.R(x), dtype=float)) @ np.asarray(sys.eta(x), dtype=float)


def eval_f(dm, x):
    return dm.fmap(np.asarray(x, dtype=float))


def f_batch(dm, X):
    """Rows ``f(X[k])``; uses broadcasting for vectorized systems."""
    X = np.asarray(X, dtype=float)
    sys = dm.system
    if sys.f is not None and sys.vectorized:
        return np.asarray(sys.f(X), dtype=float)
    fm = dm.fmap
    return np.stack([fm(x) for x in X]) if len(X) else np.zeros((0, sys.n))


def _split(dm, D):
    s, u, vt = linalg.svd(D)
    thresh = dm.rank_tol * max(1.0, s[0] if s.size else 0.0)
    r = int(np.sum(s >= thresh))
    return s, u, vt, r


def kernel_dim(dm, x):
    """Number of singular values of ``Df_x`` below the rank threshold."""
    s, _, _, r = _split(dm, jacobian(dm.fmap, x))
    return dm.system.n - r


def sigma_min_nonzero(dm, x):
    """Smallest singular value of ``Df_x`` above the rank threshold."""
    s, _, _, r = _split(dm, jacobian(dm.fmap, x))
    if r == 0:
        raise DegeneratePointError(f"Df vanishes at {np.asarray(x).tolist()}")
    return float(s[r - 1])


def tangent_basis(dm, p):
    """Orthonormal rows spanning ``ker(Df_p)``."""
    _, _, vt, r = _split(dm, jacobian(dm.fmap, p))
    return vt[r:]


class Projection(NamedTuple):
    p: np.ndarray
    converged: bool
    iterations: int


def project(dm, x, max_iter=PROJECT_MAX_ITER):
    """Nearest point on M by damped Gauss-Newton with normal-space correction.

    Each iteration first moves ``p`` so that ``x - p`` lies in the normal
    space ``ran(Df_p^T)``, then takes a minimum-norm Gauss-Newton step toward
    ``f = 0``, halving it until ``|f|`` decreases.  Stops when
    ``|f(p)| <= 1e-9 max(1, |f(x)|)`` and the tangential part of ``x - p`` is
    below ``1e-7 max(1, |x - p|)``.
    """
    x = np.asarray(x, dtype=float)
    fm = dm.fmap
    fx = fm(x)
    f_tol = 1e-9 * max(1.0, float(np.linalg.norm(fx)))
    if not np.any(fx):
        return Projection(x.copy(), True, 0)
    p = x.copy()
    fp = fx
    for it in range(max_iter + 1):
        s, u, vt, r = _split(dm, jacobian(fm, p))
        d = x - p
        tang = vt[r:].T @ (vt[r:] @ d)
        tang_norm = float(np.linalg.norm(tang))
        fnorm = float(np.linalg.norm(fp))
        if fnorm <= f_tol and tang_norm <= 1e-7 * max(1.0, float(np.linalg.norm(d))):
            return Projection(p, True, it)
        if it == max_iter:
            break
        if tang_norm > 0.0:
            p = p + tang
            fp = fm(p)
            s, u, vt, r = _split(dm, jacobian(fm, p))
            fnorm = float(np.linalg.norm(fp))
        if r == 0 or fnorm == 0.0:
            continue
        step = -(vt[:r].T @ ((u[:, :r].T @ fp) / s[:r]))
        alpha = 1.0
        while alpha > 1e-12:
            trial = p + alpha * step
            ft = fm(trial)
            if np.linalg.norm(ft) < fnorm:
                p, fp = trial, ft
                break
            alpha *= 0.5
    return Projection(p, False, max_iter)


def distance(dm, x):
    """``dist(x, M)`` via :func:`project`; exactly 0 when ``f(x) = 0``."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - project(dm, x).p))


@dataclass
class ManifoldCertificate:
    """Sampled surrogate for the submanifold and distance-bound assumptions.

    ``c = sigma_min_nonzero_lower / 2``.  ``empirical_constant`` is the
    largest c for which ``c dist <= |f|`` held at every in-shell sample.
    """

    n: int
    s: int
    sigma_min_nonzero_lower: float
    c: float
    samples_checked: int
    bound_violations: list
    kernel_dim_mismatches: int
    nonconverged_projections: int
    empirical_constant: float
    shell_width: float
    points: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)
    f_norms: np.ndarray = field(repr=False)

    @property
    def passed(self):
        return (
            0 < self.s < self.n
            and self.sigma_min_nonzero_lower > 0.0
            and not self.bound_violations
            and self.kernel_dim_mismatches == 0
        )

    def violations_for(self, c):
        """In-shell sample points where ``c * dist > |f|``."""
        bad = c * self.distances > self.f_norms
        return [pt.tolist() for pt in self.points[bad]]

    def to_dict(self):
        return {
            "n": self.n,
            "s": self.s,
            "sigma_min_nonzero_lower": self.sigma_min_nonzero_lower,
            "c": self.c,
            "empirical_constant": self.empirical_constant,
            "samples_checked": self.samples_checked,
            "shell_width": self.shell_width,
            "kernel_dim_mismatches": self.kernel_dim_mismatches,
            "nonconverged_projections": self.nonconverged_projections,
            "bound_violations": self.bound_violations,
            "passed": self.passed,
        }


def sample_box(lo, hi, n_samples, seed=0):
    """Scrambled Halton points in the box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    pts = qmc.Halton(d=lo.size, scramble=True, seed=seed).random(n_samples)
    return qmc.scale(pts, lo, hi) if np.all(hi > lo) else lo + pts * (hi - lo)


def certify(dm, box, n_samples, shell_width=np.inf, seed=0):
    """Check kernel dimension, singular-value floor and the distance bound on samples.

    Parameters
    ----------
    box : pair of array_like
        Lower and upper corners of the sampling box.
    n_samples : int
        Number of quasi-random points drawn.
    shell_width : float
        Only points with ``dist(x, M) <= shell_width`` are kept; this stands in
        for the neighbourhoods on which the assumptions are required.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    n = dm.system.n
    fm = dm.fmap
    pts = sample_box(box[0], box[1], n_samples, seed)
    kept, dists, fnorms, kdims, sigmas = [], [], [], [], []
    nonconv = 0
    for x in pts:
        proj = project(dm, x)
        dist = float(np.linalg.norm(x - proj.p))
        if dist > shell_width:
            continue
        nonconv += not proj.converged
        s, _, _, r = _split(dm, jacobian(fm, x))
        kept.append(x)
        dists.append(dist)
        fnorms.append(float(np.linalg.norm(fm(x))))
        kdims.append(n - r)
        sigmas.append(float(s[r - 1]) if r > 0 else np.nan)
    if not kept:
        raise InconclusiveCertificateError(
            f"no sample within shell width {shell_width} of the manifold"
        )
    kdims = np.array(kdims)
    values, counts = np.unique(kdims, return_counts=True)
    s_mode = int(values[np.argmax(counts)])
    sig = np.array(sigmas)
    finite = sig[np.isfinite(sig)]
    c_tilde = float(finite.min()) if finite.size else 0.0
    dists = np.array(dists)
    fnorms = np.array(fnorms)
    pos = dists > 0.0
    emp = float(np.min(fnorms[pos] / dists[pos])) if np.any(pos) else np.inf
    cert = ManifoldCertificate(
        n=n,
        s=s_mode,
        sigma_min_nonzero_lower=c_tilde,
        c=c_tilde / 2.0,
        samples_checked=len(kept),
        bound_violations=[],
        kernel_dim_mismatches=int(np.sum(kdims != s_mode)),
        nonconverged_projections=int(nonconv),
        empirical_constant=emp,
        shell_width=float(shell_width),
        points=np.array(kept),
        distances=dists,
        f_norms=fnorms,
    )
    cert.bound_violations = cert.violations_for(cert.c)
    return cert
