"""Post-solve checks on trajectories: energy balance, manifold dissipativity, turnpike measure.

All time integrals use the quadrature of the transcription: one sample per
interval at the scheme's evaluation point, weighted by the interval length.
"""
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import manifold
from .phsys import hamiltonian_batch, output_batch
from .solver import SolverOptions, solve
from .transcribe import OCPSpec, decode, initial_guess, transcribe


@dataclass
class EnergyReport:
    supplied: float
    dissipated: float
    delta_H: float
    balance_residual: float

    @property
    def scale(self):
        return 1.0 + abs(self.supplied) + self.dissipated

    def to_dict(self):
        return asdict(self)


@dataclass
class TurnpikeReport:
    """Grid estimate of the time spent farther than ``epsilon`` from M.

    ``entry_time`` and ``exit_time`` are the first and last sample times with
    ``dist <= epsilon`` (None if there is none).
    """

    epsilon: float
    T: float
    measure_outside: float
    fraction_outside: float
    max_distance: float
    entry_time: Optional[float]
    exit_time: Optional[float]
    nonconverged: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class DissipativityReport:
    """``lhs = H(x_T) - H(x_0)``, ``rhs = int y^T u - c^2 dist^2``, ``slack = rhs - lhs``.

    The empirical fields repeat the check with the largest constant observed
    during certification, when one is supplied.
    """

    lhs: float
    rhs: float
    slack: float
    c_used: float
    tol: float
    c_empirical: Optional[float] = None
    slack_empirical: Optional[float] = None

    @property
    def passed(self):
        return self.slack >= -self.tol

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _weights(traj):
    return np.diff(np.asarray(traj.t, dtype=float))


def sample_times(traj):
    """Times of the interval evaluation points."""
    t = np.asarray(traj.t, dtype=float)
    return t[:-1] + traj.theta * np.diff(t)


def energy_balance(traj, sys):
    """Supplied, dissipated and stored energy of ``traj`` with the balance residual.

    Examples
    --------
    >>> from phturnpike.phsys import builtin_ph1
    >>> from phturnpike.transcribe import simulate
    >>> rep = energy_balance(simulate(builtin_ph1(), [2.0, 1.0], 0.0, 10.0, 100), builtin_ph1())
    >>> rep.supplied
    0.0
    """
    h = _weights(traj)
    P = traj.points
    Y = output_batch(sys, P)
    supplied = float(np.sum(h * np.sum(Y * traj.u, axis=1)))
    F = manifold.f_batch(manifold.DissipationMap(sys), P)
    dissipated = float(np.sum(h * np.sum(F * F, axis=1)))
    H = hamiltonian_batch(sys, traj.x[[0, -1]])
    delta_H = float(H[1] - H[0])
    return EnergyReport(supplied, dissipated, delta_H, abs(supplied - (delta_H + dissipated)))


def _distances(dm, X):
    out = np.empty(len(X))
    conv = np.ones(len(X), dtype=bool)
    for k, x in enumerate(X):
        proj = manifold.project(dm, x)
        out[k] = np.linalg.norm(x - proj.p)
        conv[k] = proj.converged
    return out, conv


def point_distances(traj, dm):
    """``dist(., M)`` at the interval evaluation points and a convergence mask."""
    return _distances(dm, traj.points)


def turnpike_measure(traj, dm, epsilon, distances=None):
    """Estimate the measure of ``{t : dist(x(t), M) > epsilon}``.

    Each interval contributes its length when the distance at its evaluation
    point exceeds ``epsilon``.  Samples whose projection did not converge
    are counted as outside and reported in ``nonconverged``.

    Parameters
    ----------
    distances : tuple of ndarray, optional
        Precomputed ``(dist, converged)`` from :func:`point_distances`.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    d, conv = distances if distances is not None else point_distances(traj, dm)
    h = _weights(traj)
    outside = (d > epsilon) | ~conv
    measure = float(np.sum(h[outside]))
    inside = np.flatnonzero(~outside)
    ts = sample_times(traj)
    T = traj.T
    return TurnpikeReport(
        epsilon=float(epsilon),
        T=T,
        measure_outside=measure,
        fraction_outside=measure / T,
        max_distance=float(np.max(d, initial=0.0)),
        entry_time=float(ts[inside[0]]) if inside.size else None,
        exit_time=float(ts[inside[-1]]) if inside.size else None,
        nonconverged=int(np.sum(~conv)),
    )


def dissipativity_check(traj, dm, c, tol, c_empirical=None, distances=None):
    """Check ``H(x_T) - H(x_0) <= int y^T u - c^2 dist(x, M)^2 dt`` along ``traj``."""
    if not c > 0:
        raise ValueError("c must be positive")
    sys = dm.system
    d, _ = distances if distances is not None else point_distances(traj, dm)
    h = _weights(traj)
    Y = output_batch(sys, traj.points)
    supplied = float(np.sum(h * np.sum(Y * traj.u, axis=1)))
    H = hamiltonian_batch(sys, traj.x[[0, -1]])
    lhs = float(H[1] - H[0])
    alpha = float(np.sum(h * d**2))
    rhs = supplied - c**2 * alpha
    rep = DissipativityReport(lhs=lhs, rhs=rhs, slack=rhs - lhs, c_used=float(c), tol=float(tol))
    if c_empirical is not None and np.isfinite(c_empirical):
        rep.c_empirical = float(c_empirical)
        rep.slack_empirical = supplied - c_empirical**2 * alpha - lhs
    return rep


@dataclass
class SweepRow:
    T: float
    N: int
    status: str
    cost: float
    eq_violation: float
    report: TurnpikeReport

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("T", "N", "status", "cost", "eq_violation")}
        d.update({k: v for k, v in self.report.to_dict().items() if k != "T"})
        return d


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    @property
    def measures(self):
        return np.array([r.report.measure_outside for r in self.rows])

    @property
    def all_converged(self):
        return all(r.status == "converged" for r in self.rows)

    @property
    def bounded(self):
        """``max <= 1.5 min + 0.5`` over the measures outside."""
        m = self.measures
        return bool(m.size) and float(m.max()) <= 1.5 * float(m.min()) + 0.5

    @property
    def passed(self):
        return self.all_converged and self.bounded

    def to_dict(self):
        return {
            "rows": [r.to_dict() for r in self.rows],
            "all_converged": self.all_converged,
            "bounded": self.bounded,
            "passed": self.passed,
        }


def horizon_sweep(ocp_template, horizons, epsilon, opts=None, dm=None):
    """Solve the template at each horizon with its step ``h`` kept fixed.

    ``N`` is ``round(T / h)`` for each ``T``.  Rows come back in the order of
    ``horizons``; a non-converged solve is kept and flags the sweep.
    """
    horizons = [float(T) for T in horizons]
    if not horizons:
        raise ValueError("horizons must be nonempty")
    h = ocp_template.h
    dm = dm or manifold.DissipationMap(ocp_template.system)
    result = SweepResult()
    for T in horizons:
        N = max(1, int(round(T / h)))
        ocp = OCPSpec(
            ocp_template.system, ocp_template.x0, ocp_template.xT, T, N,
            ocp_template.u_lb, ocp_template.u_ub, ocp_template.x_lb, ocp_template.x_ub,
            ocp_template.theta,
        )
        sol = solve(transcribe(ocp), initial_guess(ocp), opts or SolverOptions())
        rep = turnpike_measure(decode(ocp, sol.w_star), dm, epsilon)
        result.rows.append(SweepRow(T, N, sol.status, sol.cost, sol.eq_violation, rep))
    return result
