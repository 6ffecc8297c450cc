"""Acceptance criteria 1-10, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line (also collected in
the terminal summary).  The fig1 and fig2 runs go through the command
line entry point with the shipped configs.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from phturnpike import artifacts, config, deriv, diagnose, manifold, transcribe
from phturnpike.cli import EXIT_OK, main
from phturnpike.phsys import hamiltonian_map
from phturnpike.solver import SolverOptions, solve
from phturnpike.transcribe import NLPProblem

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _cli_solve(name, out):
    start = time.perf_counter()
    code = main(["solve", "--config", str(CONFIGS / name), "--out", str(out)])
    elapsed = time.perf_counter() - start
    summary_bytes = (out / "summary.json").read_bytes()
    return code, elapsed, summary_bytes


@pytest.fixture(scope="module")
def fig1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig1")
    code, elapsed, first = _cli_solve("fig1.json", out)
    _, _, second = _cli_solve("fig1.json", out)
    cfg, sys, ocp = config.load(CONFIGS / "fig1.json")
    traj = artifacts.read_trajectory(out / "trajectory.csv", sys.n, sys.m, cfg.theta)
    return {
        "code": code, "elapsed": elapsed, "summary": json.loads(first),
        "first": first, "second": second, "sys": sys, "ocp": ocp, "traj": traj,
    }


@pytest.fixture(scope="module")
def fig2_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig2")
    code, elapsed, raw = _cli_solve("fig2.json", out)
    cfg, sys, ocp = config.load(CONFIGS / "fig2.json")
    traj = artifacts.read_trajectory(out / "trajectory.csv", sys.n, sys.m, cfg.theta)
    return {"code": code, "elapsed": elapsed, "summary": json.loads(raw), "sys": sys, "ocp": ocp, "traj": traj}


def test_criterion_1_fig1(fig1_run, criterion):
    s = fig1_run["summary"]
    dm = manifold.DissipationMap(fig1_run["sys"])
    fine = diagnose.turnpike_measure(fig1_run["traj"], dm, 0.02)
    checks = {
        "exit 0": fig1_run["code"] == EXIT_OK,
        "converged": s["status"] == "converged",
        "eq_violation <= 1e-6": s["eq_violation"] <= 1e-6,
        "terminal state to 1e-6": s["terminal_error"] <= 1e-6,
        "fraction(0.1) <= 0.2": s["turnpike"]["fraction_outside"] <= 0.2,
        "fraction(0.02) <= 0.4": fine.fraction_outside <= 0.4,
        "runtime <= 60 s": fig1_run["elapsed"] <= 60.0,
    }
    criterion(1, checks, (
        f"pH-1 fig1: status={s['status']} |G|={s['eq_violation']:.2e} "
        f"terminal={s['terminal_error']:.2e} frac(0.1)={s['turnpike']['fraction_outside']:.3f} "
        f"frac(0.02)={fine.fraction_outside:.3f} time={fig1_run['elapsed']:.1f}s"
    ))


def _algebraic_residual(run):
    sys, ocp, traj = run["sys"], run["ocp"], run["traj"]
    P = traj.points
    G = transcribe.residuals(sys, ocp.h, traj.x[:-1], traj.x[1:], traj.u, ocp.theta)
    rows = np.all(sys.E(P) == 0.0, axis=2)
    return float(np.max(np.abs(G[rows]), initial=0.0)), int(rows.sum())


def test_criterion_2_fig2(fig2_run, criterion):
    s = fig2_run["summary"]
    alg, n_alg = _algebraic_residual(fig2_run)
    checks = {
        "exit 0": fig2_run["code"] == EXIT_OK,
        "converged": s["status"] == "converged",
        "eq_violation <= 1e-6": s["eq_violation"] <= 1e-6,
        "terminal state to 1e-6": s["terminal_error"] <= 1e-6,
        "fraction(0.1) <= 0.2": s["turnpike"]["fraction_outside"] <= 0.2,
        "algebraic rows <= 1e-6": alg <= 1e-6,
    }
    criterion(2, checks, (
        f"pH-2 fig2: status={s['status']} cost={s['cost']:.6g} |G|={s['eq_violation']:.2e} "
        f"frac(0.1)={s['turnpike']['fraction_outside']:.3f} algebraic({n_alg} rows)={alg:.1e} "
        f"time={fig2_run['elapsed']:.1f}s"
    ))


def test_criterion_3_cost_bound(fig1_run, criterion):
    sys, ocp = fig1_run["sys"], fig1_run["ocp"]
    bound = sys.H(ocp.xT) - sys.H(ocp.x0)
    cost = fig1_run["summary"]["cost"]
    checks = {"H(xT) - H(x0) == -3": bound == -3.0, "cost >= -3 - 1e-6": cost >= bound - 1e-6}
    criterion(3, checks, f"cost={cost:.6f} >= H(xT)-H(x0)={bound:.1f}")


def test_criterion_4_energy_balance(ph1, criterion):
    T = 10.0
    checks, parts = {}, []
    for u in (0.0, 1.0):
        res = []
        for N in (100, 200, 400):
            rep = diagnose.energy_balance(transcribe.simulate(ph1, [2.0, 1.0], u, T, N), ph1)
            h = T / N
            checks[f"u={u:g} N={N} residual <= 10 h^2 scale"] = rep.balance_residual <= 10 * h**2 * rep.scale
            res.append(rep.balance_residual)
        ratios = [a / b if b > 0 else np.inf for a, b in zip(res, res[1:])]
        for k, r in enumerate(ratios):
            checks[f"u={u:g} ratio {k + 1} in 4 +- 0.5"] = 3.5 <= r <= 4.5
        parts.append(f"u={u:g}: residuals " + ", ".join(f"{r:.1e}" for r in res) + " ratios " + ", ".join(f"{r:.2f}" for r in ratios))
    criterion(4, checks, "; ".join(parts))


def test_criterion_5_certification(ph1, ph2, criterion):
    checks, parts = {}, []
    for sys, s in ((ph1, 1), (ph2, 2)):
        dm = manifold.DissipationMap(sys)
        n = sys.n
        cert = manifold.certify(dm, (np.full(n, -3.0), np.full(n, 3.0)), 10_000, seed=0)
        tag = sys.name
        checks[f"{tag} all 10^4 samples"] = cert.samples_checked == 10_000
        checks[f"{tag} s={s} everywhere"] = cert.s == s and cert.kernel_dim_mismatches == 0
        checks[f"{tag} c_tilde >= 1 - 1e-9"] = cert.sigma_min_nonzero_lower >= 1.0 - 1e-9
        checks[f"{tag} no violations at c_tilde/2"] = not cert.bound_violations
        checks[f"{tag} no violations at c=1"] = not cert.violations_for(1.0)
        parts.append(
            f"{tag}: s={cert.s} c_tilde={cert.sigma_min_nonzero_lower:.6f} "
            f"violations={len(cert.bound_violations)}/{len(cert.violations_for(1.0))}"
        )
    criterion(5, checks, "; ".join(parts))


def test_criterion_6_distance_oracle(ph1, ph2, criterion):
    rng = np.random.default_rng(6)
    checks, parts = {}, []
    for sys in (ph1, ph2):
        dm = manifold.DissipationMap(sys)
        X = rng.uniform(-3, 3, (1000, sys.n))
        err = max(abs(manifold.distance(dm, x) - abs(x[0])) for x in X)
        checks[f"{sys.name} max error <= 1e-7"] = err <= 1e-7
        parts.append(f"{sys.name}: max |dist - |x_1|| = {err:.1e}")
    criterion(6, checks, "; ".join(parts))


def test_criterion_7_dissipativity(fig1_run, fig2_run, criterion):
    checks, parts = {}, []
    for tag, run in (("pH-1", fig1_run), ("pH-2", fig2_run)):
        s = run["summary"]
        d = s["dissipativity"]
        checks[f"{tag} solution converged"] = s["status"] == "converged"
        checks[f"{tag} slack >= -1e-4"] = d is not None and d["slack"] >= -1e-4
        slack = "n/a" if d is None else f"{d['slack']:.4g} (c={d['c_used']:.4g})"
        parts.append(f"{tag}: status={s['status']} slack={slack}")
    criterion(7, checks, "; ".join(parts))


def test_criterion_8_horizon_sweep(criterion):
    cfg, _, ocp = config.load(CONFIGS / "fig1.json")
    assert ocp.h == pytest.approx(0.1)
    sweep = diagnose.horizon_sweep(ocp, [5.0, 10.0, 20.0, 40.0], 0.1)
    m = sweep.measures
    checks = {"all converged": sweep.all_converged, "max <= 1.5 min + 0.5": m.max() <= 1.5 * m.min() + 0.5}
    criterion(8, checks, "measure_outside for T=5,10,20,40: " + ", ".join(f"{v:.2f}" for v in m))


def test_criterion_9_derivatives(ph1, ph2, criterion):
    rng = np.random.default_rng(9)
    checks, parts = {}, []
    for sys in (ph1, ph2):
        maps = {"f": manifold.DissipationMap(sys).fmap, "grad H": hamiltonian_map(sys)}
        for name, fmap in maps.items():
            worst = 0.0
            for x in rng.uniform(-3, 3, (100, sys.n)):
                a = deriv.jacobian(fmap, x)
                f = deriv.fd_jacobian(fmap, x)
                worst = max(worst, np.linalg.norm(a - f) / max(1.0, np.linalg.norm(a)))
            checks[f"{sys.name} {name}"] = worst <= 1e-6
            parts.append(f"{sys.name} {name}: {worst:.1e}")
    criterion(9, checks, "max relative FD mismatch " + ", ".join(parts))


def _random_qp(rng):
    n = int(rng.integers(2, 21))
    m = int(rng.integers(1, n))
    g = rng.standard_normal((n, n))
    Q = g @ g.T + np.eye(n)
    q, A, b = rng.standard_normal(n), rng.standard_normal((m, n)), rng.standard_normal(m)
    K = np.block([[Q, A.T], [A, np.zeros((m, m))]])
    w_ref = np.linalg.solve(K, np.concatenate([-q, b]))[:n]
    box = np.full(n, np.abs(w_ref).max() + 10.0)
    nlp = NLPProblem(
        dim=n,
        cost=lambda w: 0.5 * w @ Q @ w + q @ w,
        cost_gradient=lambda w: Q @ w + q,
        constraints=lambda w: A @ w - b,
        constraint_jacobian=lambda w: sp.csr_matrix(A),
        w_lb=-box,
        w_ub=box,
        lagrangian_hessian=lambda w, mu: sp.csr_matrix(Q),
    )
    return nlp, w_ref


def test_criterion_10_solver_oracle(fig1_run, criterion):
    rng = np.random.default_rng(10)
    errors = []
    for _ in range(10):
        nlp, w_ref = _random_qp(rng)
        sol = solve(nlp, np.zeros(nlp.dim), SolverOptions(eq_tol=1e-8, stat_tol=1e-8))
        errors.append(np.max(np.abs(sol.w_star - w_ref)) if sol.converged else np.inf)
    checks = {
        "10 QPs within 1e-6 of KKT": max(errors) <= 1e-6,
        "repeated fig1 summary.json bitwise identical": fig1_run["first"] == fig1_run["second"],
    }
    criterion(10, checks, f"max QP error={max(errors):.1e}; summary.json identical={fig1_run['first'] == fig1_run['second']}")
