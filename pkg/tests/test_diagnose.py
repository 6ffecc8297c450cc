import numpy as np
import pytest

from phturnpike import diagnose as dg
from phturnpike import manifold as mf
from phturnpike import transcribe as tr
from phturnpike.phsys import builtin_linear, output_batch
from phturnpike.solver import solve


def constant_trajectory(sys, x, T=2.0, N=20, u=0.0, theta=0.5):
    t = np.linspace(0.0, T, N + 1)
    X = np.tile(np.asarray(x, dtype=float), (N + 1, 1))
    U = np.full((N, sys.m), u)
    traj = tr.Trajectory(t, X, U, np.zeros((N, sys.m)), theta)
    traj.y = output_batch(sys, traj.points)
    return traj


@pytest.fixture(scope="module")
def fig1(ph1):
    ocp = tr.OCPSpec(ph1, [2, 1], [1, 1], 10.0, 100, -50.0, 50.0, theta=1.0)
    sol = solve(tr.transcribe(ocp), tr.initial_guess(ocp))
    assert sol.converged
    return ocp, sol, tr.decode(ocp, sol.w_star)


@pytest.fixture(scope="module")
def dm1(ph1):
    return mf.DissipationMap(ph1)


def test_energy_unforced(ph1):
    rep = dg.energy_balance(tr.simulate(ph1, [2, 1], 0.0, 10.0, 100), ph1)
    assert rep.supplied == 0.0
    assert rep.dissipated >= 0.0
    assert rep.delta_H <= 0.0
    assert rep.delta_H == pytest.approx(-rep.dissipated, abs=1e-10 * rep.scale)


def test_energy_at_rest_on_manifold(ph1):
    rep = dg.energy_balance(constant_trajectory(ph1, [0.0, 0.0]), ph1)
    assert rep.to_dict() == {"supplied": 0.0, "dissipated": 0.0, "delta_H": 0.0, "balance_residual": 0.0}


def test_energy_fig1(ph1, fig1):
    ocp, sol, traj = fig1
    rep = dg.energy_balance(traj, ph1)
    assert rep.supplied == pytest.approx(sol.cost, abs=1e-10)
    # x_T is met to eq_tol, and |grad H| is about 3 there
    assert rep.delta_H == pytest.approx(1.5 - 4.5, abs=1e-5)
    assert rep.supplied >= rep.delta_H


@pytest.mark.parametrize("theta", [0.5, 1.0])
def test_sample_times(ph1, theta):
    traj = constant_trajectory(ph1, [0.0, 1.0], T=1.0, N=4, theta=theta)
    np.testing.assert_allclose(dg.sample_times(traj), np.arange(4) * 0.25 + theta * 0.25)


def test_measure_on_manifold(ph1, dm1):
    rep = dg.turnpike_measure(constant_trajectory(ph1, [0.0, 1.0]), dm1, 0.1)
    assert rep.measure_outside == 0.0 and rep.fraction_outside == 0.0
    assert rep.entry_time == pytest.approx(0.05) and rep.exit_time == pytest.approx(1.95)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
def test_measure_constant_offset(ph1, dm1, eps):
    rep = dg.turnpike_measure(constant_trajectory(ph1, [2 * eps, 1.0], T=3.0, N=30), dm1, eps)
    assert rep.measure_outside == pytest.approx(3.0)
    assert rep.fraction_outside == pytest.approx(1.0)
    assert rep.entry_time is None and rep.exit_time is None
    assert rep.max_distance == pytest.approx(2 * eps, abs=1e-9)


def test_measure_nonincreasing_in_epsilon(fig1, dm1):
    _, _, traj = fig1
    d = dg.point_distances(traj, dm1)
    m = [dg.turnpike_measure(traj, dm1, eps, distances=d).measure_outside for eps in (0.05, 0.1, 0.2)]
    assert m[0] >= m[1] >= m[2]


def test_measure_fig1(fig1, dm1):
    _, _, traj = fig1
    rep = dg.turnpike_measure(traj, dm1, 0.1)
    assert 0.0 <= rep.measure_outside <= rep.T
    assert rep.fraction_outside == rep.measure_outside / rep.T
    assert rep.fraction_outside <= 0.2
    assert rep.nonconverged == 0


def test_nonconverged_samples_count_outside(ph1, dm1):
    traj = constant_trajectory(ph1, [0.0, 1.0], T=1.0, N=10)
    conv = np.ones(10, dtype=bool)
    conv[[2, 7]] = False
    rep = dg.turnpike_measure(traj, dm1, 0.1, distances=(np.zeros(10), conv))
    assert rep.measure_outside == pytest.approx(0.2)
    assert rep.nonconverged == 2


def test_measure_rejects_bad_epsilon(ph1, dm1):
    with pytest.raises(ValueError):
        dg.turnpike_measure(constant_trajectory(ph1, [0.0, 1.0]), dm1, 0.0)


def test_dissipativity_unforced(ph1, dm1):
    traj = tr.simulate(ph1, [2, 1], 0.0, 10.0, 200)
    cert = mf.certify(dm1, ([-3, -3], [3, 3]), 500, shell_width=3.0)
    rep = dg.dissipativity_check(traj, dm1, cert.c, 1e-9)
    assert rep.lhs <= 0.0
    assert rep.passed
    # holds even with the unit constant
    assert dg.dissipativity_check(traj, dm1, 1.0, 1e-9).passed


def test_dissipativity_on_manifold_reduces_to_energy(ph1, dm1):
    traj = constant_trajectory(ph1, [0.0, 1.0], u=0.5)
    rep = dg.dissipativity_check(traj, dm1, 0.5, 1e-12)
    energy = dg.energy_balance(traj, ph1)
    assert rep.rhs == energy.supplied
    assert rep.slack == energy.supplied - energy.delta_H


def test_dissipativity_fig1(fig1, dm1):
    _, sol, traj = fig1
    rep = dg.dissipativity_check(traj, dm1, 0.5, 1e-6)
    scale = dg.energy_balance(traj, dm1.system).scale
    assert rep.slack >= -1e-6 * scale
    assert rep.to_dict()["passed"]
    emp = dg.dissipativity_check(traj, dm1, 0.5, 1e-6, c_empirical=1.0)
    assert emp.slack_empirical <= emp.slack


def test_dissipativity_needs_positive_c(ph1, dm1):
    with pytest.raises(ValueError):
        dg.dissipativity_check(constant_trajectory(ph1, [0.0, 1.0]), dm1, 0.0, 1e-6)


def test_single_horizon_sweep(ph1, dm1):
    ocp = tr.OCPSpec(ph1, [2, 1], [1, 1], 3.0, 30, -50.0, 50.0, theta=1.0)
    sweep = dg.horizon_sweep(ocp, [3.0], 0.1)
    assert len(sweep.rows) == 1
    sol = solve(tr.transcribe(ocp), tr.initial_guess(ocp))
    direct = dg.turnpike_measure(tr.decode(ocp, sol.w_star), dm1, 0.1)
    assert sweep.rows[0].report == direct
    assert sweep.rows[0].N == 30 and sweep.all_converged


def test_sweep_keeps_step_fixed(ph1):
    ocp = tr.OCPSpec(ph1, [2, 1], [1, 1], 2.0, 20, -50.0, 50.0, theta=1.0)
    sweep = dg.horizon_sweep(ocp, [1.0, 2.0, 4.0], 0.1)
    assert [r.N for r in sweep.rows] == [10, 20, 40]
    assert [r.T for r in sweep.rows] == [1.0, 2.0, 4.0]


def test_sweep_rejects_empty(ph1):
    with pytest.raises(ValueError):
        dg.horizon_sweep(tr.OCPSpec(ph1, [2, 1], [1, 1], 1.0, 10, -1.0, 1.0), [], 0.1)


@pytest.mark.parametrize(
    "measures, bounded",
    [([0.4, 0.5, 0.6, 0.5], True), ([1.0, 2.0], True), ([1.0, 2.1], False), ([0.0, 0.5], True)],
)
def test_sweep_boundedness_rule(measures, bounded):
    rows = [
        dg.SweepRow(T, 1, "converged", 0.0, 0.0, dg.TurnpikeReport(0.1, T, m, m / T, 0.0, None, None))
        for T, m in zip((5.0, 10.0, 20.0, 40.0), measures)
    ]
    assert dg.SweepResult(rows).bounded is bounded


def _tilted_linear():
    # R^{1/2} Q = [[2, 1], [0, 0]] so M is the line 2 x_1 + x_2 = 0
    return builtin_linear([[0.0, 1.0], [-1.0, 0.0]], np.diag([1.0, 0.0]), [[2.0, 1.0], [1.0, 2.0]], [1.0, 0.0])


def test_linear_distance_closed_form(rng):
    dm = mf.DissipationMap(_tilted_linear())
    for x in rng.uniform(-3, 3, (100, 2)):
        assert mf.distance(dm, x) == pytest.approx(abs(2 * x[0] + x[1]) / np.sqrt(5.0), abs=1e-9)


def test_linear_sweep_bounded():
    # M is not invariant here, so the middle arc drifts along it at a distance
    # that shrinks like 1/T (about 0.12 at T = 5); horizons start where it is below 0.1
    sys = _tilted_linear()
    ocp = tr.OCPSpec(sys, [2.0, 1.0], [1.0, -1.0], 10.0, 100, -20.0, 20.0, theta=1.0)
    sweep = dg.horizon_sweep(ocp, [10.0, 20.0, 40.0], 0.1)
    assert sweep.all_converged
    assert sweep.bounded, sweep.measures
    assert sweep.passed
