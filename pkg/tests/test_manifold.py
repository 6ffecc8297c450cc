import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phturnpike import manifold as mf
from phturnpike.errors import DegeneratePointError, InconclusiveCertificateError
from phturnpike.phsys import PHSystem, builtin_linear, builtin_ph1, builtin_ph2


@pytest.fixture(scope="module")
def dm1():
    return mf.DissipationMap(builtin_ph1())


@pytest.fixture(scope="module")
def dm2():
    return mf.DissipationMap(builtin_ph2())


def _generic(sys):
    """Same system without the analytic f, so f = sqrt_psd(R) eta and FD Jacobians are used."""
    return PHSystem(sys.name, sys.n, sys.m, sys.E, sys.J, sys.R, sys.eta, sys.B, sys.H)


@pytest.mark.parametrize(
    "which, x, expected",
    [
        ("dm1", [1.0, 0.0], [5.0, 0.0]),
        ("dm1", [0.0, 7.0], [0.0, 0.0]),
        ("dm2", [1.0, 0.0, 5.0], [5.0, 0.0, 0.0]),
    ],
)
def test_eval_f_examples(request, which, x, expected):
    dm = request.getfixturevalue(which)
    np.testing.assert_allclose(mf.eval_f(dm, x), expected, atol=0)
    generic = mf.DissipationMap(_generic(dm.system))
    np.testing.assert_allclose(mf.eval_f(generic, x), expected, rtol=1e-12, atol=1e-14)


def test_kernel_dims(dm1, dm2, rng):
    for x in rng.uniform(-3, 3, (100, 2)):
        assert mf.kernel_dim(dm1, x) == 1
    for x in rng.uniform(-3, 3, (100, 3)):
        assert mf.kernel_dim(dm2, x) == 2


def test_kernel_dim_full_rank_linear():
    dm = mf.DissipationMap(builtin_linear(np.zeros((2, 2)), np.eye(2), np.eye(2), [1.0, 0.0]))
    assert mf.kernel_dim(dm, [0.3, 0.1]) == 0


@pytest.mark.parametrize("x, sigma", [([0.0, 0.0], 1.0), ([1.0, 0.0], 13.0), ([0.0, 1.0], 5.0)])
def test_sigma_min_nonzero(dm1, x, sigma):
    # the singular value itself, not its square (169 at (1, 0))
    assert mf.sigma_min_nonzero(dm1, x) == pytest.approx(sigma, rel=1e-14)


def test_sigma_min_degenerate():
    dm = mf.DissipationMap(builtin_linear([[0.0, 1.0], [-1.0, 0.0]], np.zeros((2, 2)), np.eye(2), [1.0, 0.0]))
    with pytest.raises(DegeneratePointError):
        mf.sigma_min_nonzero(dm, [1.0, 1.0])


@pytest.mark.parametrize(
    "which, x, p",
    [
        ("dm1", [0.3, -2.0], [0.0, -2.0]),
        ("dm2", [2.0, 1.0, 10.0], [0.0, 1.0, 10.0]),
        ("dm1", [0.0, 4.0], [0.0, 4.0]),
    ],
)
def test_project_examples(request, which, x, p):
    dm = request.getfixturevalue(which)
    proj = mf.project(dm, x)
    assert proj.converged
    np.testing.assert_allclose(proj.p, p, atol=1e-9)


def test_project_on_manifold_is_identity(dm1):
    proj = mf.project(dm1, [0.0, -1.25])
    assert proj.converged and proj.iterations == 0
    np.testing.assert_array_equal(proj.p, [0.0, -1.25])


@pytest.mark.parametrize("x, d", [([0.3, -2.0], 0.3), ([0.0, 5.0], 0.0), ([-1.5, 0.2], 1.5)])
def test_distance_examples(dm1, x, d):
    assert mf.distance(dm1, x) == pytest.approx(d, abs=1e-9)


@pytest.mark.parametrize("which", ["dm1", "dm2"])
def test_distance_matches_analytic(request, which, rng):
    dm = request.getfixturevalue(which)
    for x in rng.uniform(-3, 3, (300, dm.system.n)):
        assert abs(mf.distance(dm, x) - abs(x[0])) <= 1e-7


def test_distance_generic_path_matches(rng):
    dm = mf.DissipationMap(_generic(builtin_ph1()))
    for x in rng.uniform(-3, 3, (30, 2)):
        assert abs(mf.distance(dm, x) - abs(x[0])) <= 1e-7


def test_projection_idempotent(dm1, dm2, rng):
    for dm in (dm1, dm2):
        for x in rng.uniform(-3, 3, (50, dm.system.n)):
            p = mf.project(dm, x)
            assert p.converged
            q = mf.project(dm, p.p)
            np.testing.assert_allclose(q.p, p.p, atol=1e-8)


def test_zero_distance_iff_f_vanishes(dm1, rng):
    X = rng.uniform(-3, 3, (100, 2))
    X[::2, 0] = 0.0
    for x in X:
        on = np.linalg.norm(mf.eval_f(dm1, x)) <= 1e-12
        assert (mf.distance(dm1, x) <= 1e-12) == on


@pytest.mark.parametrize(
    "which, basis",
    [("dm1", [[0.0, 1.0]]), ("dm2", [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])],
)
def test_tangent_space_matches_analytic(request, which, basis, rng):
    dm = request.getfixturevalue(which)
    basis = np.array(basis)
    for x in rng.uniform(-3, 3, (20, dm.system.n)):
        x[0] = 0.0
        T = mf.tangent_basis(dm, x).T
        assert T.shape == (dm.system.n, len(basis))
        # principal angles between the subspaces
        cosines = np.linalg.svd(T.T @ basis.T, compute_uv=False)
        assert np.all(np.arccos(np.clip(cosines, -1, 1)) <= 1e-7)


def test_certify_ph1(dm1):
    cert = mf.certify(dm1, ([-3, -3], [3, 3]), 2000, shell_width=3.0)
    assert cert.passed
    assert cert.s == 1 and cert.n == 2
    assert cert.sigma_min_nonzero_lower >= 1.0 - 1e-9
    assert cert.c == cert.sigma_min_nonzero_lower / 2
    assert cert.bound_violations == [] and cert.violations_for(1.0) == []
    assert cert.empirical_constant >= 1.0
    assert cert.nonconverged_projections == 0


def test_certify_ph2(dm2):
    cert = mf.certify(dm2, ([-3] * 3, [3] * 3), 1000)
    assert cert.passed and cert.s == 2
    assert cert.violations_for(1.0) == []


def test_certify_linear_constant_sigma():
    R = np.diag([4.0, 0.0, 0.0])
    Q = np.diag([1.0, 2.0, 3.0])
    J = np.array([[0, 1, 0], [-1, 0, 1], [0, -1, 0]], dtype=float)
    sys = builtin_linear(J, R, Q, [1.0, 0.0, 0.0])
    cert = mf.certify(mf.DissipationMap(sys), ([-1] * 3, [1] * 3), 200)
    K = np.sqrt(R) @ Q
    sv = np.linalg.svd(K, compute_uv=False)
    assert cert.sigma_min_nonzero_lower == pytest.approx(sv[sv > 1e-12].min(), rel=1e-12)
    assert cert.s == 2 and cert.passed


def test_certify_conservative_system_fails():
    sys = builtin_linear([[0.0, 1.0], [-1.0, 0.0]], np.zeros((2, 2)), np.eye(2), [1.0, 0.0])
    cert = mf.certify(mf.DissipationMap(sys), ([-1, -1], [1, 1]), 50)
    assert cert.s == 2 and not cert.passed


def test_certify_empty_shell(dm1):
    with pytest.raises(InconclusiveCertificateError):
        mf.certify(dm1, ([1, -1], [2, 1]), 50, shell_width=0.5)


def test_certify_deterministic(dm1):
    a = mf.certify(dm1, ([-3, -3], [3, 3]), 300, seed=7)
    b = mf.certify(dm1, ([-3, -3], [3, 3]), 300, seed=7)
    assert a.to_dict() == b.to_dict()
    np.testing.assert_array_equal(a.points, b.points)


def test_sample_box_bounds():
    pts = mf.sample_box([-1, 2], [1, 5], 64, seed=3)
    assert pts.shape == (64, 2)
    assert np.all(pts >= [-1, 2]) and np.all(pts <= [1, 5])


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_distance_bounded_by_f_norm(x1, x2):
    dm = mf.DissipationMap(builtin_ph1())
    x = np.array([x1, x2])
    assert mf.distance(dm, x) <= np.linalg.norm(mf.eval_f(dm, x)) + 1e-12
