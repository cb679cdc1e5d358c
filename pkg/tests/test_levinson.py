import numpy as np
import pytest

from depcag_lab.diagonal import (CorollarySettings, DiagonalSystem, PerturbationMatrix,
                                 build_scenario, corollary_run, eigendirection, projector)
from depcag_lab.errors import DomainError, MaxIterExceeded, NoContraction, NotDelayed
from depcag_lab.grid import DeviatingArgument, Grid
from depcag_lab.levinson import (DichotomyData, EigenDirection, ExponentialWeight, GreenOperator,
                                 LevinsonScenario, LinearPerturbation, Perturbation,
                                 asymptotic_report, check_l1, check_lipschitz, check_projection,
                                 e_tilde, find_n0, fixed_point_solve, green_kernel,
                                 perturbed_residual, theta, theta_details, theta_profile,
                                 verify_dichotomy, verify_eigendirection, w_of)
from depcag_lab.linear import CoefficientEvaluator, ExpDecay

from conftest import W1_RHO, scalar_op, w1_perturbation, w1_system


def w1_scenario(R=None, **kw):
    sys = w1_system(**{k: v for k, v in kw.items() if k == "b"})
    settings = CorollarySettings(**{k: v for k, v in kw.items() if k != "b"})
    return build_scenario(sys, R or w1_perturbation(), settings)


@pytest.fixture(scope="module")
def w1():
    return w1_scenario()


# ------------------------------------------------------------------ e~
def test_e_tilde_pure_exponential():
    op = scalar_op(-0.7, 0.0, count=6)
    ed = EigenDirection([1.0], -0.7, 0.0)
    assert e_tilde(ed, op, 3.3, 0.4) == pytest.approx(np.exp(-0.7 * 2.9), rel=1e-13)
    assert e_tilde(ed, op, 2.0, 2.0) == 1.0


def test_e_tilde_scalar_growth():
    op = scalar_op(0.0, 1.0)
    ed = EigenDirection([1.0], 0.0, 1.0)
    assert e_tilde(ed, op, 2.0, 0.0) == pytest.approx(4.0, abs=1e-13)
    assert e_tilde(ed, op, 0.0, 2.0) == pytest.approx(0.25, abs=1e-13)


@pytest.mark.parametrize("a,b,xi", [(0.0, 1.0, "delayed"), (-0.4, 0.7, "delayed"),
                                    (0.3, -0.2, "midpoint")])
def test_e_tilde_equals_scalar_cauchy(a, b, xi, rng):
    op = scalar_op(a, b, count=8, step=0.75, xi=xi)
    ed = EigenDirection([1.0], a, b)
    for t, s in rng.uniform(0.0, 6.0, size=(60, 2)):
        z = op(t, s)[0, 0]
        assert abs(e_tilde(ed, op, t, s) - z) <= 1e-9 * max(1.0, abs(z))
    for n in range(7):
        assert e_tilde(ed, op, 0.75 * (n + 1), 0.75 * n) == pytest.approx(op.h_matrix(n)[0, 0])


def test_e_tilde_multiplicative(w1, rng):
    ed, op = w1.ed, w1.op
    for u, s, t in rng.uniform(0.0, 16.0, size=(50, 3)):
        lhs = e_tilde(ed, op, t, u) * e_tilde(ed, op, u, s)
        rhs = e_tilde(ed, op, t, s)
        assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(rhs))


def test_profile_matches_e_tilde(w1):
    ts = np.array([0.0, 0.3, 1.0, 4.5, 15.99, 16.0])
    prof = w1.profile(ts)
    for t, p in zip(ts, prof):
        assert p == pytest.approx(e_tilde(w1.ed, w1.op, float(t), 0.0), rel=1e-12)


def test_unit_vector_required():
    with pytest.raises(ValueError):
        EigenDirection([1.0, 1.0], 0.0, 0.0)


# ------------------------------------------------------ verification
def test_verify_eigendirection(w1):
    rep = verify_eigendirection(w1.ed, w1.op)
    assert rep.passed and rep.worst < 1e-10
    rot = EigenDirection(np.array([1.0, 1.0]) / np.sqrt(2), 0.0, 0.0)
    bad = verify_eigendirection(rot, w1.op)
    assert not bad.passed and bad.worst > 1e-3


def test_verify_eigendirection_no_delay_term():
    g = Grid.uniform(0.0, 1.0, 5)
    from depcag_lab.cauchy import CauchyOperator
    op = CauchyOperator(g, CoefficientEvaluator.diagonal([-0.3, 0.8]), CoefficientEvaluator.zeros(2))
    assert verify_eigendirection(EigenDirection([1.0, 0.0], -0.3, 0.0), op).passed


def test_check_projection(w1):
    assert check_projection(w1.dd, w1.ed).passed
    wrong = DichotomyData(np.diag([0.0, 1.0]), w1.dd.h, 1.0)
    assert not check_projection(wrong, w1.ed).passed
    not_proj = DichotomyData(np.diag([2.0, 0.0]), w1.dd.h, 1.0)
    assert not check_projection(not_proj, w1.ed).passed


def test_verify_dichotomy(w1):
    reps = verify_dichotomy(w1.dd, w1.ed, w1.op)
    assert [r.name for r in reps] == ["27a-nl", "27b-nl", "27c", "27d"]
    assert all(r.passed for r in reps)
    low = DichotomyData(w1.dd.P, w1.dd.h, 0.5 * w1.dd.M, 1.0)
    assert not all(r.passed for r in verify_dichotomy(low, w1.ed, w1.op))
    zero_P = DichotomyData(np.zeros((2, 2)), ExponentialWeight(5.0), w1.dd.M, 1.0)
    assert verify_dichotomy(zero_P, w1.ed, w1.op)[0].worst == 0.0


def test_check_lipschitz(w1):
    g = w1.grid
    assert check_lipschitz(w1.pert, g, n=2).passed
    R = w1.pert.R
    loose = Perturbation(lambda t, v: 2.0 * R(t) @ v, w1.pert.eta, w1.pert.g)
    assert not check_lipschitz(loose, g, n=2).passed
    shifted = Perturbation(lambda t, v: R(t) @ v + 1e-3, lambda t: 10.0, w1.pert.g)
    assert not check_lipschitz(shifted, g, n=2).passed


def test_check_l1(w1):
    rep = check_l1(w1, 2)
    assert rep.passed
    assert rep.extra["total"] == pytest.approx(W1_RHO * (np.exp(-2) - np.exp(-16)), rel=1e-9)
    const = w1_scenario(PerturbationMatrix.scaled_identity(2, 0.05))
    assert not check_l1(const).passed


# ------------------------------------------------------- Green kernel
def test_green_kernel_full_projection(w1):
    dd = DichotomyData(np.eye(2), w1.dd.h, 1.0)
    for t, s in [(3.5, 1.2), (4.0, 4.0), (5.7, 5.1)]:
        np.testing.assert_allclose(green_kernel(dd, w1.ed, w1.op, t, s), w1.op.zhat_kernel(t, s))
    assert np.all(green_kernel(dd, w1.ed, w1.op, 1.2, 3.5) == 0)


def test_green_kernel_diagonal_closed_form(w1):
    from depcag_lab.diagonal import e_l_closed
    # b_1 = 0: diag(e_1(t, s), 0) for every t >= s
    sys0 = w1_system(b=(0.0, 0.0))
    op0 = sys0.operator()
    P = projector(sys0)
    dd0 = DichotomyData(P, w1.dd.h, 1.0)
    for t, s in [(3.5, 1.2), (5.7, 5.1), (9.0, 2.0)]:
        G = green_kernel(dd0, eigendirection(sys0), op0, t, s)
        np.testing.assert_allclose(G, np.diag([e_l_closed(sys0, 1, t, s), 0.0]), atol=1e-13)
    # b_1 != 0: the identity survives for s on a node
    for t, s in [(3.5, 1.0), (9.25, 2.0)]:
        G = green_kernel(w1.dd, w1.ed, w1.op, t, s)
        np.testing.assert_allclose(G, np.diag([e_l_closed(w1_system(), 1, t, s), 0.0]), atol=1e-12)


def test_exact_kernel_coincides_when_unstable_block_is_plain(w1):
    for t, s in [(3.5, 3.2), (3.2, 3.5), (3.5, 1.2), (1.2, 3.5)]:
        np.testing.assert_allclose(green_kernel(w1.dd, w1.ed, w1.op, t, s),
                                   green_kernel(w1.dd, w1.ed, w1.op, t, s, exact=True), atol=1e-13)


# -------------------------------------------------------------- Theta
def test_theta_zero_perturbation():
    scn = w1_scenario(PerturbationMatrix.zero(2))
    assert theta(scn, 0, 3.0) == 0.0
    _, vals = theta_profile(scn, 0)
    assert np.all(vals == 0)
    assert find_n0(scn) == 0


def test_theta_support_left_of_window():
    from depcag_lab.linear import ScalarFn
    bump = ScalarFn.wrap(lambda t: np.where(np.asarray(t) < 2.0, 1.0, 0.0))
    scn = w1_scenario(PerturbationMatrix.scaled_identity(2, bump))
    assert theta(scn, 3, 5.0) == 0.0


def test_theta_riemann_oracle(w1):
    n0 = 2
    grid_pts = 4096
    a, b = 2.0, 16.0
    mids = a + (np.arange(grid_pts) + 0.5) * (b - a) / grid_pts
    oracle = w1.dd.M * np.sum(w1.rho(mids)) * (b - a) / grid_pts
    assert theta(w1, n0, a) == pytest.approx(oracle, abs=1e-6)
    _, vals = theta_profile(w1, n0)
    assert vals[0] == pytest.approx(oracle, abs=1e-6)


def test_theta_profile_matches_adaptive(w1):
    times, vals = theta_profile(w1, 1)
    for i in (0, 5, 64, 200, 640, times.size - 1):
        assert vals[i] == pytest.approx(theta(w1, 1, float(times[i])), rel=1e-8, abs=1e-12)


def test_theta_profile_several_profiles(rng):
    sys = DiagonalSystem([-1.0, -0.5, 0.0], [0.2, 0.0, 0.0], Grid.uniform(0.0, 1.0, 6), k=3)
    scn = build_scenario(sys, PerturbationMatrix.scaled_identity(3, ExpDecay(W1_RHO, 1.0)))
    times, vals = theta_profile(scn, 1)
    for i in (0, 33, 100, times.size - 1):
        assert vals[i] == pytest.approx(theta(scn, 1, float(times[i])), rel=1e-7)


def test_theta_details_split(w1):
    d = theta_details(w1, 2, 5.5)
    assert d.value == pytest.approx(d.forward + d.tail)
    assert 0 < d.last_panel < d.tail
    with pytest.raises(DomainError):
        theta(w1, 3, 2.0)


def test_find_n0_closed_form(w1):
    # rho(s) = 2.2 e^{-s} and h <= 1, so sup Theta_n0 = M 2.2 (e^{-n0} - e^{-16}) at t_n0
    closed = lambda n0: w1.dd.M * W1_RHO * (np.exp(-n0) - np.exp(-16.0))
    for n0 in range(4):
        _, vals = theta_profile(w1, n0)
        assert vals.max() == pytest.approx(closed(n0), rel=1e-9)
    assert find_n0(w1, 0.5) == 2
    assert find_n0(w1, 0.9) == 1
    tiny = w1_scenario(w1_perturbation(rho=1e-4))
    assert find_n0(tiny, 0.999) == 0
    # the window is finite, so only a perturbation heavy on the last interval fails
    with pytest.raises(NoContraction):
        find_n0(w1_scenario(PerturbationMatrix.scaled_identity(2, 1.0)), 0.5)
    with pytest.raises(ValueError):
        find_n0(w1, 1.5)


# -------------------------------------------------- fixed point operator
def test_zero_perturbation_converges_at_once():
    scn = w1_scenario(PerturbationMatrix.zero(2))
    state = fixed_point_solve(scn, 0)
    assert state.iterations == 1 and state.history == [0.0]
    np.testing.assert_allclose(state.y, state.operator.base, atol=0)
    assert np.all(w_of(state, scn.ed) == 0)
    rep = asymptotic_report(scn, state)
    assert rep.passed and rep.last_decile_max == 0.0


def test_max_iter(w1):
    with pytest.raises(MaxIterExceeded):
        fixed_point_solve(w1, 2, tol=1e-14, max_iter=3)


def test_needs_delayed_grid(w1):
    g = Grid.uniform(0.0, 1.0, 4, xi="midpoint")
    from depcag_lab.cauchy import CauchyOperator
    op = CauchyOperator(g, CoefficientEvaluator.diagonal([-1.0, 0.0]), CoefficientEvaluator.zeros(2))
    scn = LevinsonScenario(op, EigenDirection([0.0, 1.0], 0.0, 0.0), w1.dd,
                           LinearPerturbation(w1.pert.R, DeviatingArgument.piecewise_constant(g)))
    with pytest.raises(NotDelayed):
        GreenOperator(scn, 0)


def test_contraction_and_well_definedness(w1, rng):
    n0 = 2
    opN = GreenOperator(w1, n0)
    _, th = theta_profile(w1, n0, opN.sg)
    sup = float(th.max())
    for _ in range(5):
        y1 = (rng.normal(size=opN.base.shape) + 1j * rng.normal(size=opN.base.shape)) * opN.weight[:, None]
        y2 = (rng.normal(size=opN.base.shape) + 1j * rng.normal(size=opN.base.shape)) * opN.weight[:, None]
        assert opN.norm(opN(y1) - opN(y2)) <= 1.05 * sup * opN.norm(y1 - y2)
        assert opN.norm(opN(y1)) <= 1.0 + sup * opN.norm(y1) + 1e-12


def test_backends_give_same_fixed_point(w1):
    from depcag_lab import kernels
    a = fixed_point_solve(w1, 2, backend="python")
    if kernels.BACKEND == "cython":
        b = fixed_point_solve(w1, 2, backend="cython")
        np.testing.assert_allclose(a.y, b.y, atol=1e-12)
    assert a.iterations <= 25


def test_evaluate_matches_samples(w1_run):
    state = w1_run.state
    opN = state.operator
    nxt = opN(state.y)
    for i in (0, 7, 130, 500):
        np.testing.assert_allclose(opN.evaluate(state.y, float(opN.times[i])), nxt[i], atol=1e-10)


# ------------------------------------------------- kernel finding, b_2 != 0
def test_exact_kernel_needed_when_unstable_block_has_delay():
    """With b_2 != 0 the split kernel leaves a remainder in the (I - P) block
    on the interval of t; the exact kernel gives a true solution."""
    res = {}
    for exact in (False, True):
        scn = w1_scenario(b=(0.5, 0.3), exact_kernel=exact, samples_per_interval=32)
        n0 = find_n0(scn)
        state = fixed_point_solve(scn, n0)
        res[exact] = float(perturbed_residual(scn, state).max())
    assert res[True] < 1e-7
    assert res[False] > 1e-3
