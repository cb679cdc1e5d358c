import numpy as np
import pytest

from depcag_lab.diagonal import (DiagonalSystem, PerturbationMatrix, check_hinv,
                                 corollary_conditions, corollary_l1, corollary_run, e_l_closed,
                                 eigendirection, estimate_M, projector, ratio_weight)
from depcag_lab.errors import NotDelayed, ZeroDenominator
from depcag_lab.grid import Grid
from depcag_lab.linear import ExpDecay, Linear, ScalarFn

from conftest import w1_system


def unit(n=8):
    return Grid.uniform(0.0, 1.0, n)


def tv_system():
    return DiagonalSystem([Linear(-0.5, 0.1), ExpDecay(1.0, 0.5)], [0.3, Linear(0.2, -0.01)],
                          unit(8), k=2)


@pytest.mark.parametrize("make", [w1_system, tv_system])
def test_closed_form_matches_cauchy(make, rng):
    sys = make()
    op = sys.operator()
    T = sys.grid.horizon
    for _ in range(100):
        t, s = rng.uniform(0.0, T, 2)
        l = int(rng.integers(1, sys.n + 1))
        z = op(t, s)[l - 1, l - 1]
        assert abs(e_l_closed(sys, l, t, s) - z) <= 1e-9 * max(1.0, abs(z))


def test_closed_form_examples():
    sys = DiagonalSystem([0.0], [1.0], unit(20))
    for n in range(21):
        assert e_l_closed(sys, 1, float(n), 0.0) == pytest.approx(2.0 ** n, rel=1e-13)
    plain = DiagonalSystem([Linear(0.2, -0.1)], [0.0], unit(5))
    t, s = 3.7, 0.4
    expect = np.exp(0.2 * (t - s) - 0.05 * (t * t - s * s))
    assert e_l_closed(plain, 1, t, s) == pytest.approx(expect, rel=1e-13)


def test_closed_form_cocycle(rng):
    sys = tv_system()
    for u, s, t in rng.uniform(0.0, 8.0, size=(50, 3)):
        for l in (1, 2):
            lhs = e_l_closed(sys, l, t, s) * e_l_closed(sys, l, s, u)
            assert lhs == pytest.approx(e_l_closed(sys, l, t, u), rel=1e-9)
            assert e_l_closed(sys, l, t, s) * e_l_closed(sys, l, s, t) == pytest.approx(1.0, rel=1e-9)


def test_zero_denominator():
    sys = DiagonalSystem([0.0], [-1.0], unit(4))
    assert e_l_closed(sys, 1, 1.0, 0.5) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ZeroDenominator):
        e_l_closed(sys, 1, 0.5, 1.0)


def test_system_validation():
    with pytest.raises(NotDelayed):
        DiagonalSystem([0.0], [1.0], Grid.uniform(0.0, 1.0, 3, xi="midpoint"))
    with pytest.raises(ValueError):
        DiagonalSystem([0.0, 1.0], [1.0], unit())
    with pytest.raises(ValueError):
        DiagonalSystem([0.0], [1.0], unit(), k=2)


# ---------------------------------------------------------------- hinv
def test_hinv_examples():
    ok = check_hinv(DiagonalSystem([0.0, -1.0], [0.0, 0.0], unit()))
    assert ok.passed and ok.worst == 1.0
    bad = check_hinv(DiagonalSystem([0.0], [-1.0], unit()))
    assert not bad.passed and bad.worst == pytest.approx(0.0, abs=1e-15)
    assert "t=1" in bad.detail
    half = check_hinv(DiagonalSystem([0.0], [0.5], unit()))
    assert half.passed and half.worst == pytest.approx(1.0)
    assert max(r[3] for r in half.rows) == pytest.approx(1.0)


def test_profile_matches_closed_form():
    sys = tv_system()
    p = sys.profile(2)
    ts = np.array([0.0, 0.5, 3.0, 7.9])
    for t, v in zip(ts, p(ts)):
        assert v == pytest.approx(e_l_closed(sys, 2, float(t), 0.0), rel=1e-12)


# ----------------------------------------------------------- corollary
def test_corollary_pure_exponentials():
    sys = DiagonalSystem([-1.0, 0.0], [0.0, 0.0], unit(10), k=2)
    cond = corollary_conditions(sys)
    assert cond.passed and cond.C == pytest.approx(1.0)
    assert cond.h(4.0, 1.5) == pytest.approx(np.exp(-2.5), rel=1e-13)
    assert estimate_M(sys, sys.operator(), cond.h) == pytest.approx(1.01, rel=1e-9)


def test_corollary_node_halving():
    sys = DiagonalSystem([0.0, 0.0], [0.0, 1.0], unit(10), k=2)
    cond = corollary_conditions(sys)
    assert cond.passed
    for n in range(1, 10):
        assert cond.h(float(n), 0.0) == pytest.approx(2.0 ** -n, rel=1e-12)


def test_corollary_k1_negative_control():
    sys = DiagonalSystem([0.0, 1.0], [0.0, 0.0], unit(10), k=1)
    cond = corollary_conditions(sys)
    assert cond.a.passed and cond.a.detail.startswith("vacuous")
    assert not cond.b.passed


def test_corollary_a_fails_for_rising_ratio():
    sys = DiagonalSystem([0.5, 0.0], [0.0, 0.0], unit(10), k=2)
    assert not corollary_conditions(sys).a.passed


def test_ratio_weight_and_projector():
    sys = DiagonalSystem([-1.0, -0.5, 0.0], [0.0, 0.0, 0.0], unit(4), k=3)
    h = ratio_weight(sys)
    assert h(2.0, 0.0) == pytest.approx(np.exp(-1.0))
    np.testing.assert_array_equal(projector(sys), np.diag([1.0, 1.0, 0.0]))
    np.testing.assert_array_equal(eigendirection(sys).e_hat, [0, 0, 1])


def test_corollary_l1_examples():
    sys = w1_system()
    zero = corollary_l1(sys, PerturbationMatrix.zero(2))
    assert zero.passed and zero.extra["sum"] == 0.0
    rep = corollary_l1(sys, PerturbationMatrix.scaled_identity(2, ExpDecay(1.0, 1.0)))
    terms = np.array([r[1] for r in rep.rows])
    # e_2 is constant, so term n is e^{-n}(1 - e^{-1})
    np.testing.assert_allclose(terms, np.exp(-np.arange(16.0)) * (1 - np.exp(-1.0)), rtol=1e-10)
    np.testing.assert_allclose(terms[1:] / terms[:-1], np.exp(-1.0), rtol=1e-9)
    assert rep.passed
    const = corollary_l1(sys, PerturbationMatrix.scaled_identity(2, 1.0))
    assert not const.passed and const.worst == pytest.approx(1.0)


def test_perturbation_finite():
    g = unit(4)
    assert PerturbationMatrix.scaled_identity(2, 0.3).check_finite(g).passed
    blow = ScalarFn.wrap(lambda t: np.where(np.asarray(t) >= 2.0, np.inf, 1.0))
    assert not PerturbationMatrix.scaled_identity(1, blow).check_finite(g).passed


def test_corollary_run_zero_perturbation():
    sys = w1_system()
    res = corollary_run(sys, PerturbationMatrix.zero(2))
    assert res.n0 == 0 and res.state.iterations == 1
    times = res.state.trace.times
    ek = sys.profile(2)(times)
    np.testing.assert_allclose(res.state.y, np.outer(ek, [0.0, 1.0]), atol=1e-15)
    assert res.report.last_decile_max == 0.0 and res.passed


def test_corollary_run_w1(w1_run):
    res = w1_run
    assert res.n0 == 2
    assert res.theta_sup == pytest.approx(0.3, abs=0.01)
    assert res.residual < 1e-5
    assert res.direct_error < 1e-5
    assert res.closed_form_error < 1e-12
    assert res.report.bound_ok
    assert res.report.last_decile_max < 1e-3
    assert res.conditions.passed and res.extras["l1"].passed
    assert res.passed
