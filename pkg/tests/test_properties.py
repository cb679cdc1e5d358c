import numpy as np
from hypothesis import given, settings, strategies as st

from depcag_lab.cauchy import CauchyOperator
from depcag_lab.diagonal import DiagonalSystem, e_l_closed
from depcag_lab.grid import Grid
from depcag_lab.levinson import EigenDirection, e_tilde
from depcag_lab.linear import CoefficientEvaluator
from depcag_lab.simulate import SolutionTrace

coef = st.floats(-1.5, 1.5, allow_nan=False)
pos_coef = st.floats(0.0, 1.5, allow_nan=False)
widths = st.lists(st.floats(0.2, 1.5), min_size=2, max_size=6)
unit_pts = st.floats(0.0, 1.0)

fast = settings(max_examples=40, deadline=None, derandomize=True)


def _grid(ws, xi="delayed"):
    return Grid.from_nodes(np.concatenate([[0.0], np.cumsum(ws)]), xi)


@fast
@given(a=coef, b=pos_coef, ws=widths, u=unit_pts, v=unit_pts,
       xi=st.sampled_from(["delayed", "midpoint"]))
def test_scalar_e_tilde_is_cauchy(a, b, ws, u, v, xi):
    g = _grid(ws, xi)
    op = CauchyOperator(g, CoefficientEvaluator.scalar(a), CoefficientEvaluator.scalar(b))
    t, s = u * g.horizon, v * g.horizon
    z = op(t, s)[0, 0]
    assert abs(e_tilde(EigenDirection([1.0], a, b), op, t, s) - z) <= 1e-9 * max(1.0, abs(z))


@fast
@given(a=coef, b=pos_coef, ws=widths, u=unit_pts, v=unit_pts, w=unit_pts)
def test_cocycle_and_inverse(a, b, ws, u, v, w):
    g = _grid(ws)
    A = CoefficientEvaluator.constant([[a, 0.3], [-0.2, 0.1]])
    B = CoefficientEvaluator.constant([[b, 0.0], [0.1, 0.5 * b]])
    op = CauchyOperator(g, A, B)
    t, s, r = u * g.horizon, v * g.horizon, w * g.horizon
    scale = max(1.0, np.linalg.norm(op(t, r)), np.linalg.norm(op(t, s)) * np.linalg.norm(op(s, r)))
    assert np.linalg.norm(op(t, s) @ op(s, r) - op(t, r)) <= 1e-8 * scale
    prod = op(t, s) @ op(s, t)
    assert np.linalg.norm(prod - np.eye(2)) <= 1e-8 * max(1.0, np.linalg.norm(op(t, s)) * np.linalg.norm(op(s, t)))


@fast
@given(a=st.lists(coef, min_size=2, max_size=3), b=st.lists(pos_coef, min_size=3, max_size=3),
       ws=widths, u=unit_pts, v=unit_pts)
def test_closed_form_is_diagonal_of_cauchy(a, b, ws, u, v):
    b = b[: len(a)]
    sys = DiagonalSystem(a, b, _grid(ws))
    op = sys.operator()
    t, s = u * sys.grid.horizon, v * sys.grid.horizon
    Z = op(t, s)
    assert np.allclose(np.diag(Z), Z.diagonal()) and np.count_nonzero(Z - np.diag(np.diag(Z))) == 0
    for l in range(1, len(a) + 1):
        z = Z[l - 1, l - 1]
        assert abs(e_l_closed(sys, l, t, s) - z) <= 1e-9 * max(1.0, abs(z))


@fast
@given(vals=st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False),
                     min_size=2, max_size=12))
def test_trace_csv_roundtrip(vals):
    n = len(vals) // 2
    values = np.array(vals[: 2 * n]).reshape(n, 2)
    tr = SolutionTrace(np.linspace(0.0, 1.0, n), values, np.zeros(n, dtype=int))
    back = SolutionTrace.from_csv(tr.to_csv())
    assert np.allclose(back.values, tr.values, rtol=1e-11, atol=1e-300)
    assert back.to_csv() == tr.to_csv()


@fast
@given(a=st.floats(-3.0, 3.0).filter(lambda x: x == 0 or abs(x) > 1e-300) | st.just(5e-324),
       b=coef, d=st.floats(0.0, 2.0))
def test_bracket_closed_form_continuous_in_rate(a, b, d):
    from depcag_lab.levinson import EigenDirection
    from depcag_lab.linear import ExpDecay
    ed = EigenDirection([1.0], a, b)
    got = ed.bracket_many(0.0, d)
    small = abs(a * d) < 1e-6
    ref = 1.0 + b * d * (1.0 - 0.5 * a * d) if small else 1.0 + b * (-np.expm1(-a * d) / a)
    assert abs(got - ref) <= 1e-12 * max(1.0, abs(ref))
    assert np.isfinite(ExpDecay(1.0, a).integral(0.0, d))
