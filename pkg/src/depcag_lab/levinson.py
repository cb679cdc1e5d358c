"""Levinson-type asymptotics for perturbed linear DEPCAGs.

A solution of y' = A y + B y(gamma(t)) + F(t, y(g(t))) is sought as the fixed
point of

    (N y)(t) = e~(t, t_n0) e_hat + int_{t_n0}^{T} G(t, s) F(s, y(g(s))) ds

on the weighted space with norm sup |e~(t, t_n0)|^{-1} |y(t)|, where the
Green kernel G splits the Cauchy kernel with a projection P.  The upper
limit T is the grid horizon.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import kernels
from ._pykernels import sweeps
from .cauchy import CauchyOperator
from .errors import (DomainError, MaxIterExceeded, NoContraction, NotDelayed,
                     ZeroDenominator)
from .grid import DeviatingArgument
from .linear import CoefficientEvaluator, Constant, ScalarFn, _vector_integral, phi1
from .quadrature import gauss_legendre, quad
from .reports import ConditionReport
from .simulate import SolutionTrace

BRACKET_FLOOR = 1e-14
EIGEN_TOL = 1e-7
SAMPLES_PER_INTERVAL = 64
QUAD_POINTS = 4
SAMPLE_PAIRS = 200
L1_DECAY = 1e-2
W_FLOOR = 1e-12


# --------------------------------------------------------------------------
# eigendirection data
# --------------------------------------------------------------------------
class EigenDirection:
    """Unit vector e_hat with Z(t, s) e_hat = e~(t, s) e_hat.

    ``lam`` and ``lam_d`` are the scalar rates entering e~; for a diagonal
    system and e_hat = e_k they are a_k and b_k.
    """

    def __init__(self, e_hat, lam, lam_d):
        e_hat = np.asarray(e_hat, dtype=complex).ravel()
        norm = np.linalg.norm(e_hat)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"e_hat must be a unit vector (|e_hat| = {norm})")
        self.e_hat = e_hat
        self.lam = ScalarFn.wrap(lam)
        self.lam_d = ScalarFn.wrap(lam_d)
        self._bracket = lru_cache(maxsize=1 << 16)(self._bracket_uncached)

    @property
    def n(self) -> int:
        return self.e_hat.size

    def _bracket_uncached(self, xi: float, x: float) -> complex:
        if x == xi or self.lam_d.is_zero:
            return 1.0 + 0.0j
        lam, lam_d = self.lam, self.lam_d
        if isinstance(lam, Constant) and isinstance(lam_d, Constant):
            return complex(self.bracket_many(xi, x))

        def integrand(us):
            return np.exp(-_vector_integral(lam, xi, us)) * lam_d(us)

        return complex(1.0 + quad(integrand, xi, x, vectorized=True))

    def bracket(self, xi: float, x: float) -> complex:
        """1 + int_xi^x exp(-int_xi^u lam) lam_d(u) du"""
        val = self._bracket(float(xi), float(x))
        if abs(val) < BRACKET_FLOOR:
            raise ZeroDenominator(f"bracket vanishes on [{xi}, {x}]")
        return val

    def bracket_many(self, xi, x) -> np.ndarray:
        xi, x = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(x, dtype=float))
        if isinstance(self.lam, Constant) and isinstance(self.lam_d, Constant):
            a, b = self.lam.value, self.lam_d.value
            d = x - xi
            val = 1.0 + b * d * phi1(-a * d) + 0j
        else:
            val = np.array([self._bracket(float(p), float(q))
                            for p, q in zip(xi.ravel(), x.ravel())]).reshape(x.shape)
        if np.any(np.abs(val) < BRACKET_FLOOR):
            raise ZeroDenominator("bracket vanishes")
        return val


def _grid_split(grid, t, s):
    kt, ks = grid.locate_closed(t), grid.locate_closed(s)
    if kt > ks and t == grid.node(kt):
        kt -= 1
    return kt, ks


def e_tilde(ed: EigenDirection, op: CauchyOperator, t: float, s: float) -> complex:
    """Scalar multiplier of e_hat under Z(t, s).

    exp(int_s^t lam) times the bracket ratio on the partial interval at t,
    the node ratios for the intervals strictly between k_s and k_t, and the
    bracket ratio on the partial interval at s.  Within a single interval the
    two partial ratios merge into bracket(t) / bracket(s).
    """
    if t == s:
        return 1.0 + 0.0j
    if t < s:
        return 1.0 / e_tilde(ed, op, s, t)
    g = op.grid
    kt, ks = _grid_split(g, t, s)
    lead = np.exp(ed.lam.integral(s, t))
    if kt == ks:
        xi = float(g.xi[kt])
        return complex(lead * ed.bracket(xi, t) / ed.bracket(xi, s))
    xt, xs = float(g.xi[kt]), float(g.xi[ks])
    val = lead * ed.bracket(xt, t) / ed.bracket(xt, g.node(kt))
    for j in range(ks + 1, kt):
        xj = float(g.xi[j])
        val *= ed.bracket(xj, g.node(j + 1)) / ed.bracket(xj, g.node(j))
    val *= ed.bracket(xs, g.node(ks + 1)) / ed.bracket(xs, s)
    return complex(val)


class ETildeProfile:
    """E(t) = e~(t, t_0) on a grid, so that e~(t, s) = E(t) / E(s)."""

    def __init__(self, ed: EigenDirection, op: CauchyOperator):
        self.ed = ed
        self.op = op
        g = op.grid
        node_prod = [1.0 + 0.0j]
        for j in range(g.n_intervals):
            xj = float(g.xi[j])
            node_prod.append(node_prod[-1] * ed.bracket(xj, g.node(j + 1))
                             / ed.bracket(xj, g.node(j)))
        self.node_prod = np.array(node_prod)

    def __call__(self, ts) -> np.ndarray:
        g = self.op.grid
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        ks = g.locate_many(ts)
        lead = np.exp(_vector_integral(self.ed.lam, g.t0, ts))
        xk = g.xi[ks]
        ratio = self.ed.bracket_many(xk, ts) / self.ed.bracket_many(xk, g.nodes[ks])
        return lead * self.node_prod[ks] * ratio


# --------------------------------------------------------------------------
# dichotomy data
# --------------------------------------------------------------------------
class RatioWeight:
    """h(t, s) = max_l p_l(t) / p_l(s) for positive profiles p_l.

    Weights of this form satisfy h(t, s) = h(t, T) h(T, s) for a single
    profile and are evaluated in vectorised form by the Theta routines.
    """

    def __init__(self, profiles: Sequence[Callable], name: str = "ratio"):
        self.profiles = list(profiles)
        self.name = name

    def __call__(self, t, s):
        if not self.profiles:
            return 0.0 * np.asarray(t, dtype=float)
        vals = [np.abs(p(t)) / np.abs(p(s)) for p in self.profiles]
        return np.max(vals, axis=0)

    def profile_values(self, ts) -> np.ndarray:
        """(L, len(ts)) array of |p_l(ts)|."""
        return np.array([np.abs(np.asarray(p(ts))) for p in self.profiles]).reshape(
            len(self.profiles), -1)


class ExponentialWeight(RatioWeight):
    def __init__(self, rate: float):
        self.rate = float(rate)
        super().__init__([lambda t: np.exp(-self.rate * np.asarray(t, dtype=float))],
                         f"exp({rate})")


@dataclass
class DichotomyData:
    P: np.ndarray
    h: Callable
    M: float
    h_sup: float | None = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=complex)
        if self.M <= 0:
            raise ValueError("M must be positive")

    @property
    def Q(self) -> np.ndarray:
        return np.eye(self.P.shape[0]) - self.P

    @classmethod
    def coordinate(cls, n: int, indices, h, M, h_sup=None) -> "DichotomyData":
        """P = diagonal projector onto the listed (0-based) coordinates."""
        P = np.zeros((n, n))
        for i in indices:
            P[i, i] = 1.0
        return cls(P, h, M, h_sup)


# --------------------------------------------------------------------------
# perturbations
# --------------------------------------------------------------------------
class Perturbation:
    """F(t, v) with Lipschitz modulus eta(t), read through g."""

    def __init__(self, F: Callable, eta: Callable, g: DeviatingArgument,
                 batch: Callable | None = None, eta_batch: Callable | None = None):
        self.F = F
        self.eta = eta
        self.g = g
        self._batch = batch
        self._eta_batch = eta_batch

    def batch(self, ts: np.ndarray, Y: np.ndarray) -> np.ndarray:
        if self._batch is not None:
            return self._batch(ts, Y)
        return np.array([self.F(float(t), y) for t, y in zip(ts, Y)], dtype=complex)

    def eta_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self._eta_batch is not None:
            return np.asarray(self._eta_batch(ts), dtype=float)
        return np.array([float(self.eta(float(t))) for t in ts.ravel()]).reshape(ts.shape)


class LinearPerturbation(Perturbation):
    """F(t, v) = R(t) v with eta(t) = ||R(t)||_2."""

    def __init__(self, R: CoefficientEvaluator, g: DeviatingArgument):
        self.R = R
        super().__init__(
            F=lambda t, v: R(t) @ np.asarray(v, dtype=complex),
            eta=lambda t: float(np.linalg.norm(R(t), 2)),
            g=g,
            batch=lambda ts, Y: np.einsum("tab,tb->ta", R.batch(ts), Y),
            eta_batch=self._eta_vec,
        )

    def _eta_vec(self, ts):
        mats = self.R.batch(np.ravel(ts))
        if self.R.kind == "diagonal":
            vals = np.max(np.abs(np.diagonal(mats, axis1=1, axis2=2)), axis=1)
        else:
            vals = np.linalg.norm(mats, ord=2, axis=(1, 2))
        return vals.reshape(np.shape(ts))


@dataclass
class LevinsonScenario:
    op: CauchyOperator
    ed: EigenDirection
    dd: DichotomyData
    pert: Perturbation
    samples_per_interval: int = SAMPLES_PER_INTERVAL
    quad_points: int = QUAD_POINTS
    exact_kernel: bool = False
    _profile: ETildeProfile | None = field(default=None, repr=False)

    @property
    def grid(self):
        return self.op.grid

    @property
    def profile(self) -> ETildeProfile:
        if self._profile is None:
            self._profile = ETildeProfile(self.ed, self.op)
        return self._profile

    def rho(self, ss) -> np.ndarray:
        """|e~(s, g(s))|^{-1} eta(s)."""
        ss = np.atleast_1d(np.asarray(ss, dtype=float))
        gs = np.array([float(self.pert.g(float(s))) for s in ss])
        ratio = np.abs(self.profile(ss) / self.profile(gs))
        return self.pert.eta_many(ss) / ratio


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------
def _pairs(grid, count, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(grid.t0, grid.horizon, size=(count, 2))


def verify_eigendirection(ed: EigenDirection, op: CauchyOperator,
                          sample_pairs: int = SAMPLE_PAIRS, seed: int = 42,
                          tol: float = EIGEN_TOL) -> ConditionReport:
    """max |Z(t, s) e_hat - e~(t, s) e_hat| / max(1, |e~|) over random pairs."""
    worst = 0.0
    rows = []
    for t, s in _pairs(op.grid, sample_pairs, seed):
        et = e_tilde(ed, op, t, s)
        err = np.linalg.norm(op.cauchy_z(t, s) @ ed.e_hat - et * ed.e_hat) / max(1.0, abs(et))
        rows.append((t, s, err))
        worst = max(worst, err)
    passed = worst <= tol
    return ConditionReport("25a", passed, worst,
                           f"max relative eigen-residual over {sample_pairs} pairs (tol {tol:g})",
                           rows)


def check_projection(dd: DichotomyData, ed: EigenDirection, tol: float = 1e-10) -> ConditionReport:
    P = dd.P
    idem = float(np.max(np.abs(P @ P - P)))
    inrange = float(np.linalg.norm(dd.Q @ ed.e_hat - ed.e_hat))
    worst = max(idem, inrange)
    return ConditionReport("26a", worst <= tol, worst,
                           f"|P^2-P|={idem:.3g}, |(I-P)e-e|={inrange:.3g}")


def green_kernel(dd: DichotomyData, ed: EigenDirection, op: CauchyOperator,
                 t: float, s: float, exact: bool = False) -> np.ndarray:
    """G(t, s) = Zhat(t, s) P for t >= s and -Zhat(t, s)(I - P) for t < s.

    ``exact=True`` returns Zhat(t, s)[s <= t] - W(t, s)(I - P) with W the
    node-routed kernel.  The two agree except when s lies in the interval of
    t before t, where the split form leaves a non-homogeneous remainder in
    the unstable block.
    """
    if not exact:
        if t >= s:
            return op.zhat_kernel(t, s) @ dd.P
        return -op.zhat_kernel(t, s) @ dd.Q
    g = op.grid
    w = op.node_routed(t, s)
    kt, ks = _grid_split(g, t, s) if t >= s else (g.locate_closed(t), g.locate_closed(s))
    if t >= s and kt == ks:
        return op.gamma_kernel(t, s, ks) - w @ dd.Q
    if t >= s:
        return w @ dd.P
    if kt == ks:
        return op.gamma_kernel(t, s, ks) - w @ dd.Q
    return -w @ dd.Q


def verify_dichotomy(dd: DichotomyData, ed: EigenDirection, op: CauchyOperator,
                     sample_pairs: int = SAMPLE_PAIRS, seed: int = 42,
                     slack: float = 1e-9) -> list[ConditionReport]:
    """Sampled checks of the forward bound, backward bound, decay and
    submultiplicativity of h.  Returns one report per condition."""
    g = op.grid
    rng = np.random.default_rng(seed)
    pts = rng.uniform(g.t0, g.horizon, size=(sample_pairs, 2))
    fwd, bwd = [], []
    for a, b in pts:
        t, s = max(a, b), min(a, b)
        et = abs(e_tilde(ed, op, t, s))
        lhs = np.linalg.norm(op.zhat_kernel(t, s) @ dd.P, 2)
        rhs = dd.M * et * float(dd.h(t, s))
        fwd.append(_ratio(lhs, rhs))
        et_b = abs(e_tilde(ed, op, s, t))
        lhs_b = np.linalg.norm(op.zhat_kernel(s, t) @ dd.Q, 2)
        bwd.append(_ratio(lhs_b, dd.M * et_b))
    worst_f, worst_b = max(fwd), max(bwd)
    reports = [
        ConditionReport("27a-nl", worst_f <= 1 + slack, worst_f,
                        "max ||Zhat P|| / (M |e~| h) over t >= s"),
        ConditionReport("27b-nl", worst_b <= 1 + slack, worst_b,
                        "max ||Zhat (I-P)|| / (M |e~|) over t <= s"),
    ]
    # decay of h along increasing t for fixed s
    worst_rise = 0.0
    ends = []
    for s in np.sort(rng.uniform(g.t0, g.horizon, size=10)):
        ts = np.linspace(s, g.horizon, 25)
        hv = np.array([float(dd.h(t, s)) for t in ts])
        rise = np.max(np.diff(hv) / np.maximum(hv[:-1], 1e-300)) if hv.size > 1 else 0.0
        worst_rise = max(worst_rise, float(rise))
        ends.append(float(hv[-1]))
    reports.append(ConditionReport(
        "27c", worst_rise <= slack, worst_rise,
        f"largest relative rise of h(., s); h(T, s) ranges up to {max(ends):.3g}"))
    worst_sub = 0.0
    h_max = 0.0
    for tri in rng.uniform(g.t0, g.horizon, size=(sample_pairs, 3)):
        s, T, t = np.sort(tri)
        hts = float(dd.h(t, s))
        h_max = max(h_max, hts, float(dd.h(t, T)), float(dd.h(T, s)))
        worst_sub = max(worst_sub, _ratio(hts, float(dd.h(t, T)) * float(dd.h(T, s))))
    h_sup = dd.h_sup if dd.h_sup is not None else h_max
    bounded = h_max <= h_sup * (1 + slack)
    reports.append(ConditionReport(
        "27d", worst_sub <= 1 + slack and bounded, worst_sub,
        f"max h(t,s)/(h(t,T)h(T,s)); sampled sup h = {h_max:.6g} (bound {h_sup:.6g})"))
    return reports


def sampled_M(ed: EigenDirection, op: CauchyOperator, P, h, sample_pairs: int = SAMPLE_PAIRS,
              seed: int = 42, slack: float = 0.01) -> float:
    """Smallest M meeting both sampled dichotomy bounds, times 1 + slack."""
    P = np.asarray(P, dtype=complex)
    Q = np.eye(P.shape[0]) - P
    g = op.grid
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x, y in rng.uniform(g.t0, g.horizon, size=(sample_pairs, 2)):
        t, s = max(x, y), min(x, y)
        lhs = np.linalg.norm(op.zhat_kernel(t, s) @ P, 2)
        if lhs > 0:
            worst = max(worst, _ratio(lhs, abs(e_tilde(ed, op, t, s)) * float(h(t, s))))
        lhs = np.linalg.norm(op.zhat_kernel(s, t) @ Q, 2)
        if lhs > 0:
            worst = max(worst, _ratio(lhs, abs(e_tilde(ed, op, s, t))))
    return max(worst, 1e-12) * (1.0 + slack)


def _ratio(lhs, rhs):
    if lhs <= 1e-300:
        return 0.0
    if rhs <= 0.0:
        return np.inf
    return float(lhs / rhs)


def check_lipschitz(pert: Perturbation, grid, samples: int = SAMPLE_PAIRS, n: int = 1,
                    seed: int = 42, slack: float = 1e-9) -> ConditionReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    zero = 0.0
    for t in rng.uniform(grid.t0, grid.horizon, size=samples):
        a = rng.normal(size=n) + 1j * rng.normal(size=n)
        b = rng.normal(size=n) + 1j * rng.normal(size=n)
        lhs = np.linalg.norm(np.asarray(pert.F(t, a)) - np.asarray(pert.F(t, b)))
        worst = max(worst, _ratio(lhs, float(pert.eta(t)) * np.linalg.norm(a - b)))
        zero = max(zero, float(np.linalg.norm(pert.F(t, np.zeros(n, dtype=complex)))))
    passed = worst <= 1 + slack and zero <= 1e-14
    return ConditionReport("nl-lpchzt", passed, worst,
                           f"max |F(t,a)-F(t,b)|/(eta|a-b|); max |F(t,0)| = {zero:.3g}")


def check_l1(scn: LevinsonScenario, n0: int = 0, decay: float = L1_DECAY) -> ConditionReport:
    """Per-interval mass of |e~(s, g(s))|^{-1} eta(s); the series is taken as
    convergent when the last interval carries at most ``decay`` times the
    largest one."""
    g = scn.grid
    masses = []
    for n in range(n0, g.n_intervals):
        masses.append(float(quad(scn.rho, g.node(n), g.node(n + 1), 1e-12, vectorized=True).real))
    masses = np.array(masses)
    total = float(masses.sum())
    peak = float(masses.max()) if masses.size else 0.0
    last = float(masses[-1]) if masses.size else 0.0
    ratio = last / peak if peak > 0 else 0.0
    rows = list(zip(range(n0, g.n_intervals), masses))
    return ConditionReport("nl-l1", ratio <= decay, ratio,
                           f"window mass {total:.6g}; last/peak interval mass {ratio:.3g}",
                           rows, {"total": total, "last": last})


# --------------------------------------------------------------------------
# Theta
# --------------------------------------------------------------------------
@dataclass
class ThetaValue:
    value: float
    forward: float
    tail: float
    last_panel: float


def theta_details(scn: LevinsonScenario, n0: int, t: float,
                  tail_to: float | None = None) -> ThetaValue:
    g = scn.grid
    tail_to = g.horizon if tail_to is None else tail_to
    start = g.node(n0)
    if t < start:
        raise DomainError("t must not precede t_n0")
    if tail_to > g.horizon:
        raise DomainError("tail_to beyond the horizon")
    nodes = list(g.nodes)
    M, h = scn.dd.M, scn.dd.h

    def fwd(ss):
        return np.asarray(h(t, ss), dtype=float) * scn.rho(ss)

    forward = float(quad(fwd, start, t, 1e-12, breakpoints=nodes, vectorized=True)) if t > start else 0.0
    tail = float(quad(scn.rho, t, tail_to, 1e-12, breakpoints=nodes, vectorized=True)) if tail_to > t else 0.0
    k_last = g.locate_closed(tail_to)
    lo = max(g.node(k_last), t)
    last = float(quad(scn.rho, lo, tail_to, 1e-12, vectorized=True)) if tail_to > lo else 0.0
    return ThetaValue(M * (forward + tail), M * forward, M * tail, M * last)


def theta(scn: LevinsonScenario, n0: int, t: float, tail_to: float | None = None) -> float:
    """M int_{t_n0}^t h(t,s) rho(s) ds + M int_t^{tail_to} rho(s) ds."""
    return theta_details(scn, n0, t, tail_to).value


class SampleGrid:
    """Panel edges and Gauss-Legendre nodes on [t_n0, horizon]."""

    def __init__(self, grid, n0: int, m: int, q: int):
        self.n0, self.m, self.q = n0, m, q
        nodes = grid.nodes[n0:]
        self.L = nodes.size - 1
        if self.L < 1:
            raise DomainError("n0 leaves no interval inside the window")
        frac = np.arange(m + 1) / m
        self.a = nodes[:-1]
        self.b = nodes[1:]
        width = self.b - self.a
        self.tau = self.a[:, None] + width[:, None] * frac[None, :]
        self.tau[:, m] = self.b
        x, w = gauss_legendre(q)
        dt = np.diff(self.tau, axis=1)
        self.sigma = self.tau[:, :-1, None] + dt[:, :, None] * x[None, None, :]
        self.weights = dt[:, :, None] * w[None, None, :]
        self.flat = np.concatenate([self.tau[:, :m].ravel(), [self.tau[-1, m]]])

    def to_flat(self, arr):
        """(L, m+1, ...) -> (L*m+1, ...) sharing node samples."""
        L, m = self.L, self.m
        return np.concatenate([arr[:, :m].reshape((L * m,) + arr.shape[2:]), arr[-1:, m]])


def theta_profile(scn: LevinsonScenario, n0: int, sg: SampleGrid | None = None) -> tuple:
    """Theta_n0 at every sample time, with integrals on the sample-grid
    quadrature.  Returns (times, values)."""
    sg = sg or SampleGrid(scn.grid, n0, scn.samples_per_interval, scn.quad_points)
    sig = sg.sigma.ravel()
    w = sg.weights.ravel()
    rho = scn.rho(sig)
    wr = (w * rho).reshape(sg.L, sg.m, sg.q).sum(axis=2).ravel()
    # tail part: int_t^T rho, on panel edges
    cum = np.concatenate([[0.0], np.cumsum(wr)])
    tail = cum[-1] - cum
    h = scn.dd.h
    wr_sig = (w * rho).reshape(sg.L * sg.m, sg.q)
    if isinstance(h, RatioWeight) and len(h.profiles) == 1:
        # single profile: h(t, s) = p(t) / p(s) factorises, so a prefix sum suffices
        p_sig = h.profile_values(sig)[0].reshape(sg.L * sg.m, sg.q)
        part = (wr_sig / p_sig).sum(axis=1)
        forward = h.profile_values(sg.flat)[0] * np.concatenate([[0.0], np.cumsum(part)])
    else:
        forward = np.zeros_like(tail)
        panel_of = np.repeat(np.arange(sg.L * sg.m), sg.q)
        wr_flat = wr_sig.ravel()
        for i, t in enumerate(sg.flat):
            sel = panel_of < i
            if np.any(sel):
                hv = np.asarray(h(np.full(int(sel.sum()), t), sig[sel]), dtype=float)
                forward[i] = np.sum(hv * wr_flat[sel])
    return sg.flat, scn.dd.M * (forward + tail)


def find_n0(scn: LevinsonScenario, contraction_target: float = 0.5) -> int:
    """Smallest n0 whose sampled sup of Theta_n0 is at most the target."""
    if not 0 < contraction_target < 1:
        raise ValueError("contraction_target must lie in (0, 1)")
    g = scn.grid
    best = np.inf
    for n0 in range(g.n_intervals):
        _, vals = theta_profile(scn, n0)
        sup = float(np.max(vals))
        best = min(best, sup)
        if sup <= contraction_target:
            return n0
    raise NoContraction(
        f"no n0 reaches Theta <= {contraction_target} (best {best:.6g})")


# --------------------------------------------------------------------------
# the fixed-point operator
# --------------------------------------------------------------------------
class GreenOperator:
    """Discretised N on the sample grid of [t_n0, horizon].

    Iterates are stored at panel edges (64 per interval by default) and read
    between samples by piecewise-linear interpolation.  The s-integral uses
    Gauss-Legendre panels between consecutive samples, so the jump of G at
    s = t always falls on a panel edge.
    """

    def __init__(self, scn: LevinsonScenario, n0: int, backend: str | None = None):
        op = scn.op
        if not op.grid.is_delayed:
            raise NotDelayed("the Levinson operator needs a delayed grid")
        self.scn, self.n0, self.backend = scn, n0, backend
        g = op.grid
        sg = SampleGrid(g, n0, scn.samples_per_interval, scn.quad_points)
        self.sg = sg
        L, m, N = sg.L, sg.m, op.n
        self.N = N
        self.times = sg.flat
        prof = scn.profile
        e_flat = prof(self.times)
        self.e_ref = prof(np.array([g.node(n0)]))[0]
        self.weight = e_flat / self.e_ref  # e~(t, t_n0)
        self.base = self.weight[:, None] * scn.ed.e_hat[None, :]
        self.Zf = np.empty((L, m + 1, N, N), dtype=complex)
        self.Zb = np.empty_like(self.Zf)
        self.Xb = np.empty_like(self.Zf)
        self.Xr = np.empty((L, m, sg.q, N, N), dtype=complex)
        for k in range(L):
            n = n0 + k
            a, b = g.node(n), g.node(n + 1)
            for i, t in enumerate(sg.tau[k]):
                t = float(t)
                self.Zf[k, i] = op._within(n, t, a)
                self.Zb[k, i] = op._within(n, t, b)
            self.Xb[k] = op.fm.batch_t(sg.tau[k], b)
            self.Xr[k] = op.fm.batch_s(b, sg.sigma[k])
        self.H = np.array([op.H[n0 + k] for k in range(L)])
        self.Hinv = np.linalg.inv(self.H)
        self.P = scn.dd.P
        self.Q = scn.dd.Q
        sig = sg.sigma.ravel()
        self._pos, self._frac = self._interp_index(sig, sg)

    def _interp_index(self, sig, sg):
        g_vals = np.array([float(self.scn.pert.g(float(s))) for s in sig])
        owner = np.repeat(np.arange(sg.L), sg.m * sg.q)
        lo, hi = sg.a[owner], sg.b[owner]
        if np.any(g_vals < lo) or np.any(g_vals >= hi + 1e-14):
            raise DomainError("deviating argument leaves its interval")
        T = self.times
        pos = np.clip(np.searchsorted(T, g_vals, side="right") - 1, 0, T.size - 2)
        frac = (g_vals - T[pos]) / (T[pos + 1] - T[pos])
        return pos, frac

    def _interp(self, y, pos, frac):
        return (1.0 - frac)[:, None] * y[pos] + frac[:, None] * y[pos + 1]

    def _forcing(self, y):
        sg = self.sg
        sig = sg.sigma.ravel()
        v = self.scn.pert.batch(sig, self._interp(y, self._pos, self._frac))
        return v.reshape(sg.L, sg.m, sg.q, self.N)

    def integral(self, y) -> np.ndarray:
        v = self._forcing(y)
        muP = kernels.panel_moments(self.Xr, self.sg.weights, v @ self.P.T, backend=self.backend)
        muQ = kernels.panel_moments(self.Xr, self.sg.weights, v @ self.Q.T, backend=self.backend)
        out = kernels.green_assemble(muP, muQ, self.H, self.Hinv, self.Zf, self.Zb, self.Xb,
                                     self.scn.exact_kernel, backend=self.backend)
        return self.sg.to_flat(out)

    def apply(self, y) -> np.ndarray:
        return self.base + self.integral(np.asarray(y, dtype=complex))

    __call__ = apply

    def norm(self, y) -> float:
        return float(np.max(np.linalg.norm(y, axis=1) / np.abs(self.weight)))

    def evaluate(self, y, t: float) -> np.ndarray:
        """(N y)(t) at an arbitrary t in the window, using the same panels up
        to the sample before t and a fresh Gauss-Legendre rule after it."""
        op, sg = self.scn.op, self.sg
        g = op.grid
        y = np.asarray(y, dtype=complex)
        v = self._forcing(y)
        muP = kernels.panel_moments(self.Xr, sg.weights, v @ self.P.T, backend="python")
        muQ = kernels.panel_moments(self.Xr, sg.weights, v @ self.Q.T, backend="python")
        cumP, cumQ, S, T = sweeps(muP, muQ, self.H, self.Hinv)
        n = g.locate_closed(t)
        k = n - self.n0
        if k < 0:
            raise DomainError("t precedes t_n0")
        a, b = g.node(n), g.node(n + 1)
        i = min(int((t - a) / (b - a) * sg.m), sg.m - 1)
        t0 = float(sg.tau[k, i])
        x, w = gauss_legendre(sg.q)
        ss = t0 + (t - t0) * x
        ww = (t - t0) * w
        pos, frac = self._interp_index_any(ss)
        vv = self.scn.pert.batch(ss, self._interp(y, pos, frac))
        Xr = op.fm.batch_s(b, ss)
        partP = np.einsum("p,pab,pb->a", ww, Xr, vv @ self.P.T)
        partQ = np.einsum("p,pab,pb->a", ww, Xr, vv @ self.Q.T)
        cP = cumP[k, i] + partP
        cQ = cumQ[k, i] + partQ
        totQ = cumQ[k, sg.m]
        Zf = op._within(n, t, a)
        Zb = op._within(n, t, b)
        Xb = op.fm(t, b)
        out = Zf @ S[k]
        if self.scn.exact_kernel:
            out = out + Xb @ (cP + cQ) - Zb @ (T[k] + totQ)
        else:
            out = out + Xb @ cP - Zb @ (T[k] + totQ - cQ)
        et = self.scn.profile(np.array([t]))[0] / self.e_ref
        return et * self.scn.ed.e_hat + out

    def _interp_index_any(self, ss):
        g_vals = np.array([float(self.scn.pert.g(float(s))) for s in ss])
        T = self.times
        pos = np.clip(np.searchsorted(T, g_vals, side="right") - 1, 0, T.size - 2)
        frac = (g_vals - T[pos]) / (T[pos + 1] - T[pos])
        return pos, frac


@dataclass
class FixedPointState:
    n0: int
    trace: SolutionTrace
    history: list
    operator: GreenOperator
    iterations: int

    def __iter__(self):
        return iter((self.trace, self.history))

    @property
    def y(self) -> np.ndarray:
        return self.trace.values

    def weighted_norm(self) -> float:
        return self.operator.norm(self.y)


def fixed_point_solve(scn: LevinsonScenario, n0: int, tol: float = 1e-9,
                      max_iter: int = 100, backend: str | None = None) -> FixedPointState:
    """Iterate y <- N y from y_0 = e~(t, t_n0) e_hat until the weighted
    step norm drops below ``tol``."""
    opN = GreenOperator(scn, n0, backend=backend)
    y = opN.base.copy()
    history = []
    for it in range(1, max_iter + 1):
        y_new = opN.apply(y)
        diff = opN.norm(y_new - y)
        history.append(diff)
        y = y_new
        if diff <= tol:
            trace = SolutionTrace(opN.times, y, scn.grid.locate_many(opN.times))
            return FixedPointState(n0, trace, history, opN, it)
    raise MaxIterExceeded(f"no convergence in {max_iter} iterations (last step {history[-1]:.3e})")


# --------------------------------------------------------------------------
# asymptotics
# --------------------------------------------------------------------------
@dataclass
class AsymptoticReport:
    times: np.ndarray
    abs_w: np.ndarray
    theta: np.ndarray
    y_norm: float
    bound_ok: bool
    worst_bound_ratio: float
    first_decile_max: float
    last_decile_max: float
    decay_ok: bool

    @property
    def bound(self) -> np.ndarray:
        return self.theta * self.y_norm

    @property
    def passed(self) -> bool:
        return self.bound_ok and self.decay_ok

    def to_csv(self, path=None) -> str:
        lines = ["t,abs_w,theta_bound"]
        for t, w, b in zip(self.times, self.abs_w, self.bound):
            lines.append(f"{t:.12g},{w:.12g},{b:.12g}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def w_of(state: FixedPointState, ed: EigenDirection) -> np.ndarray:
    """w(t) = e~(t, t_n0)^{-1} y(t) - e_hat on the sample grid."""
    opN = state.operator
    return state.y / opN.weight[:, None] - ed.e_hat[None, :]


def asymptotic_report(scn: LevinsonScenario, state: FixedPointState,
                      decay_factor: float = 1.0) -> AsymptoticReport:
    """Pointwise |w(t)| <= Theta_n0(t) ||y|| and a decile decay comparison.

    The decay check passes when the max of |w| over the last tenth of the
    window is below ``decay_factor`` times the max over the first tenth, or
    when |w| is at rounding level there.
    """
    opN = state.operator
    times, th = theta_profile(scn, state.n0, opN.sg)
    w = np.linalg.norm(w_of(state, scn.ed), axis=1)
    ynorm = opN.norm(state.y)
    bound = th * ynorm
    ratio = np.where(bound > 0, w / np.maximum(bound, 1e-300), np.where(w > 1e-12, np.inf, 0.0))
    bound_ok = bool(np.all(w <= bound * (1 + 1e-6) + 1e-12))
    span = times[-1] - times[0]
    first = w[times <= times[0] + 0.1 * span]
    last = w[times >= times[-1] - 0.1 * span]
    fmax, lmax = float(first.max()), float(last.max())
    decay_ok = lmax < decay_factor * fmax or lmax <= W_FLOOR
    return AsymptoticReport(times, w, th, ynorm, bound_ok, float(np.max(ratio)), fmax, lmax,
                            bool(decay_ok))


def perturbed_residual(scn: LevinsonScenario, state: FixedPointState, points=None,
                       delta: float = 1e-4) -> np.ndarray:
    """|y' - A y - B y(gamma) - F(t, y(g(t)))| at interior points by central
    differences of the operator image, relative to max(1, |y|, |rhs|)."""
    op, opN = scn.op, state.operator
    g = op.grid
    y = state.y
    if points is None:
        mids = 0.5 * (opN.times[:-1] + opN.times[1:])
        points = mids[:: max(1, mids.size // 200)]
    out = []
    for t in points:
        t = float(t)
        k = g.locate(t)
        if t - delta <= g.node(k) or t + delta >= g.node(k + 1):
            continue
        yp = opN.evaluate(y, t + delta)
        ym = opN.evaluate(y, t - delta)
        yt = opN.evaluate(y, t)
        yg = opN.evaluate(y, g.node(k))
        gt = float(scn.pert.g(t))
        y_dev = opN.evaluate(y, gt)
        rhs = op.A(t) @ yt + op.B(t) @ yg + scn.pert.F(t, y_dev)
        scale = max(1.0, np.linalg.norm(yt), np.linalg.norm(rhs))
        out.append(np.linalg.norm((yp - ym) / (2 * delta) - rhs) / scale)
    return np.array(out)
