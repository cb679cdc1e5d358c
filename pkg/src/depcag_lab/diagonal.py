"""Diagonal DEPCAGs: closed-form Cauchy entries and the corollary harness.

For z' = diag(a) z + diag(b) z(gamma(t)) on a delayed grid every coordinate
decouples and Z(t, s) = diag(e_1(t, s), ..., e_N(t, s)) with

    e_l(t, s) = exp(int_s^t a_l) / beta_l(k_s, s)
                * prod_{m=k_s}^{k_t-1} beta_l(m, t_{m+1}) * beta_l(k_t, t),

    beta_l(m, x) = 1 + int_{t_m}^x exp(-int_{t_m}^u a_l) b_l(u) du.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .cauchy import CauchyOperator
from .errors import NotDelayed, ZeroDenominator
from .grid import DeviatingArgument, Grid
from .levinson import (DichotomyData, EigenDirection, LevinsonScenario, LinearPerturbation,
                       RatioWeight, asymptotic_report, check_l1, find_n0, fixed_point_solve,
                       perturbed_residual, sampled_M, theta_profile, w_of)
from .linear import CoefficientEvaluator, Constant, ScalarFn, _vector_integral, phi1
from .quadrature import quad
from .reports import ConditionReport
from .simulate import integrate_direct

HINV_FLOOR = 1e-12


class DiagonalSystem:
    """Lambda_A = diag(a), Lambda_B = diag(b) on a delayed grid; ``k`` is 1-based."""

    def __init__(self, a: Sequence, b: Sequence, grid: Grid, k: int = 1):
        if len(a) != len(b):
            raise ValueError("a and b must have the same length")
        if not grid.is_delayed:
            raise NotDelayed("the diagonal example assumes xi_n = t_n")
        if not 1 <= k <= len(a):
            raise ValueError(f"k={k} outside 1..{len(a)}")
        self.a = [ScalarFn.wrap(x) for x in a]
        self.b = [ScalarFn.wrap(x) for x in b]
        self.grid = grid
        self.k = k
        self._beta = lru_cache(maxsize=1 << 16)(self._beta_uncached)

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def A(self) -> CoefficientEvaluator:
        return CoefficientEvaluator.diagonal(self.a)

    @property
    def B(self) -> CoefficientEvaluator:
        return CoefficientEvaluator.diagonal(self.b)

    def operator(self, **kwargs) -> CauchyOperator:
        return CauchyOperator(self.grid, self.A, self.B, **kwargs)

    # ------------------------------------------------------------ brackets
    def _beta_uncached(self, l: int, m: int, x: float) -> complex:
        base = self.grid.node(m)
        if x == base or self.b[l].is_zero:
            return 1.0 + 0.0j
        return complex(self.beta_many(l, m, np.array([x]))[0])

    def beta_many(self, l: int, m, x) -> np.ndarray:
        """beta_l(m, x) for arrays of interval indices and points (l 0-based)."""
        m, x = np.broadcast_arrays(np.asarray(m, dtype=int), np.asarray(x, dtype=float))
        base = self.grid.nodes[m]
        a, b = self.a[l], self.b[l]
        if b.is_zero:
            return np.ones(x.shape, dtype=complex)
        if isinstance(a, Constant) and isinstance(b, Constant):
            d = x - base
            return 1.0 + b.value * d * phi1(-a.value * d) + 0j
        out = np.empty(x.shape, dtype=complex)
        for idx in np.ndindex(x.shape):
            t0, t = float(base[idx]), float(x[idx])

            def integrand(us, t0=t0):
                return np.exp(-_vector_integral(a, t0, us)) * b(us)

            out[idx] = 1.0 + quad(integrand, t0, t, vectorized=True) if t > t0 else 1.0
        return out

    def beta(self, l: int, m: int, x: float) -> complex:
        return self._beta(l, m, float(x))

    def profile(self, l: int):
        """Vectorised t -> e_l(t, t_0), l 1-based."""
        i = l - 1
        g = self.grid
        node_vals = self.beta_many(i, np.arange(g.n_intervals), g.nodes[1:])
        prod = np.concatenate([[1.0 + 0j], np.cumprod(node_vals)])

        def p(ts):
            ts = np.asarray(ts, dtype=float)
            ks = g.locate_many(ts)
            lead = np.exp(_vector_integral(self.a[i], g.t0, ts))
            return lead * prod[ks] * self.beta_many(i, ks, ts)

        return p


@dataclass
class PerturbationMatrix:
    """R(t), an N x N complex matrix."""

    R: CoefficientEvaluator
    name: str = "custom"

    def __call__(self, t):
        return self.R(t)

    @property
    def n(self) -> int:
        return self.R.n

    @classmethod
    def scaled_identity(cls, n: int, fn, name: str = "scaled-identity") -> "PerturbationMatrix":
        return cls(CoefficientEvaluator.diagonal([ScalarFn.wrap(fn)] * n), name)

    @classmethod
    def zero(cls, n: int) -> "PerturbationMatrix":
        return cls(CoefficientEvaluator.zeros(n), "zero")

    def check_finite(self, grid: Grid, samples: int = 64) -> ConditionReport:
        ts = np.linspace(grid.t0, grid.horizon, samples * grid.n_intervals + 1)
        try:
            vals = self.R.batch(ts)
            ok = bool(np.all(np.isfinite(vals)))
        except Exception as exc:  # evaluation failure is the report's content
            return ConditionReport("R-finite", False, np.inf, str(exc))
        return ConditionReport("R-finite", ok, float(np.max(np.abs(vals))) if ok else np.inf,
                               "R finite on the sample grid" if ok else "non-finite entries")


def _split(grid: Grid, t: float, s: float):
    kt, ks = grid.locate_closed(t), grid.locate_closed(s)
    if kt > ks and t == grid.node(kt):
        kt -= 1
    return kt, ks


def e_l_closed(sys: DiagonalSystem, l: int, t: float, s: float) -> complex:
    """Closed-form (l, l) entry of Z(t, s); ``l`` is 1-based."""
    if t < s:
        fwd = e_l_closed(sys, l, s, t)
        if abs(fwd) < HINV_FLOOR:
            raise ZeroDenominator(f"e_{l}({s}, {t}) vanishes; no reciprocal")
        return 1.0 / fwd
    if t == s:
        return 1.0 + 0.0j
    i = l - 1
    g = sys.grid
    kt, ks = _split(g, t, s)
    den = sys.beta(i, ks, s)
    val = np.exp(sys.a[i].integral(s, t)) / den
    for m in range(ks, kt):
        val *= sys.beta(i, m, g.node(m + 1))
    val *= sys.beta(i, kt, t)
    if abs(den) < HINV_FLOOR or not np.isfinite(val):
        raise ZeroDenominator(f"bracket vanishes for l={l}")
    return complex(val)


def check_hinv(sys: DiagonalSystem, samples_per_interval: int = 64,
               floor: float = HINV_FLOOR) -> ConditionReport:
    """Smallest |beta_l(m, t)| per (l, m) over samples including both ends."""
    g = sys.grid
    frac = np.linspace(0.0, 1.0, samples_per_interval + 1)
    rows = []
    worst = np.inf
    failure = ""
    for l in range(sys.n):
        for m in range(g.n_intervals):
            a, b = g.node(m), g.node(m + 1)
            ts = a + (b - a) * frac
            ts[-1] = b
            vals = np.abs(sys.beta_many(l, m, ts))
            j = int(np.argmin(vals))
            rows.append((l + 1, m, float(ts[j]), float(vals[j])))
            worst = min(worst, float(vals[j]))
            if vals[j] < floor and not failure:
                failure = f"bracket l={l + 1}, m={m} reaches {vals[j]:.3e} at t={ts[j]:.12g}"
    return ConditionReport("hinv", not failure, worst,
                           failure or f"min |bracket| {worst:.6g}", rows)


def ratio_weight(sys: DiagonalSystem) -> RatioWeight:
    """h(t, s) = max_{l<k} |e_l(t, s) / e_k(t, s)|."""
    pk = sys.profile(sys.k)
    profiles = []
    for l in range(1, sys.k):
        pl = sys.profile(l)
        profiles.append(lambda ts, pl=pl: pl(ts) / pk(ts))
    return RatioWeight(profiles, "max_{l<k}|e_l/e_k|")


@dataclass
class CorollaryConditions:
    a: ConditionReport
    b: ConditionReport
    h: RatioWeight
    C: float

    @property
    def reports(self):
        return [self.a, self.b]

    @property
    def passed(self) -> bool:
        return self.a.passed and self.b.passed


def corollary_conditions(sys: DiagonalSystem, sample_pairs: int = 200, seed: int = 42,
                         points: int = 64, slack: float = 1e-9) -> CorollaryConditions:
    """(a) |e_l/e_k|(., s) decreases toward 0 for l < k; (b) |e_l/e_k| stays
    bounded for l >= k.

    Along each sampled s the ratio is tabulated on ``points`` times up to
    the horizon.  (a) needs non-increase and a strict overall drop; (b)
    treats the window-end value exceeding the first-half maximum as
    unbounded growth.  C is the sampled maximum for (b).
    """
    g = sys.grid
    rng = np.random.default_rng(seed)
    count = max(1, sample_pairs // points)
    starts = np.concatenate([[g.t0], np.sort(rng.uniform(g.t0, g.t0 + 0.5 * (g.horizon - g.t0),
                                                         size=count - 1))])
    pk = sys.profile(sys.k)
    rise_a, end_a, C, growth = 0.0, 0.0, 0.0, 0.0
    rows = []
    for s in starts:
        ts = np.linspace(s, g.horizon, points)
        ref_k = pk(np.array([s]))[0]
        ek = pk(ts) / ref_k
        for l in range(1, sys.n + 1):
            pl = sys.profile(l)
            r = np.abs(pl(ts) / pl(np.array([s]))[0] / ek)
            if l < sys.k:
                rise = float(np.max(np.diff(r) / np.maximum(r[:-1], 1e-300)))
                rise_a = max(rise_a, rise)
                if s == g.t0:
                    end_a = max(end_a, float(r[-1]))
                rows.append(("a", l, float(s), float(r[-1])))
            else:
                C = max(C, float(r.max()))
                half = r[: max(1, points // 2)].max()
                growth = max(growth, float(r[-1] / half))
                rows.append(("b", l, float(s), float(r.max())))
    if sys.k == 1:
        rep_a = ConditionReport("corollary-a", True, 0.0, "vacuous (k = 1)")
    else:
        ok = rise_a <= slack and end_a < 1.0 - slack
        rep_a = ConditionReport("corollary-a", ok, rise_a,
                                f"largest relative rise {rise_a:.3g}; ratio at window end {end_a:.6g}",
                                [r for r in rows if r[0] == "a"])
    rep_b = ConditionReport("corollary-b", growth <= 1 + 1e-6, growth,
                            f"C = {C:.12g}; end/first-half ratio {growth:.6g}",
                            [r for r in rows if r[0] == "b"], {"C": C})
    return CorollaryConditions(rep_a, rep_b, ratio_weight(sys), C)


def corollary_l1(sys: DiagonalSystem, R: PerturbationMatrix, n0: int = 0,
                 decay: float = 1e-2) -> ConditionReport:
    """Partial sums of int_{t_n}^{t_{n+1}} |e_k(s, t_n)|^{-1} ||R(s)|| ds."""
    g = sys.grid
    pk = sys.profile(sys.k)
    pert = LinearPerturbation(R.R, DeviatingArgument.piecewise_constant(g))
    terms = []
    for n in range(n0, g.n_intervals):
        a, b = g.node(n), g.node(n + 1)
        ref = pk(np.array([a]))[0]

        def integrand(ss, ref=ref):
            return pert.eta_many(ss) * np.abs(ref / pk(ss))

        terms.append(float(np.real(quad(integrand, a, b, 1e-12, vectorized=True))))
    terms = np.array(terms)
    partial = np.cumsum(terms)
    peak = float(terms.max()) if terms.size else 0.0
    last = float(terms[-1]) if terms.size else 0.0
    ratio = last / peak if peak > 0 else 0.0
    rows = [(n0 + i, float(v), float(c)) for i, (v, c) in enumerate(zip(terms, partial))]
    return ConditionReport("l1-01", ratio <= decay, ratio,
                           f"partial sum {partial[-1] if terms.size else 0.0:.12g}; "
                           f"last/peak term {ratio:.3g}", rows,
                           {"sum": float(partial[-1]) if terms.size else 0.0, "last": last})


def eigendirection(sys: DiagonalSystem) -> EigenDirection:
    e = np.zeros(sys.n, dtype=complex)
    e[sys.k - 1] = 1.0
    return EigenDirection(e, sys.a[sys.k - 1], sys.b[sys.k - 1])


def projector(sys: DiagonalSystem) -> np.ndarray:
    P = np.zeros((sys.n, sys.n), dtype=complex)
    for l in range(sys.k - 1):
        P[l, l] = 1.0
    return P


def estimate_M(sys: DiagonalSystem, op: CauchyOperator, h, sample_pairs: int = 200,
               seed: int = 42, slack: float = 0.01) -> float:
    """Smallest M consistent with the sampled dichotomy bounds, times 1 + slack."""
    return sampled_M(eigendirection(sys), op, projector(sys), h, sample_pairs, seed, slack)


@dataclass
class CorollarySettings:
    contraction_target: float = 0.5
    tol: float = 1e-9
    max_iter: int = 100
    samples_per_interval: int = 64
    sample_pairs: int = 200
    seed: int = 42
    M: float | None = None
    exact_kernel: bool = False
    direct_steps: int = 256
    residual_points: int = 200


@dataclass
class CorollaryResult:
    scenario: LevinsonScenario
    n0: int
    theta_sup: float
    state: object
    report: object
    residual: float
    direct_error: float
    closed_form_error: float
    conditions: CorollaryConditions
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.report.passed and self.residual < 1e-5 and self.direct_error < 1e-5


def build_scenario(sys: DiagonalSystem, R: PerturbationMatrix,
                   settings: CorollarySettings | None = None,
                   conditions: CorollaryConditions | None = None) -> LevinsonScenario:
    settings = settings or CorollarySettings()
    op = sys.operator()
    conditions = conditions or corollary_conditions(sys, settings.sample_pairs, settings.seed)
    h = conditions.h
    M = settings.M if settings.M is not None else estimate_M(
        sys, op, h, settings.sample_pairs, settings.seed)
    dd = DichotomyData(projector(sys), h, M, h_sup=1.0)
    pert = LinearPerturbation(R.R, DeviatingArgument.piecewise_constant(sys.grid))
    return LevinsonScenario(op, eigendirection(sys), dd, pert,
                            samples_per_interval=settings.samples_per_interval,
                            exact_kernel=settings.exact_kernel)


def corollary_run(sys: DiagonalSystem, R: PerturbationMatrix,
                  settings: CorollarySettings | None = None) -> CorollaryResult:
    """find_n0, fixed point, asymptotic report and the two cross-checks."""
    settings = settings or CorollarySettings()
    cond = corollary_conditions(sys, settings.sample_pairs, settings.seed)
    scn = build_scenario(sys, R, settings, cond)
    n0 = find_n0(scn, settings.contraction_target)
    _, th = theta_profile(scn, n0)
    state = fixed_point_solve(scn, n0, settings.tol, settings.max_iter)
    report = asymptotic_report(scn, state)
    res = perturbed_residual(scn, state)
    residual = float(res.max()) if res.size else 0.0
    times = state.trace.times
    direct = integrate_direct(sys.grid, sys.A, sys.B + R.R, state.y[0], times[0], times[-1],
                              times=times, steps_per_interval=settings.direct_steps)
    scale = np.maximum(1.0, np.linalg.norm(state.y, axis=1))
    direct_error = float(np.max(np.linalg.norm(direct.values - state.y, axis=1) / scale))
    # w from the closed form e_k against w from e~
    pk = sys.profile(sys.k)
    ek = pk(times) / pk(np.array([times[0]]))[0]
    e = np.zeros(sys.n, dtype=complex)
    e[sys.k - 1] = 1.0
    w_closed = state.y / ek[:, None] - e
    closed_form_error = float(np.max(np.abs(w_closed - w_of(state, scn.ed))))
    return CorollaryResult(scn, n0, float(th.max()), state, report, residual, direct_error,
                           closed_form_error, cond, {"l1": check_l1(scn, n0)})


__all__ = [
    "DiagonalSystem", "PerturbationMatrix", "e_l_closed", "check_hinv", "corollary_conditions",
    "corollary_l1", "corollary_run", "estimate_M", "build_scenario", "CorollarySettings",
    "CorollaryResult", "ratio_weight", "eigendirection", "projector",
]
