"""Direct solution of linear DEPCAGs and the variation-of-constants formula."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .cauchy import CauchyOperator
from .errors import DomainError, NotDelayed
from .grid import Grid
from .linear import CoefficientEvaluator
from .quadrature import quad

STEPS_PER_INTERVAL = 256


def fmt(x: float) -> str:
    return f"{x:.12g}"


@dataclass
class SolutionTrace:
    times: np.ndarray
    values: np.ndarray
    intervals: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex).reshape(self.times.size, -1)
        self.intervals = np.asarray(self.intervals, dtype=int)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.times.size

    def to_csv(self, path=None) -> str:
        """Columns ``t, interval, re_0, im_0, ...``; returns the text."""
        buf = io.StringIO()
        cols = ["t", "interval"]
        for l in range(self.dim):
            cols += [f"re_{l}", f"im_{l}"]
        buf.write(",".join(cols) + "\n")
        for t, k, row in zip(self.times, self.intervals, self.values):
            parts = [fmt(t), str(int(k))]
            for z in row:
                parts += [fmt(z.real), fmt(z.imag)]
            buf.write(",".join(parts) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "SolutionTrace":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        data = np.array([[float(x) for x in r] for r in rows])
        vals = np.empty(data[:, 2::2].shape, dtype=complex)
        vals.real, vals.imag = data[:, 2::2], data[:, 3::2]  # keeps the sign of -0
        return cls(data[:, 0], vals, data[:, 1].astype(int))


class ForcingEvaluator:
    """t -> complex N-vector."""

    def __init__(self, f: Callable, n: int, vectorized: bool = False, name: str = "custom"):
        self.f = f
        self.n = n
        self.vectorized = vectorized
        self.name = name

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.f(t), dtype=complex).reshape(self.n)

    def batch(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.vectorized:
            return np.asarray(self.f(ts), dtype=complex).reshape(ts.shape + (self.n,))
        return np.array([self(float(t)) for t in ts.ravel()]).reshape(ts.shape + (self.n,))

    @classmethod
    def zero(cls, n: int) -> "ForcingEvaluator":
        return cls(lambda ts: np.zeros(np.shape(ts) + (n,)), n, True, "zero")

    @classmethod
    def constant(cls, vec) -> "ForcingEvaluator":
        vec = np.atleast_1d(np.asarray(vec, dtype=complex))
        return cls(lambda ts: np.multiply.outer(np.ones(np.shape(ts)), vec), vec.size,
                   True, "constant")

    @classmethod
    def sine(cls, vec, omega: float = 1.0) -> "ForcingEvaluator":
        vec = np.atleast_1d(np.asarray(vec, dtype=complex))
        return cls(lambda ts: np.multiply.outer(np.sin(omega * np.asarray(ts)), vec),
                   vec.size, True, "sine")

    @classmethod
    def exp_decay(cls, vec, rate: float = 1.0) -> "ForcingEvaluator":
        vec = np.atleast_1d(np.asarray(vec, dtype=complex))
        return cls(lambda ts: np.multiply.outer(np.exp(-rate * np.asarray(ts)), vec),
                   vec.size, True, "exp")


def solve_homogeneous(op: CauchyOperator, z0, s: float, t_end: float,
                      samples: int = 200, times=None) -> SolutionTrace:
    """Sample t -> Z(t, s) z0 on ``samples`` equispaced times (or ``times``)."""
    if t_end < s:
        raise DomainError("t_end must not precede s")
    z0 = np.asarray(z0, dtype=complex).reshape(op.n)
    ts = np.linspace(s, t_end, samples) if times is None else np.asarray(times, float)
    vals = np.array([op.cauchy_z(float(t), s) @ z0 for t in ts])
    return SolutionTrace(ts, vals, op.grid.locate_many(ts))


def _step_times(a: float, b: float, full: float, steps: int, extra) -> np.ndarray:
    count = max(1, int(np.ceil(steps * (b - a) / full - 1e-9)))
    pts = np.linspace(a, b, count + 1)
    if extra is not None and extra.size:
        inside = extra[(extra > a) & (extra < b)]
        if inside.size:
            pts = np.unique(np.concatenate([pts, inside]))
    return pts


def integrate_direct(grid: Grid, A: CoefficientEvaluator, B: CoefficientEvaluator, z0,
                     s: float, t_end: float, step: float | None = None, *,
                     forcing: ForcingEvaluator | None = None, times=None,
                     steps_per_interval: int = STEPS_PER_INTERVAL,
                     backend: str | None = None) -> SolutionTrace:
    """March x' = A(t) x + B(t) x(t_n) + f(t) interval by interval with RK4.

    Independent of the Cauchy machinery: on each interval the frozen value
    x(t_n) is known, so the equation is an ordinary affine ODE.  ``step``
    overrides ``steps_per_interval`` as an absolute step length.  With
    ``times`` the returned trace holds exactly those times (they are hit by
    the stepping, not interpolated).
    """
    if not grid.is_delayed:
        raise NotDelayed("direct integration needs xi_n = t_n")
    nodes = grid.nodes
    ks = int(np.searchsorted(nodes, s))
    if ks >= nodes.size or nodes[ks] != s:
        raise DomainError(f"start time {s} is not a grid node")
    if not (s <= t_end <= grid.horizon):
        raise DomainError(f"t_end={t_end} outside [{s}, {grid.horizon}]")
    x = np.asarray(z0, dtype=complex).reshape(A.n)
    extra = None if times is None else np.asarray(times, dtype=float)
    all_t = [np.array([s])]
    all_x = [x[None, :]]
    n = ks
    while n < grid.n_intervals and nodes[n] < t_end:
        a = float(nodes[n])
        full = float(nodes[n + 1]) - a
        b = min(float(nodes[n + 1]), t_end)
        steps = steps_per_interval if step is None else max(1, int(np.ceil(full / step - 1e-9)))
        ts = _step_times(a, b, full, steps, extra)
        stage = np.stack([ts[:-1], 0.5 * (ts[:-1] + ts[1:]), ts[1:]], axis=1)
        A_s = A.batch(stage)
        c_s = B.batch(stage) @ x
        if forcing is not None:
            c_s = c_s + forcing.batch(stage)
        xs = kernels.march_affine(ts, A_s, c_s, x, backend=backend)
        all_t.append(ts[1:])
        all_x.append(xs[1:])
        x = xs[-1]
        n += 1
    t_all = np.concatenate(all_t)
    x_all = np.concatenate(all_x)
    if extra is not None:
        idx = np.searchsorted(t_all, extra)
        idx = np.clip(idx, 0, t_all.size - 1)
        if not np.allclose(t_all[idx], extra, rtol=0, atol=1e-12):
            raise DomainError("requested times outside the integration range")
        t_all, x_all = extra, x_all[idx]
    return SolutionTrace(t_all, x_all, grid.locate_many(t_all))


def _current_integral(op: CauchyOperator, k: int, t: float, f: ForcingEvaluator) -> np.ndarray:
    """int over interval k of Gamma(t, s) f(s) ds (support up to max(t, xi_k))."""
    g = op.grid
    a = g.node(k)
    xi = float(g.xi[k])
    upper = max(t, xi)
    if upper <= a:
        return np.zeros(op.n, dtype=complex)
    breaks = [p for p in (xi, t) if a < p < upper]
    if g.is_delayed and op.fm.method == "diagonal":
        def integrand(ss):
            return np.einsum("sab,sb->sa", op.fm.batch_s(t, ss), f.batch(ss))
        return quad(integrand, a, upper, op.quad_tol, breakpoints=breaks, vectorized=True)
    return quad(lambda u: op.gamma_kernel(t, u, k) @ f(u), a, upper, op.quad_tol,
                breakpoints=breaks)


def variation_of_constants(op: CauchyOperator, psi0, n0: int, f: ForcingEvaluator, t):
    """psi(t) = Z(t, t_n0) psi0 + int_{t_n0}^t Zhat(t, s) f(s) ds.

    The integral is taken interval by interval: completed intervals j
    contribute Z(t, t_{j+1}) int Gamma(t_{j+1}, s) f(s) ds and the current
    interval contributes int Gamma(t, s) f(s) ds.  ``t`` may be an array.
    """
    g = op.grid
    psi0 = np.asarray(psi0, dtype=complex).reshape(op.n)
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    start = g.node(n0)
    if ts.min() < start:
        raise DomainError("t must not precede t_n0")
    kmax = max(op._split(float(tt), start)[0] for tt in ts)
    # S[k] = Z(t_k, t_n0) psi0 + sum_{n0<=j<k} Z(t_k, t_{j+1}) m_j
    S = {n0: psi0.copy()}
    for j in range(n0, kmax):
        m_j = _current_integral(op, j, g.node(j + 1), f)
        S[j + 1] = op.H[j] @ S[j] + m_j
    out = np.empty((ts.size, op.n), dtype=complex)
    for i, tt in enumerate(ts):
        tt = float(tt)
        k = op._split(tt, start)[0] if tt > start else n0
        head = op._within(k, tt, g.node(k))
        out[i] = head @ S[k] + _current_integral(op, k, tt, f)
    return out[0] if scalar else out


__all__ = [
    "SolutionTrace", "ForcingEvaluator", "solve_homogeneous", "integrate_direct",
    "variation_of_constants",
]
