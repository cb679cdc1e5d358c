"""Coefficient evaluators and fundamental matrices of x' = A(t) x."""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .errors import EvaluationFailure, OutOfDomain
from .grid import Grid
from .quadrature import DEFAULT_TOL, quad


class ScalarFn:
    """Scalar coefficient t -> c(t) with an antiderivative.

    Subclasses provide closed-form integrals; :meth:`wrap` falls back to
    adaptive quadrature.
    """

    name = "callable"

    def __init__(self, fn: Callable | None = None):
        self._fn = fn

    def __call__(self, t):
        return self._fn(t)

    def integral(self, a: float, b: float):
        return quad(self._fn, a, b)

    @property
    def is_zero(self) -> bool:
        return False

    @classmethod
    def wrap(cls, fn) -> "ScalarFn":
        if isinstance(fn, ScalarFn):
            return fn
        if np.isscalar(fn):
            return Constant(fn)
        return cls(fn)


class Constant(ScalarFn):
    name = "constant"

    def __init__(self, value):
        self.value = complex(value) if np.iscomplexobj(value) else float(value)

    def __call__(self, t):
        return self.value + 0.0 * np.asarray(t, dtype=float)

    def integral(self, a, b):
        return self.value * (b - a)

    @property
    def is_zero(self):
        return self.value == 0

    def __repr__(self):
        return f"Constant({self.value})"


class Linear(ScalarFn):
    """c0 + c1 * t"""

    name = "linear"

    def __init__(self, c0, c1):
        self.c0, self.c1 = c0, c1

    def __call__(self, t):
        return self.c0 + self.c1 * np.asarray(t, dtype=float)

    def integral(self, a, b):
        return self.c0 * (b - a) + 0.5 * self.c1 * (b * b - a * a)

    def __repr__(self):
        return f"Linear({self.c0}, {self.c1})"


class ExpDecay(ScalarFn):
    """scale * exp(-rate * t)"""

    name = "exp"

    def __init__(self, scale, rate):
        self.scale, self.rate = scale, float(rate)

    def __call__(self, t):
        return self.scale * np.exp(-self.rate * np.asarray(t, dtype=float))

    def integral(self, a, b):
        r = self.rate
        d = np.asarray(b) - np.asarray(a)
        return self.scale * np.exp(-r * np.asarray(a)) * d * phi1(-r * d)

    def __repr__(self):
        return f"ExpDecay({self.scale}, {self.rate})"


class Sum(ScalarFn):
    """Pointwise sum of scalar coefficients."""

    name = "sum"

    def __init__(self, *terms):
        self.terms = [ScalarFn.wrap(t) for t in terms]

    def __call__(self, t):
        return sum(term(t) for term in self.terms)

    def integral(self, a, b):
        out = sum(_vector_integral(term, a, np.asarray(b, dtype=float)) for term in self.terms)
        return out if np.ndim(out) else out[()]

    @property
    def is_zero(self):
        return all(term.is_zero for term in self.terms)

    def __repr__(self):
        return "Sum(" + ", ".join(map(repr, self.terms)) + ")"


class CoefficientEvaluator:
    """t -> N x N complex matrix, tagged constant / diagonal / general."""

    def __init__(self, kind: str, n: int, *, matrix=None, entries=None, fn=None):
        self.kind = kind
        self.n = n
        self.matrix = matrix
        self.entries = entries
        self._fn = fn

    @classmethod
    def constant(cls, matrix) -> "CoefficientEvaluator":
        m = np.atleast_2d(np.asarray(matrix, dtype=complex))
        if m.shape[0] != m.shape[1]:
            raise ValueError("coefficient matrix must be square")
        m.flags.writeable = False
        return cls("constant", m.shape[0], matrix=m)

    @classmethod
    def diagonal(cls, entries: Sequence) -> "CoefficientEvaluator":
        entries = [ScalarFn.wrap(e) for e in entries]
        return cls("diagonal", len(entries), entries=entries)

    @classmethod
    def scalar(cls, entry) -> "CoefficientEvaluator":
        return cls.diagonal([entry])

    @classmethod
    def general(cls, fn: Callable, n: int) -> "CoefficientEvaluator":
        return cls("general", n, fn=fn)

    @classmethod
    def zeros(cls, n: int) -> "CoefficientEvaluator":
        return cls.constant(np.zeros((n, n)))

    def _diag_entries(self):
        if self.kind == "diagonal":
            return self.entries
        return [Constant(v) for v in np.diag(self.matrix)]

    @property
    def is_zero(self) -> bool:
        if self.kind == "constant":
            return not np.any(self.matrix)
        if self.kind == "diagonal":
            return all(e.is_zero for e in self.entries)
        return False

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            out = self.matrix.copy()
        elif self.kind == "diagonal":
            out = np.diag([complex(e(t)) for e in self.entries])
        else:
            out = np.asarray(self._fn(t), dtype=complex).reshape(self.n, self.n)
        if not np.all(np.isfinite(out)):
            raise EvaluationFailure(f"non-finite coefficient at t={t}")
        return out

    def batch(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.kind == "constant":
            return np.broadcast_to(self.matrix, ts.shape + self.matrix.shape).copy()
        if self.kind == "diagonal":
            out = np.zeros(ts.shape + (self.n, self.n), dtype=complex)
            for l, e in enumerate(self.entries):
                out[..., l, l] = e(ts)
            if not np.all(np.isfinite(out)):
                raise EvaluationFailure("non-finite coefficient")
            return out
        return np.stack([self(float(t)) for t in ts.ravel()]).reshape(
            ts.shape + (self.n, self.n))

    def __add__(self, other: "CoefficientEvaluator") -> "CoefficientEvaluator":
        if self.n != other.n:
            raise ValueError("dimension mismatch")
        if self.kind == other.kind == "constant":
            return CoefficientEvaluator.constant(self.matrix + other.matrix)
        kinds = {self.kind, other.kind}
        if kinds <= {"constant", "diagonal"}:
            mats = [e for e in (self, other) if e.kind == "constant"]
            if all(np.count_nonzero(m.matrix - np.diag(np.diag(m.matrix))) == 0 for m in mats):
                return CoefficientEvaluator.diagonal(
                    [Sum(x, y) for x, y in zip(self._diag_entries(), other._diag_entries())])
        return CoefficientEvaluator.general(lambda t: self(t) + other(t), self.n)


class FundamentalMatrix:
    """X(t, s) = X(t) X(s)^{-1} for x' = A(t) x on a grid window.

    Constant A uses the matrix exponential, diagonal A exponentiates the
    entry integrals, anything else is propagated interval by interval with
    DOP853 dense output (cached per interval).
    """

    def __init__(self, A: CoefficientEvaluator, grid: Grid, rtol: float = 1e-12,
                 atol: float = 1e-14):
        self.A = A
        self.grid = grid
        self.n = A.n
        self.rtol = rtol
        self.atol = atol
        if A.kind == "constant":
            self.method = "expm"
        elif A.kind == "diagonal":
            self.method = "diagonal"
        else:
            self.method = "numerical"
        self._local = {}
        self._lock = threading.Lock()

    def _check(self, t):
        if not (self.grid.t0 <= t <= self.grid.horizon):
            raise OutOfDomain(f"t={t} outside [{self.grid.t0}, {self.grid.horizon}]")

    def __call__(self, t: float, s: float) -> np.ndarray:
        self._check(t)
        self._check(s)
        if self.method == "expm":
            return expm(self.A.matrix * (t - s))
        if self.method == "diagonal":
            return np.diag(np.exp([e.integral(s, t) for e in self.A.entries]))
        return self._numerical(t, s)

    def batch_t(self, ts, s: float) -> np.ndarray:
        """X(t, s) for an array of t."""
        ts = np.asarray(ts, dtype=float)
        if self.method == "diagonal":
            out = np.zeros(ts.shape + (self.n, self.n), dtype=complex)
            for l, e in enumerate(self.A.entries):
                out[..., l, l] = np.exp(_vector_integral(e, s, ts))
            return out
        return np.stack([self(float(t), s) for t in ts.ravel()]).reshape(
            ts.shape + (self.n, self.n))

    def batch_s(self, t: float, ss) -> np.ndarray:
        """X(t, s) for an array of s."""
        ss = np.asarray(ss, dtype=float)
        if self.method == "diagonal":
            out = np.zeros(ss.shape + (self.n, self.n), dtype=complex)
            for l, e in enumerate(self.A.entries):
                out[..., l, l] = np.exp(-_vector_integral(e, t, ss))
            return out
        return np.stack([self(t, float(s)) for s in ss.ravel()]).reshape(
            ss.shape + (self.n, self.n))

    def _interval(self, k: int):
        sol = self._local.get(k)
        if sol is not None:
            return sol
        a, b = self.grid.node(k), self.grid.node(k + 1)
        n = self.n

        def rhs(t, y):
            return (self.A(t) @ y.reshape(n, n)).ravel()

        res = solve_ivp(rhs, (a, b), np.eye(n, dtype=complex).ravel(),
                        method="DOP853", rtol=self.rtol, atol=self.atol,
                        dense_output=True)
        if not res.success:
            raise EvaluationFailure(res.message)
        end = res.y[:, -1].reshape(n, n)
        with self._lock:
            self._local.setdefault(k, (res.sol, end))
        return self._local[k]

    def _local_at(self, k, t):
        sol, end = self._interval(k)
        if t == self.grid.node(k + 1):
            return end
        if t == self.grid.node(k):
            return np.eye(self.n, dtype=complex)
        return sol(t).reshape(self.n, self.n)

    def _numerical(self, t, s):
        if t < s:
            return np.linalg.inv(self._numerical(s, t))
        g = self.grid
        kt, ks = g.locate_closed(t), g.locate_closed(s)
        if t == g.node(kt) and kt > ks:
            kt -= 1  # treat a node as the right end of the previous interval
        right = np.linalg.inv(self._local_at(ks, s))
        if kt == ks:
            return self._local_at(kt, t) @ right
        m = self._interval(ks)[1] @ right
        for j in range(ks + 1, kt):
            m = self._interval(j)[1] @ m
        return self._local_at(kt, t) @ m


def phi1(z):
    """(e^z - 1) / z with the removable singularity at 0 filled in."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)


def _vector_integral(e: ScalarFn, a: float, bs: np.ndarray) -> np.ndarray:
    if type(e) is ScalarFn:
        return np.array([e.integral(a, float(b)) for b in bs.ravel()]).reshape(bs.shape)
    return np.asarray(e.integral(a, bs))


def fundamental(fm: FundamentalMatrix, t: float, s: float) -> np.ndarray:
    return fm(t, s)


__all__ = [
    "ScalarFn", "Constant", "Linear", "ExpDecay", "Sum", "CoefficientEvaluator",
    "FundamentalMatrix", "fundamental", "DEFAULT_TOL", "phi1",
]
