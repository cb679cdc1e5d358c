"""Node sequences, the piecewise constant argument and deviating arguments."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, OutOfDomain


class Grid:
    """Finite window t_0 < t_1 < ... < t_nmax with one argument value per interval.

    ``xi[n]`` is the value taken by gamma on ``[t_n, t_{n+1})``.  Passing
    ``xi=None`` gives the delayed grid ``xi_n = t_n``.  Instances are
    immutable; arrays are exposed read-only.
    """

    __slots__ = ("_nodes", "_xi")

    def __init__(self, nodes, xi=None):
        nodes = np.array(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise DomainError("a grid needs at least two nodes")
        if not np.all(np.isfinite(nodes)):
            raise DomainError("grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0.0):
            raise DomainError("grid nodes must be strictly increasing")
        if xi is None:
            xi = nodes[:-1].copy()
        else:
            xi = np.array(xi, dtype=float)
            if xi.shape != (nodes.size - 1,):
                raise DomainError(
                    f"expected {nodes.size - 1} argument values, got {xi.size}")
            bad = np.flatnonzero((xi < nodes[:-1]) | (xi > nodes[1:]))
            if bad.size:
                n = int(bad[0])
                raise DomainError(
                    f"xi[{n}]={xi[n]} outside [{nodes[n]}, {nodes[n + 1]}]")
        nodes.flags.writeable = False
        xi.flags.writeable = False
        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_xi", xi)

    def __setattr__(self, name, value):
        raise AttributeError("Grid is immutable")

    @classmethod
    def uniform(cls, start: float, step: float, count: int, xi="delayed") -> "Grid":
        """``count`` intervals of length ``step`` starting at ``start``."""
        if step <= 0 or count < 1:
            raise DomainError("uniform grid needs step > 0 and count >= 1")
        nodes = start + step * np.arange(count + 1, dtype=float)
        return cls(nodes, _resolve_xi(nodes, xi))

    @classmethod
    def from_nodes(cls, nodes, xi="delayed") -> "Grid":
        nodes = np.asarray(nodes, dtype=float)
        return cls(nodes, _resolve_xi(nodes, xi))

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes

    @property
    def xi(self) -> np.ndarray:
        return self._xi

    @property
    def t0(self) -> float:
        return float(self._nodes[0])

    @property
    def horizon(self) -> float:
        return float(self._nodes[-1])

    @property
    def n_intervals(self) -> int:
        return self._nodes.size - 1

    @property
    def is_delayed(self) -> bool:
        return bool(np.array_equal(self._xi, self._nodes[:-1]))

    def node(self, n: int) -> float:
        return float(self._nodes[n])

    def locate(self, t: float) -> int:
        """Index k with t_k <= t < t_{k+1}."""
        if not (self.t0 <= t < self.horizon):
            raise OutOfDomain(f"t={t} outside [{self.t0}, {self.horizon})")
        return int(np.searchsorted(self._nodes, t, side="right")) - 1

    def locate_closed(self, t: float) -> int:
        """Like :meth:`locate` but maps the horizon itself to the last interval."""
        if t == self.horizon:
            return self.n_intervals - 1
        return self.locate(t)

    def gamma(self, t: float) -> float:
        return float(self._xi[self.locate(t)])

    def gamma_closed(self, t: float) -> float:
        return float(self._xi[self.locate_closed(t)])

    def locate_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if ts.size and (ts.min() < self.t0 or ts.max() > self.horizon):
            raise OutOfDomain("times outside the grid window")
        k = np.searchsorted(self._nodes, ts, side="right") - 1
        return np.minimum(k, self.n_intervals - 1)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (np.array_equal(self._nodes, other._nodes)
                and np.array_equal(self._xi, other._xi))

    def __hash__(self):
        return hash((self._nodes.tobytes(), self._xi.tobytes()))

    def __repr__(self):
        return (f"Grid(t0={self.t0}, horizon={self.horizon}, "
                f"intervals={self.n_intervals}, delayed={self.is_delayed})")


def _resolve_xi(nodes: np.ndarray, xi):
    if isinstance(xi, str):
        if xi in ("delayed", "nodes"):
            return None
        if xi == "midpoint":
            return 0.5 * (nodes[:-1] + nodes[1:])
        raise DomainError(f"unknown argument rule {xi!r}")
    return xi


def locate_interval(grid: Grid, t: float) -> int:
    return grid.locate(t)


def gamma(grid: Grid, t: float) -> float:
    return grid.gamma(t)


def floor_argument(horizon: int) -> Grid:
    """The classical argument gamma(t) = [t] on [0, horizon)."""
    return Grid.uniform(0.0, 1.0, int(horizon))


@dataclass(frozen=True)
class DeviatingArgument:
    """A map g with g([t_n, t_{n+1})) inside [t_n, t_{n+1})."""

    g: Callable[[float], float]
    name: str = "custom"

    def __call__(self, t):
        return self.g(t)

    @classmethod
    def identity(cls) -> "DeviatingArgument":
        return cls(lambda t: t, "identity")

    @classmethod
    def piecewise_constant(cls, grid: Grid) -> "DeviatingArgument":
        return cls(grid.gamma_closed, "gamma")


@dataclass
class IntervalCheck:
    interval: int
    passed: bool
    first_violation: float | None = None


@dataclass
class DeviatingReport:
    intervals: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.intervals)

    @property
    def failures(self) -> list:
        return [c for c in self.intervals if not c.passed]


def validate_deviating(grid: Grid, g: DeviatingArgument,
                       samples_per_interval: int = 64) -> DeviatingReport:
    """Sample each interval (left end included, right end excluded) and test
    ``t_n <= g(t) < t_{n+1}``."""
    if samples_per_interval < 2:
        raise ValueError("samples_per_interval must be >= 2")
    report = DeviatingReport()
    frac = np.arange(samples_per_interval) / samples_per_interval
    for n in range(grid.n_intervals):
        a, b = grid.node(n), grid.node(n + 1)
        check = IntervalCheck(n, True)
        for t in a + (b - a) * frac:
            v = float(g(float(t)))
            if not (a <= v < b):
                check.passed = False
                check.first_violation = float(t)
                break
        report.intervals.append(check)
    return report
