"""Cauchy operator of z' = A(t) z + B(t) z(gamma(t)).

Notation follows the usual construction: X is the fundamental matrix of
x' = A(t) x, D_n(t) = I + int_{xi_n}^t X(xi_n, u) B(u) du corrects for the
frozen argument on interval n, H(n) transfers t_n -> t_{n+1} and
Phi(n) = H(n-1) ... H(0).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .errors import DomainError, SingularD, SingularZ
from .grid import Grid
from .linear import CoefficientEvaluator, FundamentalMatrix
from .quadrature import DEFAULT_TOL, quad
from .reports import ConditionReport

D_FLOOR = 1e-12
CERTIFY_POINTS = 17
_NODE_EPS = 1e-12


def chebyshev_points(a: float, b: float, count: int) -> np.ndarray:
    k = np.arange(count)
    x = np.cos((2 * k + 1) * np.pi / (2 * count))
    return np.sort(0.5 * (a + b) + 0.5 * (b - a) * x)


class CauchyOperator:
    """Z(t, s), Gamma(t, s) and Zhat(t, s) for a linear DEPCAG on a grid window.

    With ``certify=True`` (the default) the invertibility of every D_n is
    checked at Chebyshev points plus both interval ends, :class:`SingularD`
    is raised on failure, and H(n) and Phi(n) are computed eagerly.  With
    ``certify=False`` they are built on first use, so a singular system can
    still be inspected with :func:`check_invertibility`.
    """

    def __init__(self, grid: Grid, A: CoefficientEvaluator, B: CoefficientEvaluator,
                 fm: FundamentalMatrix | None = None, *, quad_tol: float = DEFAULT_TOL,
                 d_floor: float = D_FLOOR, certify: bool = True,
                 certify_points: int = CERTIFY_POINTS):
        if A.n != B.n:
            raise ValueError("A and B must have the same dimension")
        self.grid = grid
        self.A = A
        self.B = B
        self.n = A.n
        self.fm = fm if fm is not None else FundamentalMatrix(A, grid)
        self.quad_tol = quad_tol
        self.d_floor = d_floor
        self._eye = np.eye(self.n, dtype=complex)
        self._d = lru_cache(maxsize=1 << 16)(self._d_uncached)
        self._transition = lru_cache(maxsize=1 << 14)(self._transition_uncached)
        if certify:
            report = check_invertibility(self, certify_points)
            if not report.passed:
                raise SingularD(report.detail)
        self._H = None
        self._phi = None
        if certify:
            self._build_transfers()

    def _build_transfers(self):
        grid = self.grid
        H = [self._within(n, grid.node(n + 1), grid.node(n)) for n in range(grid.n_intervals)]
        phi = [self._eye.copy()]
        for h in H:
            phi.append(h @ phi[-1])
        self._H, self._phi = H, phi

    @property
    def H(self) -> list:
        """H(n) for every interval; built on first use when not certified."""
        if self._H is None:
            self._build_transfers()
        return self._H

    # ------------------------------------------------------------------ D_n
    def _d_integral(self, n: int, t: float) -> np.ndarray:
        xi = float(self.grid.xi[n])
        if self.B.is_zero or t == xi:
            return np.zeros((self.n, self.n), dtype=complex)
        if self.A.kind == "constant" and self.B.kind == "constant":
            # int_0^tau exp(-A r) dr is the top-right block of expm([[-A, I], [0, 0]] tau)
            big = np.zeros((2 * self.n, 2 * self.n), dtype=complex)
            big[:self.n, :self.n] = -self.A.matrix
            big[:self.n, self.n:] = self._eye
            block = expm(big * (t - xi))[:self.n, self.n:]
            return block @ self.B.matrix
        if self.fm.method == "diagonal" and self.B.kind in ("diagonal", "constant"):
            def integrand(us):
                return self.fm.batch_s(xi, us) @ self.B.batch(us)
            return quad(integrand, xi, t, self.quad_tol, vectorized=True)
        return quad(lambda u: self.fm(xi, u) @ self.B(u), xi, t, self.quad_tol)

    def _d_uncached(self, n: int, t: float) -> np.ndarray:
        d = self._eye + self._d_integral(n, t)
        d.flags.writeable = False
        return d

    def d_matrix(self, n: int, t: float) -> np.ndarray:
        """D_n(t) for t in [t_n, t_{n+1}]."""
        a, b = self.grid.node(n), self.grid.node(n + 1)
        if not (a - _NODE_EPS <= t <= b + _NODE_EPS):
            raise DomainError(f"t={t} outside interval {n} = [{a}, {b}]")
        d = self._d(n, float(t))
        smin = np.linalg.svd(d, compute_uv=False)[-1]
        if smin < self.d_floor:
            raise SingularD(f"D_{n}({t}) has smallest singular value {smin:.3e}")
        return d

    # ------------------------------------------------------------ transitions
    def _within(self, k: int, t: float, s: float) -> np.ndarray:
        """Transition s -> t with both times in the closed interval k."""
        if t == s:
            return self._eye.copy()
        xi = float(self.grid.xi[k])
        fm = self.fm
        left = fm(t, xi) @ self.d_matrix(k, t)
        right = np.linalg.solve(self.d_matrix(k, s), fm(xi, s))
        return left @ right

    def h_matrix(self, n: int) -> np.ndarray:
        return self.H[n]

    def phi(self, n: int) -> np.ndarray:
        """Phi(n) = H(n-1) ... H(0); Phi(0) = I."""
        if n < 0 or n > self.grid.n_intervals:
            raise DomainError(f"phi index {n} outside 0..{self.grid.n_intervals}")
        if self._phi is None:
            self._build_transfers()
        return self._phi[n]

    def _transition_uncached(self, m: int, n: int) -> np.ndarray:
        if m == n:
            return self._eye
        return self.H[m - 1] @ self._transition(m - 1, n)

    def transition(self, m: int, n: int) -> np.ndarray:
        """Node-to-node transfer H(m-1) ... H(n) = Z(t_m, t_n) for m >= n."""
        if m < n:
            return np.linalg.inv(self.transition(n, m))
        return self._transition(m, n)

    def _split(self, t: float, s: float):
        """Interval indices for t >= s, a node t being the right end of the
        previous interval when s lies before it."""
        g = self.grid
        kt, ks = g.locate_closed(t), g.locate_closed(s)
        if kt > ks and t == g.node(kt):
            kt -= 1
        return kt, ks

    def cauchy_z(self, t: float, s: float) -> np.ndarray:
        if t == s:
            return self._eye.copy()
        if t < s:
            fwd = self.cauchy_z(s, t)
            if np.linalg.cond(fwd) > 1e14:
                raise SingularZ(f"Z({s}, {t}) is not invertible")
            return np.linalg.inv(fwd)
        kt, ks = self._split(t, s)
        if kt == ks:
            return self._within(kt, t, s)
        g = self.grid
        head = self._within(kt, t, g.node(kt))
        tail = self._within(ks, g.node(ks + 1), s)
        return head @ self.transition(kt, ks + 1) @ tail

    def __call__(self, t: float, s: float) -> np.ndarray:
        return self.cauchy_z(t, s)

    # ---------------------------------------------------------------- kernels
    def _kernel_interval(self, t: float, s: float, n: int | None) -> int:
        g = self.grid
        if n is None:
            n = g.locate_closed(t)
            if s < t and t == g.node(n) and n > 0:
                n -= 1
        a, b = g.node(n), g.node(n + 1)
        if not (a <= s <= b and a <= t <= b):
            raise DomainError(f"t={t}, s={s} not in a common interval")
        return n

    def gamma_kernel(self, t: float, s: float, n: int | None = None) -> np.ndarray:
        """One-interval forcing kernel.

        psi(t) = Z(t, t_n) psi(t_n) + int_{t_n}^{t_{n+1}} Gamma(t, s) f(s) ds
        for t in interval n.  For s <= xi_n the kernel is
        Z(t, xi_n) D_n(t_n)^{-1} X(xi_n, s), minus X(t, s) when t < s; for
        s > xi_n it is X(t, s) when s <= t and zero otherwise.
        """
        n = self._kernel_interval(t, s, n)
        xi = float(self.grid.xi[n])
        if s <= xi:
            zx = self._within(n, t, xi)
            out = zx @ np.linalg.solve(self.d_matrix(n, self.grid.node(n)), self.fm(xi, s))
            if t < s:
                out = out - self.fm(t, s)
            return out
        if s <= t:
            return self.fm(t, s)
        return np.zeros((self.n, self.n), dtype=complex)

    def node_routed(self, t: float, s: float) -> np.ndarray:
        """Z(t, t_{n+1}) Gamma(t_{n+1}, s) with n the interval holding s.

        As a function of t this is a homogeneous solution for every s.
        """
        g = self.grid
        n = g.locate_closed(s)
        right = g.node(n + 1)
        return self.cauchy_z(t, right) @ self.gamma_kernel(right, s, n)

    def zhat_kernel(self, t: float, s: float) -> np.ndarray:
        """Gamma(t, s) when s <= t share an interval, otherwise
        Z(t, t_{n+1}) Gamma(t_{n+1}, s) with n = k_s.

        For t < s this is the node-routed kernel used by the backward half of
        the Green kernel.
        """
        g = self.grid
        n = g.locate_closed(s)
        if s <= t <= g.node(n + 1):
            return self.gamma_kernel(t, s, n)
        return self.node_routed(t, s)


def check_invertibility(op: CauchyOperator, points: int = CERTIFY_POINTS,
                        floor: float | None = None) -> ConditionReport:
    """Smallest singular value of D_n over Chebyshev points and interval ends."""
    floor = op.d_floor if floor is None else floor
    grid = op.grid
    worst = np.inf
    rows = []
    failure = ""
    for n in range(grid.n_intervals):
        a, b = grid.node(n), grid.node(n + 1)
        ts = np.concatenate([[a], chebyshev_points(a, b, points), [b]])
        smin_n = np.inf
        for t in ts:
            smin = np.linalg.svd(op._d(n, float(t)), compute_uv=False)[-1]
            if smin < smin_n:
                smin_n, t_worst = smin, float(t)
        rows.append((n, t_worst, float(smin_n)))
        if smin_n < worst:
            worst = float(smin_n)
        if smin_n < floor and not failure:
            failure = f"D_{n}({t_worst:.12g}) singular value {smin_n:.3e} < {floor:g}"
    passed = not failure
    detail = failure or f"min singular value {worst:.6g} over {grid.n_intervals} intervals"
    return ConditionReport("24a", passed, worst, detail, rows)


def build_operator(grid: Grid, A: CoefficientEvaluator, B: CoefficientEvaluator,
                   **kwargs) -> CauchyOperator:
    return CauchyOperator(grid, A, B, **kwargs)
