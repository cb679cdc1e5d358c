"""Turn a validated :class:`ScenarioConfig` into numerical objects."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cauchy import CauchyOperator
from .config import ScenarioConfig, parse_coef, parse_matrix, parse_number
from .diagonal import (CorollarySettings, DiagonalSystem, PerturbationMatrix, corollary_conditions,
                       eigendirection, projector)
from .errors import DomainError, ValidationError
from .grid import DeviatingArgument, Grid
from .levinson import (DichotomyData, EigenDirection, ExponentialWeight, LevinsonScenario,
                       LinearPerturbation, sampled_M)
from .linear import CoefficientEvaluator
from .simulate import ForcingEvaluator


@dataclass
class Built:
    cfg: ScenarioConfig
    grid: Grid
    A: CoefficientEvaluator
    B: CoefficientEvaluator
    diag: DiagonalSystem | None
    R: PerturbationMatrix

    @property
    def n(self) -> int:
        return self.A.n

    def operator(self, certify: bool = True) -> CauchyOperator:
        return CauchyOperator(self.grid, self.A, self.B, quad_tol=self.cfg.numerics["quad_tol"],
                              certify=certify)

    def settings(self) -> CorollarySettings:
        num = self.cfg.numerics
        dd = self.cfg.dichotomy or {}
        M = dd.get("M", "auto")
        return CorollarySettings(
            contraction_target=float(num["contraction_target"]), tol=float(num["tol"]),
            max_iter=int(num["max_iter"]), samples_per_interval=int(num["samples_per_interval"]),
            sample_pairs=int(num["sample_pairs"]), seed=int(num["seed"]),
            M=None if M == "auto" else float(M), exact_kernel=bool(num["exact_kernel"]))


def build(cfg: ScenarioConfig) -> Built:
    issues: list[str] = []
    gs = cfg.grid
    xi = gs.get("xi", "delayed")
    if isinstance(xi, list):
        xi = [float(parse_number(x, "grid.xi", issues)) for x in xi]
    try:
        if "nodes" in gs:
            grid = Grid.from_nodes([float(parse_number(x, "grid.nodes", issues))
                                    for x in gs["nodes"]], xi)
        else:
            grid = Grid.uniform(float(parse_number(gs["start"], "grid.start", issues)),
                                float(parse_number(gs["step"], "grid.step", issues)),
                                int(gs["intervals"]), xi)
    except DomainError as exc:
        raise ValidationError([f"grid: {exc}"]) from None
    sysc = cfg.system
    diag = None
    if sysc["kind"] == "diagonal":
        a = [parse_coef(x, f"system.a[{i}]", issues) for i, x in enumerate(sysc["a"])]
        b = [parse_coef(x, f"system.b[{i}]", issues) for i, x in enumerate(sysc["b"])]
        A = CoefficientEvaluator.diagonal(a)
        B = CoefficientEvaluator.diagonal(b)
        if grid.is_delayed:
            k = int((cfg.eigendirection or {}).get("k", 1))
            if not 1 <= k <= len(a):
                issues.append(f"eigendirection.k: {k} outside 1..{len(a)}")
                k = 1
            diag = DiagonalSystem(a, b, grid, k)
    else:
        A = CoefficientEvaluator.constant(parse_matrix(sysc["A"], "system.A", issues))
        Bm = sysc.get("B")
        B = (CoefficientEvaluator.constant(parse_matrix(Bm, "system.B", issues, A.n))
             if Bm is not None else CoefficientEvaluator.zeros(A.n))
        if B.n != A.n:
            issues.append("system.B: dimension differs from system.A")
    R = _perturbation(cfg.perturbation, A.n, issues)
    if issues:
        raise ValidationError(issues)
    return Built(cfg, grid, A, B, diag, R)


def _perturbation(sec, n, issues) -> PerturbationMatrix:
    if sec is None:
        return PerturbationMatrix.zero(n)
    R = sec.get("R", "zero")
    if R == "zero":
        return PerturbationMatrix.zero(n)
    if isinstance(R, dict) and "scaled_identity" in R:
        return PerturbationMatrix.scaled_identity(
            n, parse_coef(R["scaled_identity"], "perturbation.R.scaled_identity", issues))
    if isinstance(R, dict) and "diagonal" in R:
        entries = R["diagonal"]
        if not isinstance(entries, list) or len(entries) != n:
            issues.append(f"perturbation.R.diagonal: expected {n} entries")
            return PerturbationMatrix.zero(n)
        return PerturbationMatrix(CoefficientEvaluator.diagonal(
            [parse_coef(x, f"perturbation.R.diagonal[{i}]", issues) for i, x in enumerate(entries)]),
            "diagonal")
    issues.append(f"perturbation.R: unknown perturbation {R!r}")
    return PerturbationMatrix.zero(n)


def eigen_data(b: Built) -> EigenDirection:
    sec = b.cfg.eigendirection or {}
    if "e_hat" in sec:
        issues: list[str] = []
        e = np.array([parse_number(x, "eigendirection.e_hat", issues) for x in sec["e_hat"]],
                     dtype=complex)
        lam = parse_coef(sec.get("lambda", 0.0), "eigendirection.lambda", issues)
        lam_d = parse_coef(sec.get("lambda_d", 0.0), "eigendirection.lambda_d", issues)
        if e.size != b.n:
            issues.append(f"eigendirection.e_hat: expected {b.n} entries")
        if issues:
            raise ValidationError(issues)
        return EigenDirection(e / np.linalg.norm(e), lam, lam_d)
    if b.diag is not None:
        return eigendirection(b.diag)
    raise ValidationError(["eigendirection: e_hat required for non-diagonal systems"])


def levinson_scenario(b: Built, op: CauchyOperator | None = None) -> LevinsonScenario:
    op = op or b.operator()
    ed = eigen_data(b)
    sec = b.cfg.dichotomy or {}
    num = b.cfg.numerics
    if "projection" in sec:
        P = np.zeros((b.n, b.n), dtype=complex)
        for i in sec["projection"]:
            P[int(i) - 1, int(i) - 1] = 1.0
    elif b.diag is not None:
        P = projector(b.diag)
    else:
        P = np.zeros((b.n, b.n), dtype=complex)
    hsec = sec.get("h", "corollary")
    if hsec == "corollary":
        if b.diag is None:
            raise ValidationError(["dichotomy.h: corollary weight needs a diagonal system"])
        h = corollary_conditions(b.diag, int(num["sample_pairs"]), int(num["seed"])).h
    else:
        h = ExponentialWeight(float(hsec["exponential"]))
    M = sec.get("M", "auto")
    if M == "auto":
        M = sampled_M(ed, op, P, h, int(num["sample_pairs"]), int(num["seed"]))
    dd = DichotomyData(P, h, float(M), h_sup=float(sec.get("h_sup", 1.0)))
    pert = LinearPerturbation(b.R.R, DeviatingArgument.piecewise_constant(b.grid))
    return LevinsonScenario(op, ed, dd, pert, samples_per_interval=int(num["samples_per_interval"]),
                            exact_kernel=bool(num["exact_kernel"]))


def forcing(b: Built) -> ForcingEvaluator | None:
    sec = b.cfg.simulate.get("forcing")
    if sec is None or sec == "zero":
        return None
    issues: list[str] = []
    kind = sec.get("kind") if isinstance(sec, dict) else None
    vec = np.array([parse_number(x, "simulate.forcing.vector", issues)
                    for x in sec.get("vector", [1.0] * b.n)], dtype=complex) \
        if isinstance(sec, dict) else np.zeros(b.n)
    if vec.size != b.n:
        issues.append(f"simulate.forcing.vector: expected {b.n} entries")
    out = None
    if kind == "constant":
        out = ForcingEvaluator.constant(vec)
    elif kind == "sine":
        out = ForcingEvaluator.sine(vec, float(sec.get("omega", 1.0)))
    elif kind == "exp":
        out = ForcingEvaluator.exp_decay(vec, float(sec.get("rate", 1.0)))
    else:
        issues.append(f"simulate.forcing.kind: unknown forcing {kind!r}")
    if issues:
        raise ValidationError(issues)
    return out


def initial_state(b: Built) -> np.ndarray:
    z0 = b.cfg.simulate.get("z0")
    if z0 is None:
        v = np.zeros(b.n, dtype=complex)
        v[0] = 1.0
        return v
    issues: list[str] = []
    v = np.array([parse_number(x, "simulate.z0", issues) for x in z0], dtype=complex)
    if v.size != b.n:
        issues.append(f"simulate.z0: expected {b.n} entries")
    if issues:
        raise ValidationError(issues)
    return v


__all__ = ["Built", "build", "eigen_data", "levinson_scenario", "forcing", "initial_state"]
