"""Scenario configuration files.

A scenario is a YAML mapping.  ``preset: <name>`` loads one of the bundled
files in ``presets/`` and the remaining keys override it section by section.

    grid:          start, step, intervals (or count), or an explicit nodes list;
                   xi (delayed | nodes | midpoint | list)
    system:        kind (diagonal | scalar | constant), a/b (diagonal entries,
                   single coefficients for scalar) or A/B (matrices)
    eigendirection: k (canonical e_k of a diagonal system) or e_hat, lambda, lambda_d
    dichotomy:     projection (1-based coordinates), M (number | auto),
                   h (corollary | {exponential: rate})
    perturbation:  R (zero | {scaled_identity: coef} | {diagonal: [coef, ...]})
    numerics:      tol, max_iter, samples_per_interval, sample_pairs,
                   contraction_target, quad_tol, seed, exact_kernel
    simulate:      z0, start, end, samples, forcing ({kind, vector, omega/rate})

A coefficient is a number, a complex string such as "1+2j", or one of
{constant: c}, {linear: [c0, c1]}, {exp: [scale, rate]}.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ParseError, ValidationError
from .linear import Constant, ExpDecay, Linear, ScalarFn

PRESET_DIR = Path(__file__).with_name("presets")

DEFAULT_NUMERICS = {
    "tol": 1e-9,
    "max_iter": 100,
    "samples_per_interval": 64,
    "sample_pairs": 200,
    "contraction_target": 0.5,
    "quad_tol": 1e-10,
    "seed": 42,
    "exact_kernel": False,
}
POSITIVE = ("tol", "max_iter", "samples_per_interval", "sample_pairs", "quad_tol")


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))


def _load_yaml(text: str, source: str):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"{where}: {problem}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError(f"{source}: top level must be a mapping")
    return data


def load_preset(name: str, _seen=()) -> dict:
    path = PRESET_DIR / f"{name}.yaml"
    if not path.exists():
        raise ValidationError([f"preset: unknown preset {name!r} (known: {', '.join(preset_names())})"])
    if name in _seen:
        raise ValidationError([f"preset: cycle through {name!r}"])
    data = _load_yaml(path.read_text(), str(path))
    parent = data.get("preset")
    if parent is not None:
        data = merge(load_preset(str(parent), _seen + (name,)), data)
    data["preset"] = name
    return data


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


# --------------------------------------------------------------------------
# value parsers
# --------------------------------------------------------------------------
def parse_number(val, key: str, issues: list):
    if isinstance(val, bool):
        issues.append(f"{key}: expected a number, got {val!r}")
        return 0.0
    if isinstance(val, (int, float)):
        return val
    if isinstance(val, str):
        try:
            z = complex(val.replace(" ", ""))
        except ValueError:
            issues.append(f"{key}: cannot read {val!r} as a number")
            return 0.0
        return z.real if z.imag == 0 else z
    issues.append(f"{key}: expected a number, got {type(val).__name__}")
    return 0.0


def parse_coef(val, key: str, issues: list) -> ScalarFn:
    if isinstance(val, dict):
        if len(val) != 1:
            issues.append(f"{key}: coefficient mapping needs exactly one of constant/linear/exp")
            return Constant(0.0)
        kind, args = next(iter(val.items()))
        if kind == "constant":
            return Constant(parse_number(args, key, issues))
        if kind in ("linear", "exp"):
            if not isinstance(args, list) or len(args) != 2:
                issues.append(f"{key}.{kind}: expected a list of two numbers")
                return Constant(0.0)
            c0, c1 = (parse_number(x, f"{key}.{kind}", issues) for x in args)
            return Linear(c0, c1) if kind == "linear" else ExpDecay(c0, c1)
        issues.append(f"{key}: unknown coefficient preset {kind!r}")
        return Constant(0.0)
    return Constant(parse_number(val, key, issues))


def parse_matrix(val, key: str, issues: list, n: int | None = None) -> np.ndarray:
    if not isinstance(val, list) or not val or not all(isinstance(r, list) for r in val):
        issues.append(f"{key}: expected a list of rows")
        return np.zeros((n or 1, n or 1), dtype=complex)
    rows = [[parse_number(x, key, issues) for x in r] for r in val]
    if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
        issues.append(f"{key}: matrix must be square")
        return np.zeros((n or 1, n or 1), dtype=complex)
    return np.array(rows, dtype=complex)


# --------------------------------------------------------------------------
# validated config
# --------------------------------------------------------------------------
@dataclass
class ScenarioConfig:
    name: str
    raw: dict
    grid: dict
    system: dict
    eigendirection: dict | None
    dichotomy: dict | None
    perturbation: dict | None
    numerics: dict
    simulate: dict
    output: str | None = None
    source: str = ""
    issues: list = field(default_factory=list)

    @property
    def seed(self) -> int:
        return int(self.numerics["seed"])


def _section(data, key, issues, required=False):
    val = data.get(key)
    if val is None:
        if required:
            issues.append(f"{key}: missing required section")
        return None
    if not isinstance(val, dict):
        issues.append(f"{key}: expected a mapping")
        return None
    return val


def validate(data: dict, source: str = "<config>") -> ScenarioConfig:
    issues: list[str] = []
    known = {"preset", "name", "grid", "system", "eigendirection", "dichotomy",
             "perturbation", "numerics", "simulate", "output"}
    for key in data:
        if key not in known:
            issues.append(f"{key}: unknown section")
    grid = _section(data, "grid", issues, required=True) or {}
    system = _section(data, "system", issues, required=True) or {}
    ed = _section(data, "eigendirection", issues)
    dd = _section(data, "dichotomy", issues)
    pert = _section(data, "perturbation", issues)
    numerics = dict(DEFAULT_NUMERICS)
    numerics.update(_section(data, "numerics", issues) or {})
    simulate = _section(data, "simulate", issues) or {}

    if grid:
        if "count" in grid and "intervals" not in grid:
            grid["intervals"] = grid.pop("count")
        if "nodes" in grid:
            nodes = grid["nodes"]
            if not isinstance(nodes, list) or len(nodes) < 2:
                issues.append("grid.nodes: expected a list of at least two times")
            else:
                vals = [parse_number(x, "grid.nodes", issues) for x in nodes]
                if any(not isinstance(v, (int, float)) for v in vals) or \
                        any(b <= a for a, b in zip(vals, vals[1:])):
                    issues.append("grid.nodes: must be strictly increasing real numbers")
        else:
            for key in ("start", "step", "intervals"):
                if key not in grid:
                    issues.append(f"grid.{key}: missing")
            if "step" in grid and parse_number(grid["step"], "grid.step", issues) <= 0:
                issues.append("grid.step: must be positive")
            iv = grid.get("intervals")
            if iv is not None and (not isinstance(iv, int) or isinstance(iv, bool) or iv < 1):
                issues.append("grid.intervals: must be a positive integer")
        xi = grid.get("xi", "delayed")
        if not (isinstance(xi, list) or xi in ("delayed", "midpoint", "nodes")):
            issues.append(f"grid.xi: unknown value {xi!r}")

    if system:
        kind = system.get("kind")
        if kind == "scalar":
            for key in ("a", "b"):
                if isinstance(system.get(key), list):
                    issues.append(f"system.{key}: scalar systems take a single coefficient")
            system = dict(system, kind="diagonal", a=[system.get("a", 0.0)], b=[system.get("b", 0.0)])
            kind = "diagonal"
        if kind == "diagonal":
            a, b = system.get("a"), system.get("b")
            if not isinstance(a, list) or not isinstance(b, list):
                issues.append("system.a/system.b: diagonal systems need lists a and b")
            elif len(a) != len(b) or not a:
                issues.append("system.b: a and b must be non-empty and of equal length")
        elif kind == "constant":
            if "A" not in system:
                issues.append("system.A: missing")
        else:
            issues.append(f"system.kind: expected diagonal or constant, got {kind!r}")

    for key in POSITIVE:
        val = numerics.get(key)
        if isinstance(val, bool) or not isinstance(val, (int, float)) or val <= 0:
            issues.append(f"numerics.{key}: must be a positive number")
    ct = numerics.get("contraction_target")
    if not isinstance(ct, (int, float)) or not 0 < ct < 1:
        issues.append("numerics.contraction_target: must lie in (0, 1)")
    seed = numerics.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        issues.append("numerics.seed: must be a non-negative integer")
    if not isinstance(numerics.get("exact_kernel"), bool):
        issues.append("numerics.exact_kernel: must be true or false")

    if dd is not None:
        M = dd.get("M", "auto")
        if M != "auto" and (isinstance(M, bool) or not isinstance(M, (int, float)) or M <= 0):
            issues.append("dichotomy.M: must be positive or 'auto'")
        h = dd.get("h", "corollary")
        if not (h == "corollary" or (isinstance(h, dict) and set(h) == {"exponential"})):
            issues.append(f"dichotomy.h: unknown weight {h!r}")
    if ed is not None and "k" not in ed and "e_hat" not in ed:
        issues.append("eigendirection: needs k or e_hat")

    if issues:
        raise ValidationError(issues)
    return ScenarioConfig(
        name=str(data.get("name", data.get("preset", "custom"))),
        raw=data, grid=grid, system=system, eigendirection=ed, dichotomy=dd,
        perturbation=pert, numerics=numerics, simulate=simulate,
        output=data.get("output"), source=source,
    )


def parse_text(text: str, source: str = "<config>") -> ScenarioConfig:
    data = _load_yaml(text, source)
    preset = data.get("preset")
    if preset is not None:
        data = merge(load_preset(str(preset)), data)
        data["preset"] = preset
    return validate(data, source)


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    return parse_text(text, str(path))
