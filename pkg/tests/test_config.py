import pytest

from depcag_lab.config import (DEFAULT_NUMERICS, load_preset, parse_coef, parse_config,
                               parse_text, preset_names)
from depcag_lab.errors import ParseError, ValidationError
from depcag_lab.linear import Constant, ExpDecay, Linear
from depcag_lab.scenario import build

MINIMAL = """\
grid: {start: 0.0, step: 1.0, intervals: 20}
system: {kind: scalar, a: 0.0, b: 1.0}
"""


def test_minimal_file(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(MINIMAL)
    cfg = parse_config(path)
    assert cfg.grid["intervals"] == 20
    assert cfg.system["kind"] == "diagonal" and cfg.system["a"] == [0.0]
    assert cfg.numerics == DEFAULT_NUMERICS and cfg.seed == 42
    b = build(cfg)
    assert b.diag is not None and b.grid.n_intervals == 20


def test_presets_parse_and_build():
    assert {"scalar-growth", "two-mode", "corollary-w1"} <= set(preset_names())
    for name in preset_names():
        cfg = parse_text(f"preset: {name}\n")
        build(cfg)
        assert cfg.raw["preset"] == name


def test_preset_override():
    cfg = parse_text("preset: corollary-w1\nnumerics: {tol: 1.0e-6}\ngrid: {intervals: 10}\n")
    assert cfg.numerics["tol"] == 1e-6 and cfg.numerics["seed"] == 42
    assert cfg.grid["intervals"] == 10 and cfg.grid["step"] == 1.0
    nested = load_preset("constant-eta")
    assert nested["system"]["a"] == [-1.0, 0.0]
    assert nested["perturbation"]["R"] == {"scaled_identity": 0.05}


def test_missing_grid():
    with pytest.raises(ValidationError) as exc:
        parse_text("system: {kind: scalar, a: 0, b: 1}\n")
    assert any(i.startswith("grid") for i in exc.value.issues)


def test_negative_tolerance():
    with pytest.raises(ValidationError) as exc:
        parse_text(MINIMAL + "numerics: {tol: -1.0e-9}\n")
    assert any("numerics.tol" in i for i in exc.value.issues)


def test_issues_are_aggregated():
    text = MINIMAL + "numerics: {tol: 0, max_iter: -3, contraction_target: 2, seed: x}\nextra: 1\n"
    with pytest.raises(ValidationError) as exc:
        parse_text(text)
    joined = "\n".join(exc.value.issues)
    for key in ("numerics.tol", "numerics.max_iter", "numerics.contraction_target",
                "numerics.seed", "extra"):
        assert key in joined


def test_parse_error_has_line(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("grid: {start: 0.0\nsystem: [\n")
    with pytest.raises(ParseError) as exc:
        parse_config(path)
    assert f"{path}:" in str(exc.value)
    with pytest.raises(ParseError):
        parse_config(tmp_path / "absent.yaml")
    with pytest.raises(ParseError):
        parse_text("- 1\n- 2\n")


def test_unknown_preset():
    with pytest.raises(ValidationError) as exc:
        parse_text("preset: nope\n")
    assert "nope" in exc.value.issues[0]


def test_coefficients():
    issues = []
    assert isinstance(parse_coef(0.5, "x", issues), Constant)
    assert parse_coef("1+2j", "x", issues)(0.0) == 1 + 2j
    assert isinstance(parse_coef({"linear": [1, 2]}, "x", issues), Linear)
    assert isinstance(parse_coef({"exp": [2.2, 1.0]}, "x", issues), ExpDecay)
    assert issues == []
    parse_coef({"cubic": [1]}, "x", issues)
    parse_coef("abc", "y", issues)
    assert len(issues) == 2


def test_bad_system_values():
    with pytest.raises(ValidationError):
        parse_text("grid: {start: 0, step: -1, intervals: 0}\nsystem: {kind: other}\n")
    cfg = parse_text(MINIMAL.replace("scalar, a: 0.0, b: 1.0", "diagonal, a: [0.0], b: [1.0]")
                     + "eigendirection: {k: 3}\n")
    with pytest.raises(ValidationError):
        build(cfg)


def test_nodes_grid():
    cfg = parse_text("grid: {nodes: [0, 0.5, 1.5, 3]}\nsystem: {kind: constant, A: [[0, 1], [-1, 0]]}\n")
    b = build(cfg)
    assert b.grid.n_intervals == 3 and b.diag is None and b.n == 2
    with pytest.raises(ValidationError):
        parse_text("grid: {nodes: [0, 2, 1]}\nsystem: {kind: scalar, a: 0, b: 0}\n")
