import numpy as np
import pytest

from depcag_lab.cli import main


def run(tmp_path, cmd, text, name="cfg.yaml", out="out", extra=()):
    cfg = tmp_path / name
    cfg.write_text(text)
    return main([cmd, "--config", str(cfg), "--out", str(tmp_path / out), *extra])


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), np.array([[float(x) if x else np.nan for x in l.split(",")]
                                          for l in lines[1:]])


def test_check_scalar_growth(tmp_path):
    assert run(tmp_path, "check", "preset: scalar-growth\n") == 0
    text = (tmp_path / "out" / "conditions.txt").read_text()
    assert "0 failed" in text and "24a" in text and "hinv" in text


def test_check_negative_controls(tmp_path):
    for preset in ("hinv-violation", "constant-eta", "bad-eigendirection"):
        assert run(tmp_path, "check", f"preset: {preset}\n", out=preset) == 1
    assert "FAIL" in (tmp_path / "hinv-violation" / "conditions.txt").read_text()


def test_solve_w1(tmp_path):
    assert run(tmp_path, "solve", "preset: corollary-w1\n") == 0
    out = tmp_path / "out"
    for name in ("trace.csv", "theta.csv", "w_decay.csv", "summary.txt"):
        assert (out / name).exists()
    header, data = read_csv(out / "w_decay.csv")
    assert header == ["t", "abs_w", "theta_bound"]
    assert np.all(np.diff(data[:, 0]) > 0)
    assert np.all(data[:, 1] <= data[:, 2] * (1 + 1e-6) + 1e-12)
    summary = (out / "summary.txt").read_text()
    assert "n0" in summary and "bound_holds" in summary


def test_simulate_and_cauchy(tmp_path):
    assert run(tmp_path, "simulate", "preset: two-mode\nsimulate: {forcing: {kind: sine, omega: 2}}\n") == 0
    header, data = read_csv(tmp_path / "out" / "trace.csv")
    assert header[:2] == ["t", "interval"] and data.shape == (200, 6)
    assert run(tmp_path, "cauchy", "preset: scalar-growth\n", out="c") == 0
    header, data = read_csv(tmp_path / "c" / "cauchy.csv")
    assert header[:4] == ["n", "t", "phi_re_00", "phi_im_00"]
    np.testing.assert_allclose(data[:, 2], 2.0 ** np.arange(21), rtol=1e-12)
    assert run(tmp_path, "cauchy", "preset: hinv-violation\n", out="h") == 1


def test_example_w1(tmp_path):
    assert run(tmp_path, "example", "preset: corollary-w1\n") == 0
    assert "corollary-b" in (tmp_path / "out" / "conditions.txt").read_text()


def test_exit_codes_for_bad_input(tmp_path, capsys):
    assert run(tmp_path, "check", "grid: {start: 0\n") == 2
    assert "parse error" in capsys.readouterr().err
    assert run(tmp_path, "check", "system: {kind: scalar, a: 0, b: 1}\n") == 2
    assert "config error: grid" in capsys.readouterr().err
    assert main(["check", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert run(tmp_path, "example", "preset: scalar-growth\ngrid: {xi: midpoint}\n") == 2
    with pytest.raises(SystemExit):
        main(["frobnicate", "--config", "x"])


def test_no_contraction_exit(tmp_path):
    text = "preset: corollary-w1\nperturbation: {R: {scaled_identity: 1.0}}\n"
    assert run(tmp_path, "solve", text) == 1


def test_deterministic_outputs(tmp_path):
    for out in ("a", "b"):
        assert run(tmp_path, "solve", "preset: corollary-w1\n", out=out, extra=("--seed", "7")) == 0
        assert run(tmp_path, "simulate", "preset: corollary-w1\n", out=out + "s") == 0
    for name in ("trace.csv", "theta.csv", "w_decay.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "as" / "trace.csv").read_bytes() == (tmp_path / "bs" / "trace.csv").read_bytes()
