"""Command line front end.

    depcag-lab <command> --config <path> [--out <dir>] [--seed <int>]

Commands: simulate, cauchy, check, solve, example.  Exit status 0 on
success, 1 when a hypothesis check fails, 2 on configuration or numerical
failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .cauchy import check_invertibility
from .config import parse_config
from .diagonal import check_hinv, corollary_conditions, corollary_l1, corollary_run
from .errors import (DepcagError, MaxIterExceeded, NoContraction, ParseError, SingularD,
                     ValidationError, ZeroDenominator)
from .levinson import (asymptotic_report, check_l1, check_lipschitz, check_projection, find_n0,
                       fixed_point_solve, theta_profile, verify_dichotomy, verify_eigendirection)
from .reports import ConditionReport
from .scenario import build, forcing, initial_state, levinson_scenario
from .simulate import (SolutionTrace, fmt, integrate_direct, solve_homogeneous,
                       variation_of_constants)

EXIT_OK, EXIT_HYPOTHESIS, EXIT_NUMERIC = 0, 1, 2
COMMANDS = ("simulate", "cauchy", "check", "solve", "example")


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) if isinstance(v, float)
                              else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _summary(title: str, items) -> str:
    width = max(len(k) for k, _ in items)
    lines = [title, "=" * len(title)]
    for key, val in items:
        if isinstance(val, float):
            val = fmt(val)
        lines.append(f"{key:<{width}}  {val}")
    return "\n".join(lines) + "\n"


def _conditions(reports) -> str:
    lines = [r.line() for r in reports]
    failed = sum(not r.passed for r in reports)
    lines.append(f"{len(reports) - failed} passed, {failed} failed")
    return "\n".join(lines) + "\n"


def _matrix_cols(prefix, n):
    cols = []
    for i in range(n):
        for j in range(n):
            cols += [f"{prefix}_re_{i}{j}", f"{prefix}_im_{i}{j}"]
    return cols


def _matrix_vals(m):
    vals = []
    for z in np.asarray(m).ravel():
        vals += [float(z.real), float(z.imag)]
    return vals


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------
def cmd_simulate(cfg, out: Path) -> int:
    b = build(cfg)
    sim = cfg.simulate
    op = b.operator()
    start = float(sim.get("start", b.grid.t0))
    end = float(sim.get("end", b.grid.horizon))
    samples = int(sim.get("samples", 200))
    z0 = initial_state(b)
    f = forcing(b)
    times = np.linspace(start, end, samples)
    n0 = b.grid.locate_closed(start)
    if f is None:
        cauchy = solve_homogeneous(op, z0, start, end, times=times)
    else:
        vals = variation_of_constants(op, z0, n0, f, times)
        cauchy = SolutionTrace(times, vals, b.grid.locate_many(times))
    items = [("scenario", cfg.name), ("samples", str(samples)),
             ("forcing", "none" if f is None else f.name)]
    if b.grid.is_delayed:
        direct = integrate_direct(b.grid, b.A, b.B, z0, start, end, forcing=f, times=times)
        scale = np.maximum(1.0, np.linalg.norm(direct.values, axis=1))
        diff = float(np.max(np.linalg.norm(direct.values - cauchy.values, axis=1) / scale))
        trace = direct
        items += [("trace", "interval marching"), ("max_rel_diff_cauchy", diff)]
    else:
        trace = cauchy
        items += [("trace", "cauchy operator")]
    trace.to_csv(out / "trace.csv")
    _write(out, "summary.txt", _summary("simulate", items))
    return EXIT_OK


def cmd_cauchy(cfg, out: Path) -> int:
    b = build(cfg)
    op = b.operator(certify=False)
    rep = check_invertibility(op)
    _write(out, "conditions.txt", _conditions([rep]))
    if not rep.passed:
        _write(out, "summary.txt", _summary("cauchy", [("scenario", cfg.name), ("24a", "FAIL")]))
        return EXIT_HYPOTHESIS
    op = b.operator()
    g, n = b.grid, b.n
    rows = []
    for k in range(g.n_intervals + 1):
        H = _matrix_vals(op.H[k]) if k < g.n_intervals else [""] * (2 * n * n)
        rows.append([k, float(g.node(k))] + _matrix_vals(op.phi(k)) + H)
    text = _csv(["n", "t"] + _matrix_cols("phi", n) + _matrix_cols("H", n), rows)
    _write(out, "cauchy.csv", text)
    _write(out, "summary.txt", _summary("cauchy", [
        ("scenario", cfg.name), ("intervals", str(g.n_intervals)),
        ("phi_final_norm", float(np.linalg.norm(op.phi(g.n_intervals), 2)))]))
    return EXIT_OK


def run_checks(cfg) -> list[ConditionReport]:
    b = build(cfg)
    num = cfg.numerics
    pairs, seed = int(num["sample_pairs"]), int(num["seed"])
    op = b.operator(certify=False)
    reports = [check_invertibility(op)]
    if b.diag is not None:
        reports.append(check_hinv(b.diag, int(num["samples_per_interval"])))
    if not all(r.passed for r in reports):
        reports.append(ConditionReport("skipped", False, 0.0,
                                       "remaining checks need invertible D_n"))
        return reports
    op = b.operator()
    scn = levinson_scenario(b, op)
    reports.append(verify_eigendirection(scn.ed, op, pairs, seed))
    reports.append(check_projection(scn.dd, scn.ed))
    reports.extend(verify_dichotomy(scn.dd, scn.ed, op, pairs, seed))
    reports.append(check_lipschitz(scn.pert, b.grid, pairs, b.n, seed))
    reports.append(check_l1(scn))
    if b.diag is not None:
        cond = corollary_conditions(b.diag, pairs, seed)
        reports.extend(cond.reports)
        reports.append(corollary_l1(b.diag, b.R))
    try:
        n0 = find_n0(scn, float(num["contraction_target"]))
        _, th = theta_profile(scn, n0)
        reports.append(ConditionReport("contraction", True, float(th.max()),
                                       f"n0 = {n0}, sup Theta = {fmt(float(th.max()))}"))
    except NoContraction as exc:
        reports.append(ConditionReport("contraction", False, np.inf, str(exc)))
    return reports


def cmd_check(cfg, out: Path) -> int:
    reports = run_checks(cfg)
    _write(out, "conditions.txt", _conditions(reports))
    failed = [r.name for r in reports if not r.passed]
    _write(out, "summary.txt", _summary("check", [
        ("scenario", cfg.name), ("checks", str(len(reports))),
        ("failed", ", ".join(failed) if failed else "none")]))
    return EXIT_HYPOTHESIS if failed else EXIT_OK


def _write_solution(out, scn, state, report):
    state.trace.to_csv(out / "trace.csv")
    _write(out, "theta.csv", _csv(["t", "theta"], zip(map(float, report.times),
                                                       map(float, report.theta))))
    report.to_csv(out / "w_decay.csv")


def cmd_solve(cfg, out: Path) -> int:
    b = build(cfg)
    num = cfg.numerics
    scn = levinson_scenario(b)
    n0 = find_n0(scn, float(num["contraction_target"]))
    state = fixed_point_solve(scn, n0, float(num["tol"]), int(num["max_iter"]))
    report = asymptotic_report(scn, state)
    _write_solution(out, scn, state, report)
    _write(out, "summary.txt", _summary("solve", [
        ("scenario", cfg.name), ("n0", str(n0)), ("M", float(scn.dd.M)),
        ("theta_sup", float(report.theta.max())), ("iterations", str(state.iterations)),
        ("final_step", float(state.history[-1])), ("y_norm", float(report.y_norm)),
        ("bound_holds", str(report.bound_ok)), ("worst_bound_ratio", report.worst_bound_ratio),
        ("w_first_decile_max", report.first_decile_max),
        ("w_last_decile_max", report.last_decile_max), ("decay", str(report.decay_ok))]))
    return EXIT_OK if report.passed else EXIT_HYPOTHESIS


def cmd_example(cfg, out: Path) -> int:
    b = build(cfg)
    if b.diag is None:
        raise ValidationError(["system: the example command needs a diagonal system on a delayed grid"])
    hinv = check_hinv(b.diag)
    if not hinv.passed:
        _write(out, "conditions.txt", _conditions([hinv]))
        return EXIT_HYPOTHESIS
    res = corollary_run(b.diag, b.R, b.settings())
    report = res.report
    _write_solution(out, res.scenario, res.state, report)
    reports = [hinv] + res.conditions.reports + [res.extras["l1"]]
    _write(out, "conditions.txt", _conditions(reports))
    _write(out, "summary.txt", _summary("example", [
        ("scenario", cfg.name), ("k", str(b.diag.k)), ("n0", str(res.n0)),
        ("M", float(res.scenario.dd.M)), ("C", float(res.conditions.C)),
        ("theta_sup", res.theta_sup), ("iterations", str(res.state.iterations)),
        ("residual_max", res.residual), ("direct_match", res.direct_error),
        ("closed_form_w_diff", res.closed_form_error),
        ("bound_holds", str(report.bound_ok)),
        ("w_first_decile_max", report.first_decile_max),
        ("w_last_decile_max", report.last_decile_max), ("decay", str(report.decay_ok))]))
    ok = res.passed and all(r.passed for r in reports)
    return EXIT_OK if ok else EXIT_HYPOTHESIS


HANDLERS = {"simulate": cmd_simulate, "cauchy": cmd_cauchy, "check": cmd_check,
            "solve": cmd_solve, "example": cmd_example}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="depcag-lab",
                                description="Numerical lab for linear DEPCAGs and their "
                                            "Levinson-type asymptotics.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="scenario file (YAML)")
    p.add_argument("--out", default=None, help="output directory (default: config 'output' or ./depcag-out)")
    p.add_argument("--seed", type=int, default=None, help="override numerics.seed")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ValidationError(["--seed: must be non-negative"])
            cfg.numerics["seed"] = args.seed
        out = Path(args.out or cfg.output or "depcag-out")
        out.mkdir(parents=True, exist_ok=True)
        code = HANDLERS[args.command](cfg, out)
    except ValidationError as exc:
        for issue in exc.issues:
            print(f"config error: {issue}", file=sys.stderr)
        return EXIT_NUMERIC
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NoContraction, SingularD, ZeroDenominator) as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (MaxIterExceeded, DepcagError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"{args.command}: {'ok' if code == EXIT_OK else 'hypothesis failure'} ({out})")
    return code


if __name__ == "__main__":
    sys.exit(main())
