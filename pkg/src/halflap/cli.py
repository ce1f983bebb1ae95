"""Command-line entry points.

    halflap operator-check  [--config PATH] [--out DIR]
    halflap validate-model  [--config PATH] [--out DIR] [--problem P|Q]
    halflap critical-level  [--config PATH] [--out DIR] [--problem P|Q] [--workers N]
    halflap solve --problem P|Q [--config PATH] [--out DIR] [--seed S] [--workers N]

Every command writes ``<out>/<command>.json``.  Wall-clock timings go to a
separate ``<out>/<command>.timing.json`` so that the report itself is
byte-identical across reruns.  Exit codes: 0 success, 1 numerical failure
or failed check, 2 configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from typing import List, Optional, Tuple

import numpy as np

from . import config as cfgmod
from .config import RunConfig
from .energy import EnergyContext, lambda_1
from .errors import ConfigError, ConvergenceError, HalflapError, MagnitudeError
from .grid_spectral import (Grid1D, extension_dtn_check, frac_laplacian, multiplier,
                            singular_integral_oracle)
from .model import validate_assumptions
from .moser_trudinger import MoserFamily, moser_center_sq, mt_functional, ozawa_ratio
from .report import artifact_version, write_csv, write_json
from .solvers import (critical_level_verdict, lions_exponent, mountain_pass, negative_endpoint,
                      nehari_minimize)

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2


def _envelope(command: str, cfg: RunConfig, results: dict, passed: bool) -> dict:
    return {"command": command, "version": artifact_version(), "config": cfg.to_dict(),
            "passed": bool(passed), "results": results}


def _grid_block(grid: Grid1D) -> dict:
    return {"L": grid.half_length, "N": grid.n_points, "dx": grid.dx}


# -- operator check -----------------------------------------------------------

def cmd_operator_check(cfg: RunConfig, out: str) -> int:
    """Multiplier against exact modes, the real-space oracle and the extension DtN map."""
    grid = cfg.make_grid()
    x = grid.x
    checks = []
    # exact eigenfunctions cos(xi x) for admissible xi, both orders
    for j in sorted({1, 3, max(1, grid.n_points // 16), max(1, grid.n_points // 4)}):
        xi = math.pi * j / grid.half_length
        if not grid.is_admissible(xi):
            continue
        u = grid.sample(lambda t: np.cos(xi * t))
        for s in (0.5, 0.25):
            got = frac_laplacian(u, s).values
            want = xi ** (2 * s) * u.values
            err = float(np.max(np.abs(got - want)) / np.max(np.abs(want)))
            checks.append({"name": f"mode_j{j}_s{s}", "error": err, "tol": 1e-10, "passed": err <= 1e-10})
    # analytic Gaussian through the oracle against the multiplier on the grid
    gauss = lambda t: np.exp(-np.asarray(t, dtype=float) ** 2)
    mult = frac_laplacian(grid.sample(gauss), 0.5).values
    pts = [0.0, 0.5, 1.0, 2.0]
    idx = [int(np.argmin(np.abs(x - p))) for p in pts]
    oracle_err = 0.0
    note = ""
    try:
        ref = np.array([singular_integral_oracle(gauss, float(x[i]), grid=grid) for i in idx])
        oracle_err = float(np.max(np.abs(mult[idx] - ref)) / np.max(np.abs(ref)))
    except HalflapError as exc:
        oracle_err, note = math.inf, str(exc)
    checks.append({"name": "oracle_gaussian", "error": oracle_err, "tol": 1e-6,
                   "passed": oracle_err <= 1e-6, "points": [float(x[i]) for i in idx], "note": note})
    # extension Dirichlet-to-Neumann value against the symbol
    sym = multiplier(grid, 0.5)
    dtn_err = 0.0
    for j in (0, 1, 7, grid.n_points // 2):
        xi = float(grid.rwavenumbers[j])
        dtn_err = max(dtn_err, abs(extension_dtn_check(xi) - sym[j]) / max(1.0, xi))
    checks.append({"name": "dtn_vs_symbol", "error": dtn_err, "tol": 1e-12, "passed": dtn_err <= 1e-12})
    passed = all(c["passed"] for c in checks)
    write_json(os.path.join(out, "operator-check.json"),
               _envelope("operator-check", cfg, {"grid": _grid_block(grid), "checks": checks}, passed))
    return EXIT_OK if passed else EXIT_NUMERICAL


# -- model validation ---------------------------------------------------------

def cmd_validate_model(cfg: RunConfig, out: str, problem: Optional[str] = None) -> int:
    problem = problem or cfg.model.problem
    rep = validate_assumptions(cfg.make_model(problem))
    write_json(os.path.join(out, "validate-model.json"),
               _envelope("validate-model", cfg, {"problem": problem, **rep.to_dict()}, rep.passed))
    return EXIT_OK if rep.passed else EXIT_NUMERICAL


# -- critical level -----------------------------------------------------------

def cmd_critical_level(cfg: RunConfig, out: str, problem: Optional[str] = None) -> int:
    problem = problem or cfg.model.problem
    which = "I" if problem == "P" else "J"
    model = cfg.make_model(problem)
    mgrid = cfg.make_moser_grid()
    ctx = EnergyContext(mgrid, model)
    verdict = critical_level_verdict(ctx, list(cfg.experiment.k_list), which, workers=cfg.output.workers)
    write_csv(os.path.join(out, "critical-level.csv"),
              ["k", "t_star", "value", "threshold", "margin", "t_star_sq", "t_star_sq_minus_pi",
               "derivative_residual"],
              [[r.k, r.t_star, r.value, r.threshold, r.margin, r.t_star_sq, r.t_star_sq_minus_pi,
                r.derivative_residual] for r in verdict.rows])
    mt_rows, oz_rows = [], []
    for k in cfg.experiment.k_list:
        phi = MoserFamily(k).normalized_trace(mgrid, model.potential)
        for alpha in cfg.experiment.alpha_list:
            try:
                mt_rows.append([k, alpha, mt_functional(phi, alpha), "ok"])
            except MagnitudeError:
                mt_rows.append([k, alpha, None, "overflow"])
        for q in cfg.experiment.q_list:
            oz_rows.append([k, q, ozawa_ratio(phi, q)])
    write_csv(os.path.join(out, "mt-sweep.csv"), ["k", "alpha", "value", "status"], mt_rows)
    write_csv(os.path.join(out, "ozawa.csv"), ["k", "q", "ratio"], oz_rows)
    # empirical size of the bounded term in phi_k(0)^2 = log(k) / pi + O(1)
    band = {str(k): moser_center_sq(k, model.potential) - math.log(k) / math.pi for k in cfg.experiment.k_list}
    lam, _ = lambda_1(EnergyContext(cfg.make_grid(), model))
    results = {"problem": problem, "moser_grid": _grid_block(mgrid), **verdict.to_dict(),
               "center_sq_minus_log_k_over_pi": band,
               "lambda_1": lam, "lambda_1_grid": _grid_block(cfg.make_grid()),
               "files": ["critical-level.csv", "mt-sweep.csv", "ozawa.csv"]}
    write_json(os.path.join(out, "critical-level.json"),
               _envelope("critical-level", cfg, results, verdict.verdict))
    return EXIT_OK if verdict.verdict else EXIT_NUMERICAL


# -- solve --------------------------------------------------------------------

def cmd_solve(cfg: RunConfig, out: str, problem: Optional[str] = None) -> int:
    problem = problem or cfg.model.problem
    which = "I" if problem == "P" else "J"
    s = cfg.solver
    grid = cfg.make_grid()
    ctx = EnergyContext(grid, cfg.make_model(problem))
    results = {"problem": problem, "grid": _grid_block(grid)}
    try:
        e = negative_endpoint(ctx, which)
        mp = mountain_pass(ctx, which, e, path_points=s.path_points, tol=s.tol)
        dg = mp.diagnostics
        ok = dg["weak_residual"] <= s.residual_tol and dg["positive"]
        results["mountain_pass"] = {k: v for k, v in mp.to_dict().items() if k != "history"}
        results["level"] = mp.level
        if which == "J":
            rng = np.random.default_rng(cfg.output.seed)
            nm = nehari_minimize(ctx, s.restarts, which, tol=s.tol, rng=rng, workers=cfg.output.workers,
                                 max_iter=s.max_iter)
            results["nehari_level"] = nm.nehari_level
            results["nehari_restart_levels"] = nm.diagnostics["restart_levels"]
            results["level_le_nehari"] = bool(mp.level <= nm.nehari_level + 1e-4)
            results["norm_dominance"] = {"margin": dg["norm_dominance_margin"], "holds": bool(dg["norm_dominance_margin"] >= -s.tol)}
            ok = ok and results["level_le_nehari"] and results["norm_dominance"]["holds"]
        nsq = mp.norm_limit**2
        results["norm_limit"] = mp.norm_limit
        results["lions_exponent"] = lions_exponent(nsq) if nsq < 1 else None
        write_csv(os.path.join(out, "solution.csv"), ["x", "u"], zip(grid.x.tolist(), mp.solution.values.tolist()))
        write_csv(os.path.join(out, "history.csv"), ["iteration", "energy", "dual_norm"],
                  [[i, a, b] for i, (a, b) in enumerate(mp.history)])
    except ConvergenceError as exc:
        hist = list(getattr(exc, "history", None) or [])
        write_csv(os.path.join(out, "history.csv"), ["iteration", "energy", "dual_norm"],
                  [[i, a, b] for i, (a, b) in enumerate(hist)])
        results["error"] = {"type": type(exc).__name__, "message": str(exc),
                            "iterations": len(hist), "history_file": "history.csv"}
        write_json(os.path.join(out, "solve.json"), _envelope("solve", cfg, results, False))
        return EXIT_NUMERICAL
    write_json(os.path.join(out, "solve.json"), _envelope("solve", cfg, results, ok))
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {
    "operator-check": cmd_operator_check,
    "validate-model": cmd_validate_model,
    "critical-level": cmd_critical_level,
    "solve": cmd_solve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halflap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file (defaults apply to missing keys)")
        p.add_argument("--out", help="output directory (overrides [output] out)")
        p.add_argument("--seed", type=int, help="random seed for multistart")
        p.add_argument("--workers", type=int, help="worker threads for sweeps and restarts")
        if name != "operator-check":
            p.add_argument("--problem", choices=("P", "Q"), required=(name == "solve"))
    return parser


def _resolve(args) -> RunConfig:
    cfg = cfgmod.load(args.config) if args.config else RunConfig()
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    if changes:
        cfg = cfg.replace("output", **changes)
    return cfg


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"halflap: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg.output.out
    os.makedirs(out, exist_ok=True)
    func = COMMANDS[args.command]
    kwargs = {"problem": args.problem} if args.command != "operator-check" else {}
    start = time.perf_counter()
    try:
        code = func(cfg, out, **kwargs)
    except HalflapError as exc:
        print(f"halflap: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    write_json(os.path.join(out, f"{args.command}.timing.json"),
               {"command": args.command, "seconds": time.perf_counter() - start, "exit_code": code})
    print(f"{args.command}: exit {code} (report in {out})")
    return code


if __name__ == "__main__":
    sys.exit(main())
