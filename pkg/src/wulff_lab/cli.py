"""``wulff-lab geom|solve|verify --config <path> [--out <dir>] [--seed <u64>]``.

Exit codes: 0 success, 2 configuration or validation error, 3 isoperimetric
inequality violated, 4 solver did not converge, 5 a diagnostic is out of
tolerance.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .cones import GeometryError
from .config import ConfigError, RunConfig, load_config, parse_seed
from .diagnostics import (
    TABLE_HEADER,
    DiagnosticsError,
    distribution_table,
    summarize,
)
from .isoperimetry import isoperimetric_suite
from .levelsets import EmptyLevelError, extract_level_set
from .mesh import MeshError, generate_mesh, load_mesh, save_mesh
from .report import write_contour_svg, write_csv, write_json
from .solver import (
    ConvergenceError,
    Solution,
    load_solution_csv,
    save_solution_csv,
    solve,
    weak_residual,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GEOMETRY = 3
EXIT_SOLVER = 4
EXIT_DIAGNOSTICS = 5


def _out_dir(cfg: RunConfig, override: Optional[str]) -> Path:
    d = Path(override) if override else Path(cfg.output.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_geom(cfg: RunConfig, out: Path) -> int:
    pr, dg = cfg.problem, cfg.diagnostics
    suite = isoperimetric_suite(pr.H, pr.w, pr.cone, n_sets=dg.n_random_sets, seed=dg.seed,
                                max_amplitude=dg.amplitude)
    c = suite.constant
    worst = suite.worst_margin if suite.reports else None
    report = {
        "constant": c,
        "D": pr.D,
        "wulff": suite.wulff.to_json(),
        "n_sets": len(suite.reports),
        "worst_margin": worst,
        "violations": suite.violations,
        "certified_case": suite.wulff.certified_case,
        "seed": dg.seed,
    }
    if "json" in cfg.output.formats:
        write_json(out / "geom.json", report)
    if "csv" in cfg.output.formats:
        rows = []
        for i, r in enumerate(suite.reports):
            cx, cy = r.ball.center if r.ball else (np.nan, np.nan)
            rows.append([i, r.quotient, r.margin, r.deviation if r.deviation is not None else np.nan,
                         cx, cy, r.ball.radius if r.ball else np.nan])
        write_csv(out / "geom_sets.csv", ["index", "quotient", "margin", "deviation",
                                          "center_x", "center_y", "radius"], rows)
    print(f"optimal constant c = {c!r}")
    if worst is not None:
        print(f"worst margin over {len(suite.reports)} sets = {worst!r}")
    if suite.violations:
        print(f"isoperimetric inequality violated for sets {suite.violations}", file=sys.stderr)
        return EXIT_GEOMETRY
    return EXIT_OK


def _solve(cfg: RunConfig, out: Path) -> tuple[Solution, int]:
    pr = cfg.problem
    mesh = generate_mesh(pr.cone, pr.H, pr.R, cfg.mesh.h, grading=cfg.mesh.grading)
    code = EXIT_OK
    try:
        sol = solve(pr, mesh, cfg.solver)
    except ConvergenceError as exc:
        print(f"solver: {exc}", file=sys.stderr)
        sol, code = exc.solution, EXIT_SOLVER
    save_mesh(out, mesh)
    save_solution_csv(out / "solution.csv", sol)
    res = weak_residual(pr, mesh, sol)
    info = {"M": sol.M, "min_u": float(sol.u.min()), "iterations": sol.iterations,
            "outer_iterations": sol.outer_iterations, "energy": sol.energy, "eps": sol.eps,
            "gradient_norm": sol.grad_norm, "weak_residual": res, "converged": sol.converged,
            "vertex_grad_max": sol.vertex_grad_max, "n_vertices": mesh.n_vertices,
            "n_triangles": len(mesh.triangles), "min_angle": mesh.min_angle(), "h": mesh.h}
    write_json(out / "solve.json", info)
    print(f"M = {sol.M!r}")
    print(f"iterations = {sol.iterations}")
    print(f"weak residual = {res!r}")
    return sol, code


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    _, code = _solve(cfg, out)
    return code


def cmd_verify(cfg: RunConfig, out: Path, solution_dir: Optional[str] = None) -> int:
    pr, dg = cfg.problem, cfg.diagnostics
    if solution_dir:
        src = Path(solution_dir)
        try:
            mesh = load_mesh(src, cfg.mesh.h, pr.R)
            sol = load_solution_csv(src / "solution.csv", mesh)
        except (ValueError, IndexError, KeyError) as exc:
            raise ConfigError(f"cannot load solution from {src}: {exc}") from exc
    else:
        sol, code = _solve(cfg, out)
        if code != EXIT_OK:
            return code
    table = distribution_table(pr, sol, n_levels=dg.n_levels, seed=dg.seed)
    summary = summarize(pr, sol, table, tolerances=dg.tolerances)
    if "csv" in cfg.output.formats:
        write_csv(out / "levels.csv", TABLE_HEADER, table.rows())
    if "json" in cfg.output.formats:
        data = dict(summary.values)
        data["failures"] = summary.failures
        data["passed"] = summary.passed
        data["tolerances"] = dg.tolerances
        write_json(out / "summary.json", data)
    if "svg" in cfg.output.formats:
        lines = []
        for k, t in enumerate(table.t[::4]):
            try:
                lv = extract_level_set(sol.mesh, sol.u, float(t))
            except EmptyLevelError:
                continue
            frac = k / max(1, len(table.t[::4]) - 1)
            for n in range(len(lv.polylines)):
                lines.append((frac, lv.polyline_points(n), lv.closed[n]))
        write_contour_svg(out / "contours.svg", sol.mesh, lines)
    v = summary.values
    for key in ("pohozaev", "gauss_green_max", "holder_worst", "quotient_worst", "grad_cv_max",
                "K_increment_max", "center_drift"):
        print(f"{key} = {v[key]!r}")
    if summary.failures:
        print("diagnostics out of tolerance: " + ", ".join(summary.failures), file=sys.stderr)
        return EXIT_DIAGNOSTICS
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wulff-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("geom", "isoperimetric suite for the configured norm/weight/cone"),
                           ("solve", "mesh and solve the boundary value problem"),
                           ("verify", "solve (or load) and run all level-set diagnostics")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", help="64-bit seed (overrides diagnostics.seed)")
        if name == "verify":
            p.add_argument("--solution", help="directory with mesh CSVs and solution.csv to "
                                              "verify instead of solving")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            try:
                cfg.diagnostics.seed = parse_seed(int(args.seed))
            except ValueError as exc:
                raise ConfigError(f"invalid seed {args.seed!r}") from exc
        out = _out_dir(cfg, args.out)
        if args.command == "geom":
            return cmd_geom(cfg, out)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        return cmd_verify(cfg, out, args.solution)
    except (ConfigError, MeshError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DiagnosticsError, EmptyLevelError) as exc:
        print(f"diagnostics failed: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
