"""Command-line front end.

Subcommands ``solve``, ``convergence``, ``verify`` and ``rollout`` read a
flat key-value config (see :mod:`upwind_hjb.config`) and write CSV/JSON
artifacts into an output directory.  All files of a run are staged in a
temporary directory and moved into place only after the run succeeds.

Exit codes: 0 success, 1 property or numerical failure, 2 CFL refusal,
64 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from .analysis import convergence_study_lqr, self_convergence_study_2d
from .config import ConfigError, RunConfig, load_config
from .errors import CflViolation, InvalidArgument, NumericalFailure, OutOfRange
from .grid import extend_piecewise_constant
from .problems import exact_lqr_value, rollout
from .upwind import solve
from .verify import run_suite

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CFL = 2
EXIT_USAGE = 64

DEFAULT_OUT = "upwind_out"


class _UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def fmt(value: float) -> str:
    return "%.17g" % value


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Staging:
    """Files written here appear in ``target`` only on :meth:`commit`."""

    def __init__(self, target: Path):
        self.target = target
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.path = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.target.parent))
        self.names: list[str] = []

    def write_text(self, name: str, text: str) -> None:
        (self.path / name).write_text(text)
        self.names.append(name)

    def write_json(self, name: str, obj) -> None:
        self.write_text(name, json.dumps(_json_safe(obj), indent=2, allow_nan=False) + "\n")

    def write_csv(self, name: str, header: list[str], rows) -> None:
        lines = [",".join(header)]
        lines.extend(",".join(row) for row in rows)
        self.write_text(name, "\n".join(lines) + "\n")

    def commit(self) -> None:
        if not self.target.exists():
            os.replace(self.path, self.target)
            return
        for name in self.names:
            os.replace(self.path / name, self.target / name)
        shutil.rmtree(self.path, ignore_errors=True)

    def discard(self) -> None:
        shutil.rmtree(self.path, ignore_errors=True)


def _space_header(dim: int) -> list[str]:
    return ["x", "y"][:dim]


def _field_rows(nodes: np.ndarray, values: np.ndarray):
    flat_nodes = nodes.reshape(-1, nodes.shape[-1])
    flat_values = values.reshape(flat_nodes.shape[0], -1)
    for x, v in zip(flat_nodes, flat_values):
        yield [fmt(c) for c in x] + [fmt(c) for c in v]


def _slices(n_time: int, stride: int) -> list[int]:
    js = list(range(0, n_time + 1, stride))
    if js[-1] != n_time:
        js.append(n_time)
    return js


def _run_meta(cfg: RunConfig, command: str, grid, cfl, forced: bool, extra: dict | None = None) -> dict:
    meta = {
        "command": command,
        "problem": cfg.problem,
        "grid": grid.to_dict(),
        "cfl": cfl.to_dict(),
        "forced": forced,
        "seed": cfg.seed,
        "config": cfg.echo(),
    }
    if extra:
        meta.update(extra)
    return meta


def cmd_solve(cfg: RunConfig, stage: _Staging) -> int:
    problem = cfg.build_problem()
    grid = cfg.build_grid()
    result = solve(problem, grid, cfg.minimizer, force=cfg.force_cfl, workers=cfg.workers)
    nodes = grid.nodes()
    space = _space_header(grid.dim)
    m = problem.control_dim
    policy_cols = ["value"] if m == 1 else [f"value_{k}" for k in range(m)]
    slices = _slices(grid.n_time, cfg.stride)
    if "csv" in cfg.formats:
        for j in slices:
            stage.write_csv(f"value_t{j}.csv", space + ["value"], _field_rows(nodes, result.value[j]))
            stage.write_csv(f"policy_t{j}.csv", space + policy_cols, _field_rows(nodes, result.policy[j]))
    stage.write_json(
        "meta.json",
        _run_meta(cfg, "solve", grid, result.cfl, result.forced, {
            "minimizer": {
                "method": cfg.minimizer.method,
                "scan_points": cfg.minimizer.scan_points,
                "refine_tolerance": cfg.minimizer.refine_tolerance,
            },
            "stats": result.stats.to_dict(),
            "slices": slices,
        }),
    )
    print(f"solved {len(slices)} slices, alpha*sup|f| = {result.cfl.alpha_times_sup:.6g}")
    return EXIT_OK


def cmd_convergence(cfg: RunConfig, stage: _Staging) -> int:
    resolutions = cfg.study_resolutions()
    if len(resolutions) < 2:
        raise _UsageError("study.resolutions: a slope needs at least two resolutions")
    region = cfg.study_region()
    if cfg.problem == "lqr1d":
        if cfg.n_space is not None:
            raise _UsageError("convergence: give the grid as grid.alpha, not n_space/n_time")
        alpha = cfg.alpha if cfg.alpha is not None else 0.5
        report = convergence_study_lqr(
            resolutions, cfg.horizon, region,
            alpha=alpha, half_width=cfg.half_width, options=cfg.minimizer, workers=cfg.workers,
        )
    else:
        report = self_convergence_study_2d(
            resolutions, (cfg.reference_dx, cfg.reference_dt),
            dt_ratio=cfg.dt_ratio, horizon=cfg.horizon,
            params=cfg.build_problem_params(), region=region,
            options=cfg.minimizer, workers=cfg.workers,
        )
    rows = [
        [fmt(dx), fmt(dt), fmt(ev), fmt(ea)]
        for (dx, dt), ev, ea in zip(report.resolutions, report.errors_value, report.errors_input)
    ]
    if "csv" in cfg.formats:
        stage.write_csv("convergence.csv", ["dx", "dt", "err_value", "err_input"], rows)
    stage.write_json("orders.json", {
        "problem": cfg.problem,
        "fitted_order_value": report.fitted_order_value,
        "fitted_order_input": report.fitted_order_input,
        "measurement_region": report.measurement_region.to_dict(),
        "resolutions": [list(r) for r in report.resolutions],
        "sup_errors_value": report.sup_errors_value,
        "config": cfg.echo(),
    })
    print(f"order value {report.fitted_order_value:.4f}, order input {report.fitted_order_input:.4f}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, stage: _Staging) -> int:
    problem = cfg.build_problem()
    grid = cfg.build_grid()
    report = run_suite(problem, grid, trials=cfg.trials, seed=cfg.seed, options=cfg.minimizer, force=cfg.force_cfl)
    out = report.to_dict()
    out["config"] = cfg.echo()
    stage.write_json("verify_report.json", out)
    for p in report.properties:
        status = "skip" if p.skipped else ("pass" if p.passed else "FAIL")
        print(f"{status:4s} {p.name} trials={p.trials} worst_margin={p.worst_margin:.3e}")
    if not report.passed:
        failed = [p.name for p in report.properties if not p.passed]
        print(f"property failures: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_rollout(cfg: RunConfig, stage: _Staging) -> int:
    if cfg.x0 is None:
        raise _UsageError("rollout needs an initial state (--x0 or rollout.x0)")
    problem = cfg.build_problem()
    grid = cfg.build_grid()
    if len(cfg.x0) != grid.dim:
        raise _UsageError(f"x0 needs {grid.dim} coordinates")
    lo = -grid.half_width
    if any(not (lo <= c < grid.half_width) for c in cfg.x0):
        raise _UsageError(f"x0={list(cfg.x0)} outside the domain [{lo}, {grid.half_width})")
    result = solve(problem, grid, cfg.minimizer, force=cfg.force_cfl, workers=cfg.workers)
    traj = rollout(problem, result.policy, cfg.x0, grid)
    value0 = float(extend_piecewise_constant(result.value, grid, cfg.x0, 0.0))
    m = problem.control_dim
    a_cols = ["a"] if m == 1 else [f"a_{k}" for k in range(m)]
    rows = []
    for j, t in enumerate(traj.times):
        row = [fmt(t)] + [fmt(c) for c in traj.states[j]]
        if j < len(traj.controls):
            row += [fmt(c) for c in traj.controls[j]] + [fmt(traj.running_costs[j])]
        else:
            row += [""] * (m + 1)
        rows.append(row)
    stage.write_csv("trajectory.csv", ["t"] + _space_header(grid.dim) + a_cols + ["running_cost"], rows)
    summary = {"x0": list(cfg.x0), "total_cost": traj.total_cost, "value_at_x0": value0, "wrapped": traj.wrapped}
    print(f"total cost {fmt(traj.total_cost)}")
    print(f"V(x0, 0)   {fmt(value0)}")
    if cfg.problem == "lqr1d":
        exact = float(exact_lqr_value(cfg.x0[0], 0.0, cfg.horizon))
        summary["exact_value"] = exact
        print(f"exact v    {fmt(exact)}")
    if traj.wrapped:
        print("note: trajectory left the domain and was wrapped periodically", file=sys.stderr)
    stage.write_json("rollout.json", _run_meta(cfg, "rollout", grid, result.cfl, result.forced, summary))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "verify": cmd_verify,
    "rollout": cmd_rollout,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="upwind-hjb", description="Upwind finite-difference HJB solver and checks.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, help="seed for randomised checks (overrides seed)")
    parser.add_argument("--force-cfl", action="store_true", help="run even if the strict CFL condition fails")
    parser.add_argument("--workers", type=int, help="threads (overrides parallel.workers)")
    parser.add_argument("--x0", help="rollout initial state, comma separated (overrides rollout.x0)")
    return parser


def _apply_flags(cfg: RunConfig, args) -> None:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.force_cfl:
        cfg.force_cfl = True
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg.workers = args.workers
    if args.x0 is not None:
        try:
            cfg.x0 = tuple(float(p) for p in args.x0.split(","))
        except ValueError:
            raise ConfigError(f"--x0: expected comma-separated numbers, got {args.x0!r}") from None


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = load_config(args.config)
        _apply_flags(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or cfg.output_directory or DEFAULT_OUT)
    stage = _Staging(out)
    try:
        code = COMMANDS[args.command](cfg, stage)
    except (_UsageError, ConfigError, InvalidArgument, OutOfRange) as exc:
        stage.discard()
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CflViolation as exc:
        stage.discard()
        print(f"refused: {exc}; pass --force-cfl to run anyway", file=sys.stderr)
        return EXIT_CFL
    except NumericalFailure as exc:
        stage.discard()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except BaseException:
        stage.discard()
        raise
    # a failing property suite still leaves its report behind
    stage.commit()
    return code


if __name__ == "__main__":
    sys.exit(main())
