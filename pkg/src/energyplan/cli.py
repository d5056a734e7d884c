"""Command-line front end.

Subcommands: ``plan``, ``gen-env``, ``bench``, ``validate`` and ``export``.
Options may also come from a JSON config file (``--config``) whose keys are
the long option names with dashes turned into underscores; explicit flags
win over the file. Every command that writes files also writes a run
manifest holding the fully resolved options, and passing that manifest back
through ``--config`` repeats the run.

Exit codes: 0 success, 2 invalid input, 3 planning or generation failure,
4 prefix-queue overflow.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchConfig, run_benchmark, write_outputs, write_text
from .bvp import ChainSolution
from .envgen import EnvGenConfig, GenerationFailure, corridor_fixture, generate
from .geometry import (BoundaryConditions, InvalidEnvironment, PolygonEnvironment, dumps_exact,
                       inflate_environment)
from .planner import DEFAULT_QUEUE_CAP, OVERFLOW, plan
from .svg import BASELINE_STROKES, TRAJECTORY_STROKE, render
from .trajectory import Trajectory

log = logging.getLogger("energyplan")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3
EXIT_OVERFLOW = 4

MANIFEST = "run_manifest.json"

PLAN_DEFAULTS = {
    "env": None, "p0": [0.5, 0.5], "pf": [9.5, 9.5], "v0": [0.0, 0.0], "vf": [0.0, 0.0],
    "t0": 0.0, "tf": 10.0, "radius": 0.0, "mode": "distance", "queue_cap": DEFAULT_QUEUE_CAP,
    "rate": 1000.0, "compare_suffix": False, "warm_start": True, "timing": True,
}
GEN_DEFAULTS = {
    "seed": 0, "fixture": "random", "domain": 10.0, "points": 50, "clusters": 12,
    "endpoint_clearance": 1.0, "radius": 0.1, "max_attempts": 200,
}
BENCH_DEFAULTS = BenchConfig().to_dict()
EXPORT_DEFAULTS = {"trajectory": None, "env": None, "rate": 1000.0}
VALIDATE_DEFAULTS = {"env": None, "radius": 0.0, "p0": None, "pf": None}


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


# -- input helpers ----------------------------------------------------------

def read_json(path) -> object:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_environment(path) -> PolygonEnvironment:
    if path is None:
        return PolygonEnvironment.empty()
    data = read_json(path)
    if not isinstance(data, dict):
        raise InputError(f"{path}: environment must be a JSON object")
    try:
        return PolygonEnvironment.from_dict(data)
    except (InvalidEnvironment, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Defaults, then config file, then explicit flags."""
    opts = dict(defaults)
    if getattr(args, "config", None):
        data = read_json(args.config)
        if isinstance(data, dict) and "config" in data and "command" in data:
            data = data["config"]
        if not isinstance(data, dict):
            raise InputError(f"{args.config}: config must be a JSON object")
        unknown = sorted(set(data) - set(defaults))
        if unknown:
            raise InputError(f"{args.config}: unknown option(s) {', '.join(unknown)}")
        opts.update(data)
    for key in defaults:
        if hasattr(args, key):
            opts[key] = getattr(args, key)
    return opts


def manifest(command: str, config: dict, outputs: list, stats: dict, seeds=None) -> str:
    return dumps_exact({
        "tool": "energyplan", "version": __version__, "command": command,
        "config": config, "seeds": seeds or {}, "outputs": outputs, "stats": stats,
    }) + "\n"


# -- plan -------------------------------------------------------------------

def _solution_stats(sol: ChainSolution | None) -> dict:
    if sol is None:
        return {}
    traj = sol.trajectory
    gaps = traj.junction_gaps()
    return {
        "junction_points": sol.problem.points.tolist(),
        "trajectory_energy": traj.energy(),
        "max_residual": sol.residual,
        "converged": bool(sol.converged),
        "newton_iterations": sol.iterations,
        "max_continuity_gap": float(gaps.max()) if len(gaps) else 0.0,
    }


def cmd_plan(args) -> int:
    opts = resolve(args, PLAN_DEFAULTS)
    out = Path(args.out)
    env = load_environment(opts["env"])
    try:
        bc = BoundaryConditions(p0=opts["p0"], pf=opts["pf"], t0=opts["t0"], tf=opts["tf"],
                                v0=opts["v0"], vf=opts["vf"], radius=opts["radius"])
        planning_env = inflate_environment(env, opts["radius"])
    except (ValueError, InvalidEnvironment) as exc:
        raise InputError(str(exc)) from None

    out.mkdir(parents=True, exist_ok=True)
    trace_file = open(args.trace, "w") if getattr(args, "trace", None) else None

    def trace(rec):
        trace_file.write(dumps_exact(rec, indent=None) + "\n")

    kwargs = dict(queue_cap=opts["queue_cap"], warm_start=opts["warm_start"],
                  timing=opts["timing"], trace=trace if trace_file else None)
    try:
        try:
            result = plan(planning_env, bc, opts["mode"], **kwargs)
            suffix = plan(planning_env, bc, "suffix", **kwargs) if opts["compare_suffix"] else None
        except ValueError as exc:
            raise InputError(str(exc)) from None
    finally:
        if trace_file:
            trace_file.close()

    stats = result.summary()
    stats.update(_solution_stats(result.solution))
    if suffix is not None:
        stats["suffix"] = {**suffix.summary(), **_solution_stats(suffix.solution)}
    files = ["stats.json"]
    if result.success:
        traj = result.trajectory
        write_text(out / "trajectory.csv", traj.to_csv(opts["rate"]))
        write_text(out / "trajectory.json", traj.to_json() + "\n")
        paths = [(traj.sample(opts["rate"])[:, 1:3], TRAJECTORY_STROKE)]
        if suffix is not None and suffix.success:
            paths.append((suffix.trajectory.sample(opts["rate"])[:, 1:3], BASELINE_STROKES[1]))
        junctions = result.solution.problem.points
        write_text(out / "plan.svg", render(planning_env, paths, bc.p0, bc.pf, junctions))
        files = ["trajectory.csv", "trajectory.json", "plan.svg"] + files
    write_text(out / "stats.json", dumps_exact(stats) + "\n")
    write_text(out / MANIFEST, manifest("plan", opts, files, stats))

    print(f"status={result.status} mode={result.mode} sequence={list(result.sequence)} "
          f"cost={stats['cost']} distance={stats['distance']}")
    if result.status == OVERFLOW:
        return EXIT_OVERFLOW
    return EXIT_OK if result.success else EXIT_FAILED


# -- gen-env ------------------------------------------------------------------

def cmd_gen_env(args) -> int:
    opts = resolve(args, GEN_DEFAULTS)
    out = Path(args.out)
    if opts["fixture"] == "corridor":
        env = corridor_fixture()
    elif opts["fixture"] == "random":
        try:
            cfg = EnvGenConfig(seed=opts["seed"], domain=opts["domain"], points=opts["points"],
                               clusters=opts["clusters"], radius=opts["radius"],
                               endpoint_clearance=opts["endpoint_clearance"],
                               max_attempts=opts["max_attempts"])
        except ValueError as exc:
            raise InputError(str(exc)) from None
        try:
            env = generate(cfg)
        except GenerationFailure as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILED
    else:
        raise InputError(f"unknown fixture {opts['fixture']!r}")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_text(out, env.to_json() + "\n")
    stats = {"polygons": len(env.polygons), "vertices": env.n_vertices}
    write_text(out.with_name(out.stem + ".manifest.json"),
               manifest("gen-env", opts, [out.name], stats, {"environment": opts["seed"]}))
    print(f"wrote {out} ({stats['polygons']} polygons, {stats['vertices']} vertices)")
    return EXIT_OK


# -- bench ------------------------------------------------------------------

def cmd_bench(args) -> int:
    opts = resolve(args, BENCH_DEFAULTS)
    try:
        cfg = BenchConfig(**opts)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out)
    outcomes = run_benchmark(cfg)
    info = write_outputs(out, cfg, outcomes)
    stats = {"summary": info["summary"], "notes": info["notes"]}
    seeds = {"root": cfg.seed, "environments": info["environment-seeds"]}
    write_text(out / MANIFEST, manifest("bench", cfg.to_dict(), info["files"], stats, seeds))
    summary = info["summary"]
    print(f"environments={summary['environments']} solved-by-any={summary['solved-by-any']} "
          f"planner-missed={len(summary['planner-missed'])}")
    for m, s in summary["methods"].items():
        print(f"  {m}: successes={s['successes']}/{s['runs']} p90-wall-ms={s['p90-wall-ms']}")
    return EXIT_OK


# -- validate -----------------------------------------------------------------

def cmd_validate(args) -> int:
    opts = resolve(args, VALIDATE_DEFAULTS)
    if opts["env"] is None:
        raise InputError("validate needs an environment file")
    env = load_environment(opts["env"])
    try:
        planning_env = inflate_environment(env, opts["radius"])
    except (ValueError, InvalidEnvironment) as exc:
        raise InputError(f"{opts['env']}: {exc}") from None
    for name in ("p0", "pf"):
        if opts[name] is not None and not planning_env.point_free(opts[name]):
            raise InputError(f"{opts['env']}: {name} {list(opts[name])} is not in free space")
    reflex = int(np.count_nonzero(~env.convex))
    print(f"ok: {len(env.polygons)} polygons, {env.n_vertices} vertices, {env.n_faces} faces, "
          f"{reflex} reflex vertices, clearance {env.clearance:g} m")
    return EXIT_OK


# -- export -----------------------------------------------------------------

def cmd_export(args) -> int:
    opts = resolve(args, EXPORT_DEFAULTS)
    if opts["trajectory"] is None:
        raise InputError("export needs a trajectory file")
    data = read_json(opts["trajectory"])
    try:
        traj = Trajectory.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{opts['trajectory']}: bad trajectory: {exc}") from None
    env = load_environment(opts["env"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = traj.sample(opts["rate"])
    junctions = [traj.eval(t)[0] for t in traj.junction_times]
    write_text(out / "trajectory.csv", traj.to_csv(opts["rate"]))
    write_text(out / "trajectory.json", traj.to_json() + "\n")
    write_text(out / "trajectory.svg",
               render(env, [(samples[:, 1:3], TRAJECTORY_STROKE)], samples[0, 1:3],
                      samples[-1, 1:3], junctions))
    files = ["trajectory.csv", "trajectory.json", "trajectory.svg"]
    stats = {"arcs": len(traj.arcs), "energy": traj.energy(), "samples": len(samples)}
    write_text(out / MANIFEST, manifest("export", opts, files, stats))
    print(f"wrote {', '.join(files)} to {out}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _flag(p, name, **kw):
    p.add_argument(name, default=argparse.SUPPRESS, **kw)


def _bool(p, name, help_):
    p.add_argument(name, default=argparse.SUPPRESS, action=argparse.BooleanOptionalAction,
                   help=help_)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="energyplan",
        description="Energy-optimal double-integrator trajectories among polygonal obstacles.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a trajectory through an environment")
    _flag(p, "--env", metavar="FILE", help="environment JSON (default: no obstacles)")
    for name, what in (("--p0", "start position"), ("--pf", "goal position"),
                       ("--v0", "start velocity"), ("--vf", "goal velocity")):
        _flag(p, name, nargs=2, type=float, metavar=("X", "Y"), help=what)
    _flag(p, "--t0", type=float, help="start time [s] (default 0)")
    _flag(p, "--tf", type=float, help="final time [s] (default 10)")
    _flag(p, "--radius", type=float, help="robot radius; obstacles are inflated by it")
    _flag(p, "--mode", choices=["distance", "energy", "suffix"], help="search mode")
    _flag(p, "--queue-cap", type=int, help="maximum queued prefixes before overflow")
    _flag(p, "--rate", type=float, help="export sampling rate [Hz] (default 1000)")
    _bool(p, "--compare-suffix", "also run the suffix search and report it")
    _bool(p, "--warm-start", "seed child solves from the parent's junction times")
    _bool(p, "--timing", "record wall-clock time (off gives byte-stable outputs)")
    p.add_argument("--trace", metavar="FILE", help="write solver iterations as JSON lines")
    p.add_argument("--config", metavar="FILE", help="JSON options or a run manifest")
    p.add_argument("--out", default="plan_out", metavar="DIR", help="output directory")
    p.set_defaults(func=cmd_plan)

    g = sub.add_parser("gen-env", help="generate a random or fixture environment")
    _flag(g, "--seed", type=int, help="random seed")
    _flag(g, "--fixture", choices=["random", "corridor"], help="random draw or corridor arena")
    _flag(g, "--domain", type=float, help="side of the square domain [m]")
    _flag(g, "--points", type=int, help="points scattered before clustering")
    _flag(g, "--clusters", type=int, help="cluster count")
    _flag(g, "--endpoint-clearance", type=float, help="keep-out radius around endpoints [m]")
    _flag(g, "--radius", type=float, help="robot radius; obstacles kept 2R apart")
    _flag(g, "--max-attempts", type=int, help="redraws before giving up")
    g.add_argument("--config", metavar="FILE", help="JSON options or a run manifest")
    g.add_argument("--out", required=True, metavar="FILE", help="environment JSON to write")
    g.set_defaults(func=cmd_gen_env)

    b = sub.add_parser("bench", help="compare the planner with RRT* and PRM")
    _flag(b, "--seed", type=int, help="root seed; per-environment seeds are split from it")
    _flag(b, "--environments", type=int, help="number of environments (default 100)")
    _flag(b, "--fixture", choices=["random", "empty", "corridor"], help="environment source")
    _flag(b, "--budget", type=int, help="baseline node budget for the main table")
    _flag(b, "--budgets", type=int, nargs="+", help="node budgets for the budget tables")
    _flag(b, "--horizon", type=float, help="final time [s]")
    _flag(b, "--radius", type=float, help="robot radius [m]")
    _flag(b, "--domain", type=float, help="domain side [m]")
    _flag(b, "--points", type=int, help="points per environment")
    _flag(b, "--clusters", type=int, help="clusters per environment")
    _flag(b, "--mode", choices=["distance", "energy", "suffix"],
          help="mode of the prefix row; the prefix-energy row is always refined")
    _flag(b, "--queue-cap", type=int, help="planner queue cap")
    _flag(b, "--time-budget-ms", type=float, help="per-run time budget reported with the CDF")
    _flag(b, "--workers", type=int, help="worker processes")
    _bool(b, "--timing", "record wall-clock time")
    _bool(b, "--figures", "render PNG figures")
    b.add_argument("--config", metavar="FILE", help="JSON options or a run manifest")
    b.add_argument("--out", default="bench_out", metavar="DIR", help="output directory")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("validate", help="check an environment file")
    v.add_argument("env", nargs="?", default=argparse.SUPPRESS, help="environment JSON")
    _flag(v, "--radius", type=float, help="also check inflation by this radius")
    _flag(v, "--p0", nargs=2, type=float, metavar=("X", "Y"), help="start must be free")
    _flag(v, "--pf", nargs=2, type=float, metavar=("X", "Y"), help="goal must be free")
    v.add_argument("--config", metavar="FILE", help="JSON options")
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("export", help="re-export a trajectory as CSV, JSON and SVG")
    _flag(e, "--trajectory", metavar="FILE", help="trajectory JSON")
    _flag(e, "--env", metavar="FILE", help="environment JSON for the overlay")
    _flag(e, "--rate", type=float, help="sampling rate [Hz]")
    e.add_argument("--config", metavar="FILE", help="JSON options or a run manifest")
    e.add_argument("--out", default="export_out", metavar="DIR", help="output directory")
    e.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
