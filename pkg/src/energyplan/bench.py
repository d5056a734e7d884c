"""Benchmark harness: prefix planner versus RRT* and PRM on seeded environments.

The planner contributes two rows per environment: its minimum-distance
stage and the same search continued by the energy refinement.

Each environment index ``i`` draws its own seeds from the root seed by fixed
splitting, so rows are independent of worker count and execution order.
Rows are gathered in index order and every output file is written once.
"""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import energy_lower_bound, prm, rrt_star
from .envgen import (EnvGenConfig, GenerationFailure, corridor_problem, default_endpoints,
                     derive_seed, study_problem)
from .geometry import BoundaryConditions, PolygonEnvironment, dumps_exact, format_float
from .planner import DEFAULT_QUEUE_CAP, plan, plan_min_energy

PLANNER = "prefix"
PLANNER_ENERGY = "prefix-energy"
RRT_STAR = "rrt-star"
PRM = "prm"
PLANNERS = (PLANNER, PLANNER_ENERGY)
METHODS = (PLANNER, PLANNER_ENERGY, RRT_STAR, PRM)
BENCH_COLUMNS = ["environment-id", "method", "wall-ms", "path-length", "energy-bound", "success"]
BUDGET_COLUMNS = ["environment-id", "method", "budget", "path-length", "energy-bound", "success"]
FIXTURES = ("random", "empty", "corridor")


@dataclass(frozen=True)
class BenchConfig:
    seed: int = 0
    environments: int = 100
    fixture: str = "random"
    budget: int = 2500
    budgets: tuple = (500, 1000, 2500)
    horizon: float = 10.0
    radius: float = 0.1
    domain: float = 10.0
    points: int = 50
    clusters: int = 12
    mode: str = "distance"
    queue_cap: int = DEFAULT_QUEUE_CAP
    time_budget_ms: float = 2000.0
    timing: bool = True
    workers: int = 1
    figures: bool = True

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        if self.fixture not in FIXTURES:
            raise ValueError(f"fixture must be one of {FIXTURES}, got {self.fixture!r}")
        if self.environments < 1 or self.budget < 1 or any(b < 1 for b in self.budgets):
            raise ValueError("environment count and node budgets must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["budgets"] = list(self.budgets)
        return d


@dataclass
class EnvironmentOutcome:
    index: int
    env_id: str
    env_seed: int | None
    rows: list = field(default_factory=list)
    budget_rows: list = field(default_factory=list)
    note: str = ""


def environment_problem(cfg: BenchConfig, index: int):
    """Uninflated environment, planning environment and boundary conditions for row ``index``."""
    if cfg.fixture == "corridor":
        return (*corridor_problem(cfg.radius, cfg.horizon), None)
    if cfg.fixture == "empty":
        env = PolygonEnvironment.empty()
        p0, pf = default_endpoints(cfg.domain)
        bc = BoundaryConditions(p0=p0, pf=pf, tf=cfg.horizon, radius=cfg.radius)
        return env, env, bc, None
    seed = derive_seed(cfg.seed, index, 0)
    gen = EnvGenConfig(seed=seed, domain=cfg.domain, points=cfg.points,
                       clusters=cfg.clusters, radius=cfg.radius)
    env, inflated, bc = study_problem(gen, cfg.horizon)
    return env, inflated, bc, seed


def _row(env_id, method, wall_ms, length, energy, success) -> dict:
    return {"environment-id": env_id, "method": method, "wall-ms": wall_ms,
            "path-length": length, "energy-bound": energy, "success": bool(success)}


def _timed(cfg: BenchConfig, fn, *args, **kwargs):
    t = time.perf_counter()
    out = fn(*args, **kwargs)
    ms = (time.perf_counter() - t) * 1e3 if cfg.timing else None
    return out, ms


def run_environment(cfg: BenchConfig, index: int) -> EnvironmentOutcome:
    env_id = f"env-{index:03d}"
    try:
        _, inflated, bc, seed = environment_problem(cfg, index)
    except GenerationFailure as exc:
        out = EnvironmentOutcome(index, env_id, None, note=str(exc))
        out.rows = [_row(env_id, m, None, None, None, False) for m in METHODS]
        return out
    out = EnvironmentOutcome(index, env_id, seed)

    # one search serves both planner rows: the minimum-distance stage is
    # timed on its own, the energy row's wall time includes that stage
    marks = {}

    def on_distance(first):
        marks["result"], marks["end"] = first, time.perf_counter()

    t = time.perf_counter()
    refined = plan_min_energy(inflated, bc, queue_cap=cfg.queue_cap, timing=False,
                              on_distance=on_distance)
    total_ms = (time.perf_counter() - t) * 1e3 if cfg.timing else None
    if cfg.mode == "distance":
        result = marks["result"]
        ms = (marks["end"] - t) * 1e3 if cfg.timing else None
    elif cfg.mode == "energy":
        result, ms = refined, total_ms
    else:
        result, ms = _timed(cfg, plan, inflated, bc, cfg.mode, queue_cap=cfg.queue_cap,
                            timing=False)
    for method, res, wall in ((PLANNER, result, ms), (PLANNER_ENERGY, refined, total_ms)):
        if res.success:
            row = _row(env_id, method, wall, res.distance, res.cost, True)
        else:
            row = _row(env_id, method, wall, None, None, False)
            out.note = out.note or f"planner status {res.status}"
        out.rows.append(row)
        for b in cfg.budgets:
            out.budget_rows.append({"environment-id": env_id, "method": method, "budget": b,
                                    "path-length": row["path-length"],
                                    "energy-bound": row["energy-bound"],
                                    "success": res.success})

    lo, hi = np.zeros(2), np.full(2, cfg.domain)
    for method, fn, key in ((RRT_STAR, rrt_star, 1), (PRM, prm, 2)):
        seed_m = derive_seed(cfg.seed, index, key)
        runs = {}
        for b in sorted(set(cfg.budgets) | {cfg.budget}):
            path, ms = _timed(cfg, fn, inflated, bc.p0, bc.pf, budget=b, seed=seed_m,
                              bounds=(lo, hi))
            energy, ok = energy_lower_bound(path, bc) if path.success else (None, False)
            runs[b] = (path, ms, energy if ok else None)
        path, ms, energy = runs[cfg.budget]
        out.rows.append(_row(env_id, method, ms, path.length if path.success else None,
                             energy, path.success))
        for b in cfg.budgets:
            p, _, e = runs[b]
            out.budget_rows.append({"environment-id": env_id, "method": method, "budget": b,
                                    "path-length": p.length if p.success else None,
                                    "energy-bound": e, "success": p.success})
    return out


def _job(args):
    return run_environment(*args)


def run_benchmark(cfg: BenchConfig) -> list:
    """Outcomes for every environment, in index order."""
    jobs = [(cfg, i) for i in range(cfg.environments)]
    if cfg.workers == 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(_job, jobs))


# -- tables ---------------------------------------------------------------

def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return format_float(x) if np.isfinite(x) else ""
    return str(x)


def to_csv(rows: list, columns: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


CDF_COLUMNS = ["method", "rank", "wall-ms", "fraction", "budget-ms", "within-budget"]


def cdf_rows(rows: list, budget_ms: float) -> list:
    """Empirical CDF of wall time per method over successful timed runs.

    ``fraction`` is relative to all runs of the method, so failures keep the
    curve below 1; every row also carries the time budget it is judged by.
    """
    out = []
    for m in METHODS:
        runs = sum(r["method"] == m for r in rows)
        ms = sorted(r["wall-ms"] for r in rows
                    if r["method"] == m and r["success"] and r["wall-ms"] is not None)
        for k, v in enumerate(ms, 1):
            out.append({"method": m, "rank": k, "wall-ms": v, "fraction": k / runs,
                        "budget-ms": budget_ms, "within-budget": int(v <= budget_ms)})
    return out


def budget_summary(budget_rows: list) -> list:
    out = []
    methods = [m for m in METHODS if any(r["method"] == m for r in budget_rows)]
    budgets = sorted({r["budget"] for r in budget_rows})
    for m in methods:
        for b in budgets:
            sel = [r for r in budget_rows if r["method"] == m and r["budget"] == b]
            ok = [r for r in sel if r["success"] and r["energy-bound"] is not None]
            lengths = [r["path-length"] for r in ok]
            energies = [r["energy-bound"] for r in ok]
            out.append({
                "method": m, "budget": b, "solved": len(ok), "runs": len(sel),
                "mean-path-length": float(np.mean(lengths)) if ok else None,
                "median-energy-bound": float(np.median(energies)) if ok else None,
                "mean-energy-bound": float(np.mean(energies)) if ok else None,
            })
    return out


def summarize(cfg: BenchConfig, rows: list) -> dict:
    """Headline comparisons: coverage, time-budget fraction and energy wins."""
    by_env: dict = {}
    for r in rows:
        by_env.setdefault(r["environment-id"], {})[r["method"]] = r
    any_solved = [e for e, d in by_env.items() if any(x["success"] for x in d.values())]
    planner_missed = [e for e in any_solved if not by_env[e][PLANNER]["success"]]
    methods = {}
    for m in METHODS:
        sel = [r for r in rows if r["method"] == m]
        timed = [r["wall-ms"] for r in sel if r["success"] and r["wall-ms"] is not None]
        methods[m] = {
            "runs": len(sel),
            "successes": sum(r["success"] for r in sel),
            "p90-wall-ms": float(np.percentile(timed, 90)) if timed else None,
            "within-time-budget": (sum(t <= cfg.time_budget_ms for t in timed) / len(sel)
                                   if timed else None),
        }
    wins = {}
    for p in PLANNERS:
        wins[p] = {}
        for m in (RRT_STAR, PRM):
            both = [e for e, d in by_env.items() if d[p]["success"] and d[m]["success"]
                    and d[m]["energy-bound"] is not None]
            ok = [e for e in both if by_env[e][p]["energy-bound"] <= by_env[e][m]["energy-bound"]]
            wins[p][m] = {"mutually-solved": len(both), "planner-not-worse": len(ok),
                          "fraction": len(ok) / len(both) if both else None}
    return {
        "environments": len(by_env),
        "time-budget-ms": cfg.time_budget_ms,
        "solved-by-any": len(any_solved),
        "planner-missed": planner_missed,
        "methods": methods,
        "energy-vs-baselines": wins,
    }


# -- figures ----------------------------------------------------------------

def render_figures(out_dir: Path, rows: list, summary_rows: list, cfg: BenchConfig) -> list:
    """Wall-clock CDF and budget curves as PNG files; returns the file names."""
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    style = {PLANNER: ("#000000", "-"), PLANNER_ENERGY: ("#2ca02c", "-."),
             RRT_STAR: ("#d62728", "--"), PRM: ("#1f77b4", ":")}
    meta = {"Software": None}
    written = []
    with plt.rc_context({"font.size": 9, "axes.grid": True, "grid.alpha": 0.3,
                         "figure.figsize": (4.5, 3.2), "figure.dpi": 100}):
        cdf = cdf_rows(rows, cfg.time_budget_ms)
        fig, ax = plt.subplots()
        for m in METHODS:
            pts = [(r["wall-ms"], r["fraction"]) for r in cdf if r["method"] == m]
            if pts:
                x, y = zip(*pts)
                ax.step(x, y, where="post", color=style[m][0], ls=style[m][1], label=m)
        ax.axvline(cfg.time_budget_ms, color="#808080", lw=0.8)
        ax.set_xscale("log")
        ax.set_xlabel("wall clock [ms]")
        ax.set_ylabel("fraction of runs")
        if cdf:
            ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(out_dir / "cdf.png", metadata=meta)
        plt.close(fig)
        written.append("cdf.png")

        for key, label, name in (("mean-energy-bound", "mean energy bound", "energy_vs_budget.png"),
                                 ("mean-path-length", "mean path length [m]", "length_vs_budget.png")):
            fig, ax = plt.subplots()
            for m in METHODS:
                pts = [(r["budget"], r[key]) for r in summary_rows
                       if r["method"] == m and r[key] is not None]
                if pts:
                    x, y = zip(*pts)
                    ax.plot(x, y, color=style[m][0], ls=style[m][1], marker="o", ms=3, label=m)
            ax.set_xlabel("node budget")
            ax.set_ylabel(label)
            if key == "mean-energy-bound":
                ax.set_yscale("log")
            ax.legend()
            fig.tight_layout()
            fig.savefig(out_dir / name, metadata=meta)
            plt.close(fig)
            written.append(name)
    return written


def write_text(path: Path, text: str) -> None:
    """Write ``text`` through a temporary file and an atomic rename."""
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_outputs(out_dir, cfg: BenchConfig, outcomes: list) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r for o in outcomes for r in o.rows]
    budget_rows = [r for o in outcomes for r in o.budget_rows]
    summary_rows = budget_summary(budget_rows)
    summary = summarize(cfg, rows)
    write_text(out_dir / "bench.csv", to_csv(rows, BENCH_COLUMNS))
    write_text(out_dir / "cdf.csv", to_csv(cdf_rows(rows, cfg.time_budget_ms), CDF_COLUMNS))
    write_text(out_dir / "budget.csv", to_csv(budget_rows, BUDGET_COLUMNS))
    write_text(out_dir / "budget_summary.csv",
               to_csv(summary_rows, ["method", "budget", "solved", "runs", "mean-path-length",
                                     "median-energy-bound", "mean-energy-bound"]))
    write_text(out_dir / "summary.json", dumps_exact(summary) + "\n")
    files = ["bench.csv", "cdf.csv", "budget.csv", "budget_summary.csv", "summary.json"]
    if cfg.figures:
        files += render_figures(out_dir, rows, summary_rows, cfg)
    return {"files": files, "summary": summary,
            "environment-seeds": [o.env_seed for o in outcomes],
            "notes": {o.env_id: o.note for o in outcomes if o.note}}
