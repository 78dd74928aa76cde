"""Benchmark harness: rollouts, metrics, traces, CSV/Markdown reports, SVGs.

Metrics follow the synchronized-team objective: trajectory length is the
sum over epochs of the maximum per-agent edge length, 90%-coverage is the
largest per-agent cumulative distance when the exploration rate first
reaches 0.9, the overlap ratio averages the per-epoch share of sensed
cells seen by two or more agents, and success means reaching 99% within
the 128-epoch budget.  Suite outputs are a pure function of (maps,
planners, seeds); CSV bytes are reproducible run to run.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import make_planner
from .configio import RunConfig, derive_seed
from .episode import Simulator
from .world import FREE, OccupancyGrid, SensorSpec, generate_map, load_map

UNREACHED = ""  # CSV marker for coverage90 never reached


@dataclass
class EpisodeMetrics:
    success: bool
    epochs_used: int
    trajectory_length: float
    coverage90: float | None
    overlap_ratio: float
    final_rho: float
    rho_series: list[float]


def coverage90(rho_series: list[float], cum_dists: list[list[float]]) -> float | None:
    """Max per-agent cumulative distance at the first epoch with rho >= 0.9.

    cum_dists[t] holds every agent's cumulative distance after epoch t;
    index 0 is the initial state (zeros).  None when 0.9 is never reached.
    """
    for t, rho in enumerate(rho_series):
        if rho >= 0.9:
            return max(cum_dists[t]) if cum_dists[t] else 0.0
    return None


def overlap_ratio(seen_once: list[int], seen_multi: list[int], n_agents: int) -> float:
    """Mean over epochs of |seen by >= 2| / |seen by >= 1| (0 for one agent)."""
    if n_agents < 2:
        return 0.0
    ratios = [m / o for o, m in zip(seen_once, seen_multi) if o > 0]
    return float(np.mean(ratios)) if ratios else 0.0


def run_episode(grid: OccupancyGrid, planner_id: str, planner_params: dict,
                sensor: SensorSpec, n_agents: int, seed: int,
                max_epochs: int = 128, trace_path: str | Path | None = None,
                trace_graph: bool = False) -> EpisodeMetrics:
    """Full synchronous rollout of one planner on one map."""
    planner = make_planner(planner_id, planner_params)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2,)))
    sim = Simulator(grid, sensor, n_agents, max_epochs=max_epochs)

    rows = []
    header = {
        "map": {
            "resolution": grid.resolution,
            "rows": ["".join("1" if v == FREE else "0" for v in row)
                     for row in grid.cells],
            "start_region": list(grid.start_region) if grid.start_region else None,
        },
        "planner": planner_id,
        "agents": n_agents,
        "sensor": {"range_m": sensor.range_m, "fov_deg": sensor.fov_deg,
                   "ray_count": sensor.ray_count},
        "seed": seed,
        "max_epochs": max_epochs,
        "spawn": [[round(a.pose.x, 4), round(a.pose.y, 4)] for a in sim.agents],
        "rho0": sim.rho,
    }
    cum = [[0.0] * n_agents]
    seen_once, seen_multi = [], []
    while not sim.done:
        choices = planner.plan(sim, rng)
        resolved = sim.resolve(choices)
        res = sim.step(resolved)
        cum.append([c + d for c, d in zip(cum[-1], res.distances)])
        seen_once.append(res.seen_once)
        seen_multi.append(res.seen_multi)
        row = {
            "t": res.epoch,
            "agents": [{"x": round(a.pose.x, 4), "y": round(a.pose.y, 4),
                        "heading": round(a.pose.heading, 4), "node": a.node,
                        "dist": round(d, 4)}
                       for a, d in zip(sim.agents, res.distances)],
            "action": [{"target": c.target_node, "heading": round(c.heading, 4),
                        "bin": c.heading_bin} for c in resolved],
            "reward": [{"r_o": r.r_o, "r_h": r.r_h, "r_t": r.r_t, "r_f": r.r_f,
                        "total": r.total} for r in res.rewards],
            "rho": sim.rho,
            "cost": max(res.distances) if res.distances else 0.0,
            "seen_once": res.seen_once,
            "seen_multi": res.seen_multi,
            "utility_exhausted": res.utility_exhausted,
        }
        if trace_graph:
            row["graph"] = sim.graph_snapshot()
        rows.append(row)

    metrics = EpisodeMetrics(
        success=sim.reason == "success",
        epochs_used=sim.epoch,
        trajectory_length=float(sum(sim.epoch_costs)),
        coverage90=coverage90(sim.rho_series, cum),
        overlap_ratio=overlap_ratio(seen_once, seen_multi, n_agents),
        final_rho=sim.rho,
        rho_series=list(sim.rho_series),
    )
    if trace_path is not None:
        with open(trace_path, "w") as fh:
            fh.write(json.dumps({"header": header}) + "\n")
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    return metrics


def read_trace(path: str | Path) -> tuple[dict, list[dict]]:
    with open(path) as fh:
        lines = [json.loads(x) for x in fh if x.strip()]
    return lines[0]["header"], lines[1:]


def metrics_from_trace(path: str | Path) -> EpisodeMetrics:
    """Recompute every metric from a saved trace (must match live values)."""
    header, rows = read_trace(path)
    n_agents = header["agents"]
    rho_series = [header["rho0"]] + [r["rho"] for r in rows]
    cum = [[0.0] * n_agents]
    for r in rows:
        cum.append([c + a["dist"] for c, a in zip(cum[-1], r["agents"])])
    traj = sum(max(a["dist"] for a in r["agents"]) for r in rows)
    return EpisodeMetrics(
        success=rho_series[-1] >= 0.99 and len(rows) <= header["max_epochs"],
        epochs_used=len(rows),
        trajectory_length=float(traj),
        coverage90=coverage90(rho_series, cum),
        overlap_ratio=overlap_ratio([r["seen_once"] for r in rows],
                                    [r["seen_multi"] for r in rows], n_agents),
        final_rho=rho_series[-1],
        rho_series=rho_series,
    )


def grid_from_trace_header(header: dict) -> OccupancyGrid:
    rows = header["map"]["rows"]
    cells = np.array([[1 if ch == "1" else 2 for ch in row] for row in rows],
                     dtype=np.int8)
    sr = header["map"].get("start_region")
    return OccupancyGrid(cells, header["map"]["resolution"],
                         tuple(sr) if sr else None)


# ---------------------------------------------------------------------------
# Plots (matplotlib -> SVG files).

def render_trace_svg(trace_path: str | Path, svg_path: str | Path) -> None:
    """Walls, per-agent colored trajectories, start markers, coverage title."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    header, rows = read_trace(trace_path)
    grid = grid_from_trace_header(header)
    w_m, h_m = grid.extent
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(grid.cells == 2, origin="lower", extent=(0, w_m, 0, h_m),
              cmap="gray_r", interpolation="nearest")
    n = header["agents"]
    colors = plt.cm.tab10.colors
    for i in range(n):
        xs = [header["spawn"][i][0]] + [r["agents"][i]["x"] for r in rows]
        ys = [header["spawn"][i][1]] + [r["agents"][i]["y"] for r in rows]
        ax.plot(xs, ys, "-", color=colors[i % 10], lw=1.5,
                label=f"agent {i}")
        ax.plot(xs[0], ys[0], "*", color=colors[i % 10], ms=12)
    rho = rows[-1]["rho"] if rows else header["rho0"]
    ax.set_title(f"{header['planner']}: rho={rho:.3f} in {len(rows)} epochs")
    ax.set_xlim(0, w_m)
    ax.set_ylim(0, h_m)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(svg_path, metadata={"Date": None})
    plt.close(fig)


def plot_learning_curves(curves_csv: str | Path, svg_path: str | Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    eps, lengths, succ = [], [], []
    with open(curves_csv) as fh:
        for row in csv.DictReader(fh):
            eps.append(int(row["episode"]))
            lengths.append(float(row["trajectory_length"]))
            succ.append(int(row["success"]))
    if not eps:
        return
    win = max(1, len(eps) // 50)
    smooth = np.convolve(lengths, np.ones(win) / win, mode="valid")
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(eps, lengths, alpha=0.25, lw=0.7)
    ax1.plot(eps[win - 1:], smooth, lw=1.8)
    ax1.set_ylabel("trajectory length (m)")
    rate = np.convolve(succ, np.ones(win) / win, mode="valid")
    ax2.plot(eps[win - 1:], rate, lw=1.8)
    ax2.set_ylabel("success rate (moving avg)")
    ax2.set_xlabel("episode")
    fig.tight_layout()
    fig.savefig(svg_path, metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# Suite.

def _fmt(x: float) -> str:
    return f"{x:.4f}"


def load_suite_maps(cfg: RunConfig) -> list[tuple[str, OccupancyGrid]]:
    if cfg.map.dir:
        paths = sorted(Path(cfg.map.dir).glob("*.pgm"))
        if not paths:
            raise FileNotFoundError(f"no .pgm maps in {cfg.map.dir}")
        return [(p.stem, load_map(p)) for p in paths]
    params = cfg.map.gen_params()
    out = []
    for i in range(cfg.map.count):
        seed = derive_seed(cfg.seed, "maps", i)
        out.append((f"gen-{i:03d}", generate_map(seed, params)))
    return out


def _episode_job(args):
    name, grid, planner, params, cfg_sensor, agents, seed, max_epochs, trace = args
    m = run_episode(grid, planner, params, cfg_sensor, agents, seed, max_epochs,
                    trace_path=trace)
    return (name, planner, seed, m)


def run_suite(cfg: RunConfig, out_dir: str | Path) -> Path:
    """Per-episode CSV, Markdown summary, trace + SVG samples.  Returns CSV path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    maps = load_suite_maps(cfg)
    jobs = []
    traced: dict[str, int] = {}
    for planner in cfg.bench.planners:
        for name, grid in maps:
            for seed in cfg.bench.seeds:
                trace = None
                if traced.get(planner.id, 0) < cfg.bench.plots:
                    traced[planner.id] = traced.get(planner.id, 0) + 1
                    trace = out / f"trace_{planner.id}_{name}_s{seed}.jsonl"
                jobs.append((name, grid, planner.id, planner.params, cfg.sensor,
                             cfg.agents, seed, cfg.max_epochs, trace))
    if cfg.bench.workers > 1:
        import multiprocessing as mp
        with mp.Pool(cfg.bench.workers) as pool:
            results = pool.map(_episode_job, jobs)
    else:
        results = [_episode_job(j) for j in jobs]

    csv_path = out / "episodes.csv"
    with csv_path.open("w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["planner", "map", "seed", "agents", "fov_deg", "range_m",
                      "success", "epochs", "trajectory_length_m", "coverage90_m",
                      "overlap_ratio", "final_rho"])
        for (name, planner, seed, m) in results:
            wtr.writerow([planner, name, seed, cfg.agents, cfg.sensor.fov_deg,
                          cfg.sensor.range_m, int(m.success), m.epochs_used,
                          _fmt(m.trajectory_length),
                          UNREACHED if m.coverage90 is None else _fmt(m.coverage90),
                          _fmt(m.overlap_ratio), _fmt(m.final_rho)])

    md_path = out / "summary.md"
    md_path.write_text(summarize_csv(csv_path))
    for job in jobs:
        if job[8] is not None and Path(job[8]).exists():
            render_trace_svg(job[8], Path(job[8]).with_suffix(".svg"))
    return csv_path


def aggregate_rows(rows: list[dict]) -> dict[str, dict]:
    """Per-planner mean/std of each metric (failures count at truncation)."""
    by: dict[str, list[dict]] = {}
    for r in rows:
        by.setdefault(r["planner"], []).append(r)
    out = {}
    for planner, rs in sorted(by.items()):
        traj = np.array([float(r["trajectory_length_m"]) for r in rs])
        cov = np.array([float(r["coverage90_m"]) for r in rs
                        if r["coverage90_m"] != UNREACHED])
        ovl = np.array([float(r["overlap_ratio"]) for r in rs])
        succ = np.array([int(r["success"]) for r in rs])
        out[planner] = {
            "episodes": len(rs),
            "trajectory_mean": float(traj.mean()),
            "trajectory_std": float(traj.std()),
            "coverage90_mean": float(cov.mean()) if cov.size else math.inf,
            "coverage90_std": float(cov.std()) if cov.size else 0.0,
            "overlap_mean": float(ovl.mean()),
            "overlap_std": float(ovl.std()),
            "success_pct": float(100.0 * succ.mean()),
            "coverage90_unreached": len(rs) - cov.size,
        }
    return out


def summarize_csv(csv_path: str | Path) -> str:
    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    agg = aggregate_rows(rows)
    lines = [
        "| planner | episodes | trajectory (m) | 90% coverage (m) | overlap | success % |",
        "|---|---|---|---|---|---|",
    ]
    for planner, a in agg.items():
        cov = ("n/a" if math.isinf(a["coverage90_mean"])
               else f"{a['coverage90_mean']:.2f} ± {a['coverage90_std']:.2f}")
        lines.append(
            f"| {planner} | {a['episodes']} "
            f"| {a['trajectory_mean']:.2f} ± {a['trajectory_std']:.2f} "
            f"| {cov} | {a['overlap_mean']:.3f} ± {a['overlap_std']:.3f} "
            f"| {a['success_pct']:.0f} |")
    return "\n".join(lines) + "\n"
