"""Command-line entry points: gen-maps, run, train, bench, replay.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="sectorscout",
                description="Multi-robot sector-FoV exploration simulator and planners")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-maps", help="generate PGM maps with JSON sidecars")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--size", default="30x30", help="meters, WxH (e.g. 30x30)")
    g.add_argument("--density", type=float, default=1.0, help="rooms per 100 m^2")
    g.add_argument("--out", required=True, help="output directory")

    r = sub.add_parser("run", help="run one episode and write a trace")
    r.add_argument("--map", required=True, help="PGM map path")
    r.add_argument("--planner", default="nearest")
    r.add_argument("--checkpoint", help="policy checkpoint (planner=policy)")
    r.add_argument("--agents", type=int, default=4)
    r.add_argument("--fov", type=float, default=120.0)
    r.add_argument("--range", type=float, default=10.0, dest="range_m")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--max-epochs", type=int, default=128)
    r.add_argument("--trace-out", help="JSON-lines trace path")
    r.add_argument("--svg-out", help="also render the trajectory SVG")
    r.add_argument("--graph-dump", action="store_true",
                   help="embed per-step graph snapshots in the trace")

    t = sub.add_parser("train", help="train the attention policy (SAC)")
    t.add_argument("--config", required=True, help="YAML run config")
    t.add_argument("--out-dir", default="runs/train")
    t.add_argument("--resume", help="trainer checkpoint to resume from")

    b = sub.add_parser("bench", help="benchmark planners over a map suite")
    b.add_argument("--config", required=True, help="YAML run config")
    b.add_argument("--out-dir", required=True)

    rp = sub.add_parser("replay", help="render a saved trace to SVG")
    rp.add_argument("--trace", required=True)
    rp.add_argument("--svg-out", required=True)
    return p


def _cmd_gen_maps(args) -> int:
    from .world import MapGenParams, generate_map, save_map

    try:
        w, h = (float(v) for v in args.size.lower().split("x"))
    except ValueError:
        print(f"sectorscout: error: bad --size {args.size!r}, expected WxH", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = MapGenParams(w, h, room_density=args.density)
    for i in range(args.count):
        grid = generate_map(args.seed + i, params)
        save_map(grid, out / f"map_{args.seed + i:05d}.pgm")
    print(f"wrote {args.count} maps to {out}")
    return 0


def _cmd_run(args) -> int:
    from .bench import metrics_from_trace, render_trace_svg, run_episode
    from .world import SensorSpec, load_map

    grid = load_map(args.map)
    sensor = SensorSpec(args.range_m, args.fov)
    params = {"checkpoint": args.checkpoint} if args.planner == "policy" else {}
    if args.planner == "policy" and not args.checkpoint:
        print("sectorscout: error: --checkpoint required for planner=policy",
              file=sys.stderr)
        return 1
    trace = args.trace_out
    m = run_episode(grid, args.planner, params, sensor, args.agents, args.seed,
                    args.max_epochs, trace_path=trace, trace_graph=args.graph_dump)
    print(json.dumps({
        "success": m.success, "epochs": m.epochs_used,
        "trajectory_length_m": round(m.trajectory_length, 3),
        "coverage90_m": None if m.coverage90 is None else round(m.coverage90, 3),
        "overlap_ratio": round(m.overlap_ratio, 4),
        "final_rho": round(m.final_rho, 4)}))
    if args.svg_out:
        if not trace:
            print("sectorscout: error: --svg-out needs --trace-out", file=sys.stderr)
            return 1
        render_trace_svg(trace, args.svg_out)
    return 0


def _cmd_train(args) -> int:
    from .bench import plot_learning_curves
    from .configio import load_config
    from .training import train

    cfg = load_config(args.config)
    best = train(cfg.train, cfg.map.gen_params(), cfg.sensor, args.out_dir,
                 train_maps=cfg.map.count, resume=args.resume)
    curves = Path(args.out_dir) / "curves.csv"
    if curves.exists():
        plot_learning_curves(curves, Path(args.out_dir) / "curves.svg")
    print(f"selected checkpoint: {best}")
    return 0


def _cmd_bench(args) -> int:
    from .bench import run_suite
    from .configio import load_config

    cfg = load_config(args.config)
    csv_path = run_suite(cfg, args.out_dir)
    print((Path(args.out_dir) / "summary.md").read_text(), end="")
    print(f"episodes CSV: {csv_path}")
    return 0


def _cmd_replay(args) -> int:
    from .bench import render_trace_svg

    render_trace_svg(args.trace, args.svg_out)
    print(f"wrote {args.svg_out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "gen-maps": _cmd_gen_maps,
        "run": _cmd_run,
        "train": _cmd_train,
        "bench": _cmd_bench,
        "replay": _cmd_replay,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"sectorscout: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
