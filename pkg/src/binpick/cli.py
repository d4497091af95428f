"""Command-line front-end: batch simulation runs, clutter-graph inspection
and episode timelines.

Exit codes: 0 success, 2 bad flags (argparse default), 3 scenario/input
errors. The BINPICK_LOG environment variable (debug|info) raises diagnostic
verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .clutter import build_graph, min_feedback_arc_set, simplify_two_cycles, to_dot
from .model import ScenarioError, TaskMode, load_scenario_file, scene_from_json
from .simulator import EpisodeLog, SimConfig, run_experiment
from .timeline import episode_timeline_svg

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3


def _setup_logging() -> None:
    level_name = os.environ.get("BINPICK_LOG", "warning").lower()
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(name)s: %(message)s", stream=sys.stderr)


def _rate_list(text: str) -> list[float]:
    try:
        rates = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid success-rate list: {text!r}") from None
    if not rates or any(not 0.0 <= r <= 1.0 for r in rates):
        raise argparse.ArgumentTypeError("success rates must be in [0,1]")
    return rates


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario_file(args.scenario)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    task = TaskMode(args.task) if args.task else scenario.task
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = SimConfig(seed=args.seed)
    try:
        result = run_experiment(
            scenario,
            task,
            success_rates=args.success_rate,
            arm_counts=[args.arms],
            runs_per_cell=args.runs,
            base_cfg=cfg,
        )
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    stats_path = out_dir / "stats.csv"
    stats_path.write_text(result.to_csv(), encoding="utf-8")
    written = [stats_path]
    for (task_name, arms, rate, run), episode in sorted(result.episodes.items()):
        name = f"episode_{task_name}_{arms}arm_{rate:g}_{run}.jsonl"
        path = out_dir / name
        path.write_text(episode.to_jsonl(), encoding="utf-8")
        written.append(path)
    print(f"wrote {stats_path} and {len(written) - 1} episode logs to {out_dir}")
    return EXIT_OK


def cmd_graph(args: argparse.Namespace) -> int:
    try:
        text = Path(args.scene).read_text(encoding="utf-8")
        maps, detections, class_names = scene_from_json(text)
    except OSError as exc:
        print(f"error: cannot read scene: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ScenarioError, ValueError) as exc:
        print(f"error: malformed scene: {exc}", file=sys.stderr)
        return EXIT_INPUT

    raw = build_graph(maps, detections, class_names=class_names)
    simplified = simplify_two_cycles(raw)
    removed, dag = min_feedback_arc_set(simplified)
    sys.stdout.write(to_dot(dag))
    if args.show_removed:
        if removed:
            emap = simplified.edge_map()
            total = sum(emap[e] for e in removed)
            sys.stdout.write(f"// removed edges (evidence sum {total}):\n")
            for src, dst in removed:
                sys.stdout.write(f"//   {src} -> {dst} [{emap[(src, dst)]}]\n")
        else:
            sys.stdout.write("// removed edges: none\n")
    return EXIT_OK


def cmd_timeline(args: argparse.Namespace) -> int:
    try:
        text = Path(args.episode).read_text(encoding="utf-8")
        log = EpisodeLog.from_jsonl(text)
    except OSError as exc:
        print(f"error: cannot read episode log: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: malformed episode log: {exc}", file=sys.stderr)
        return EXIT_INPUT
    svg = episode_timeline_svg(log)
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="binpick", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a dual-arm simulation experiment")
    sim.add_argument("--scenario", required=True, help="scenario JSON file")
    sim.add_argument("--task", choices=[m.value for m in TaskMode], help="override the scenario task")
    sim.add_argument("--arms", type=int, choices=[1, 2], default=2)
    sim.add_argument("--success-rate", type=_rate_list, default=[1.0], help="comma-separated list")
    sim.add_argument("--runs", type=int, default=10, help="episodes per grid cell")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(fn=cmd_simulate)

    graph = sub.add_parser("graph", help="print the resolved clutter graph as dot")
    graph.add_argument("--scene", required=True, help="rendered-scene JSON file")
    graph.add_argument("--show-removed", action="store_true")
    graph.set_defaults(fn=cmd_graph)

    timeline = sub.add_parser("timeline", help="render an episode log to SVG")
    timeline.add_argument("--episode", required=True, help="episode JSONL file")
    timeline.add_argument("--out", required=True, help="output SVG path")
    timeline.set_defaults(fn=cmd_timeline)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "runs", 1) < 1:
        parser.error("--runs must be >= 1")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
