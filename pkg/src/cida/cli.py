"""Command-line workbench: ``cida {bound,field,simulate,compare,config}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import io
from .config import ConfigError, SimulationConfig, dump_config, load_config, schema
from .core import hoeffding_min_samples
from .exceptions import CidaError
from .simulation import compare_controllers, run_closed_loop

log = logging.getLogger("cida")


def _probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in [0, 1], got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _load(args: argparse.Namespace) -> SimulationConfig:
    cfg = load_config(args.config)
    sections: dict[str, dict] = {}
    if getattr(args, "seed", None) is not None:
        sections.setdefault("simulation", {})["seed"] = args.seed
    if getattr(args, "controller", None) is not None:
        sections.setdefault("simulation", {})["controller"] = args.controller
    if getattr(args, "steps", None) is not None:
        sections.setdefault("simulation", {})["steps"] = args.steps
    if getattr(args, "grid_n", None) is not None:
        sections.setdefault("field", {})["grid_n"] = args.grid_n
    return cfg.replace(**sections) if sections else cfg


def cmd_bound(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if not args.alpha < args.epsilon:
        parser.error("alpha < epsilon required")
    if not 0.0 < args.delta < 1.0:
        parser.error("delta must lie in (0, 1)")
    if not args.epsilon < 1.0:
        parser.error("epsilon must be below 1")
    print(hoeffding_min_samples(args.epsilon, args.alpha, args.delta))
    return 0


def cmd_field(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    cfg = _load(args)
    grid = io.field_grid(cfg)
    out = Path(args.out)
    io.write_field_csv(grid, out)
    written = [out]
    if args.svg:
        svg_path = out.with_suffix(".svg")
        svg_path.write_text(io.field_svg(grid, cfg), encoding="utf-8")
        written.append(svg_path)
    print(f"wrote {' '.join(str(p) for p in written)} ({len(grid)} grid points)")
    return 0


def cmd_simulate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    cfg = _load(args)
    particle_log: list | None = [] if args.dump_particles else None
    metrics = run_closed_loop(
        cfg, workers=args.threads, keep_diagnostics=args.diagnostics, particle_log=particle_log
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_trajectory_csv(metrics, out / "trajectory.csv")
    io.dump_json(metrics.summary(), out / "metrics.json")
    (out / "trajectory.svg").write_text(io.trajectory_svg(metrics, cfg), encoding="utf-8")
    (out / "config.json").write_text(dump_config(cfg) + "\n", encoding="utf-8")
    if particle_log is not None:
        io.write_particles_csv(particle_log, out / "particles.csv")
    if args.diagnostics:
        with (out / "diagnostics.jsonl").open("w", encoding="utf-8") as fh:
            for k, diag in enumerate(metrics.diagnostics):
                fh.write(json.dumps({"k": k, **diag.to_dict()}, allow_nan=False) + "\n")
    print(
        f"{metrics.controller} seed={metrics.seed}: {metrics.violation_count} violations "
        f"over {metrics.steps} steps ({100 * metrics.violation_rate:.1f}%), "
        f"total cost {metrics.total_cost:.1f}"
    )
    return 0


def cmd_compare(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    cfg = _load(args)
    controllers = (args.same, args.same) if args.same else ("ce", "cida")
    report, _ = compare_controllers(
        cfg, args.seeds, controllers, workers=args.threads, processes=args.processes
    )
    io.dump_json(report, args.out)
    med = report["median_violations"]
    print(
        f"median violations {controllers[0]}={med['baseline']:g} {controllers[1]}={med['candidate']:g}, "
        f"median safety factor {report['median_safety_factor']}"
    )
    return 0


def cmd_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.schema:
        print(json.dumps(schema(), indent=2))
    else:
        print(dump_config(load_config(args.config)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cida", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="minimum scenario count for a certified chance constraint")
    p.add_argument("--epsilon", type=_probability, required=True)
    p.add_argument("--alpha", type=_probability, required=True)
    p.add_argument("--delta", type=_probability, required=True)
    p.set_defaults(func=cmd_bound)

    def add_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file (defaults to the benchmark)")

    p = sub.add_parser("field", help="write the orbit and safety-filtered heading fields")
    add_config(p)
    p.add_argument("--out", default="field.csv")
    p.add_argument("--grid-n", type=_positive_int)
    p.add_argument("--svg", action="store_true", help="also write a quiver SVG next to the CSV")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("simulate", help="run one closed-loop simulation")
    add_config(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--controller", choices=("ce", "cida"))
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--out", default="run")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--dump-particles", action="store_true")
    p.add_argument("--diagnostics", action="store_true", help="write per-step CIDA diagnostics")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="paired CE vs CIDA runs over several seeds")
    add_config(p)
    p.add_argument("--seeds", type=int, nargs="+", required=True)
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--out", default="compare.json")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--processes", type=_positive_int, default=1)
    p.add_argument("--same", choices=("ce", "cida"), help="use this controller on both sides")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("config", help="print the effective config or its JSON schema")
    add_config(p)
    p.add_argument("--schema", action="store_true")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, parser)
    except (ConfigError, CidaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
