"""``migraflow`` command line: one subcommand per stage plus ``run``.

Exit status is 0 on success, 1 when a stage fails and 2 for configuration
or usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, config_digest, load_config
from .geo import Scale
from .pipeline import (
    StageError, aggregate_stage, detect_stage, features_stage, label_stage, report_stage, run_pipeline,
    simulate_stage, train_stage,
)


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # the subcommand copy must not overwrite values given before the subcommand
    def dflt(value):
        return argparse.SUPPRESS if suppress else value

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, default=dflt(None), help="INI run configuration")
    p.add_argument("--out-dir", type=Path, default=dflt(Path(".")), help="directory for outputs")
    p.add_argument("--seed", type=int, default=dflt(None), help="override the configured seed")
    p.add_argument("-v", "--verbose", action="store_true", default=dflt(False))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="migraflow", description=__doc__.splitlines()[0], parents=[_global_flags(False)])
    common = _global_flags(True)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="generate a synthetic world and its logs")

    p = sub.add_parser("label", parents=[common], help="label APs from session timing")
    p.add_argument("--sessions", type=Path, required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("features", parents=[common], help="per-AP feature records")
    p.add_argument("--scans", type=Path, required=True)
    p.add_argument("--sessions", type=Path, required=True)
    p.add_argument("--buildings", type=Path, required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("train", parents=[common], help="fit the residential classifier")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("detect", parents=[common], help="detect relocations and family locations")
    p.add_argument("--scans", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--trades", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--out-locations", type=Path)

    p = sub.add_parser("aggregate", parents=[common], help="flows between two months at one scale")
    p.add_argument("--locations", type=Path, required=True)
    p.add_argument("--hierarchy", type=Path, required=True)
    p.add_argument("--from-month", type=int, required=True)
    p.add_argument("--to-month", type=int, required=True)
    p.add_argument("--scale", choices=[s.label for s in Scale], required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("report", parents=[common], help="net, top, density, group and series tables")
    p.add_argument("--flows", type=Path, required=True, help="directory holding flows_*.csv")
    p.add_argument("--place", default="")
    p.add_argument("--series", type=Path)
    p.add_argument("--hierarchy", type=Path)
    p.add_argument("--groups", default="")

    sub.add_parser("run", parents=[common], help="every stage in order, with a manifest")
    return parser


def _dispatch(args: argparse.Namespace, cfg: RunConfig, config_text: str) -> None:
    out = args.out_dir
    cmd = args.command
    if cmd == "simulate":
        simulate_stage(cfg.simulate, out)
    elif cmd == "label":
        label_stage(args.sessions, args.out or out / "labels.csv", cfg.label)
    elif cmd == "features":
        features_stage(args.scans, args.sessions, args.buildings, args.out or out / "features.csv", cfg.features)
    elif cmd == "train":
        train_stage(args.features, args.labels, args.out or out / "model.txt", cfg.train)
    elif cmd == "detect":
        detect_stage(args.scans, args.model, args.trades, args.features, args.out or out / "moves.csv",
                     args.out_locations or out / "locations.csv", cfg.world, cfg.detect)
    elif cmd == "aggregate":
        name = f"flows_{args.scale}_{args.from_month}_{args.to_month}.csv"
        aggregate_stage(args.locations, args.hierarchy, args.from_month, args.to_month, args.scale, args.out or out / name)
    elif cmd == "report":
        hierarchy = args.hierarchy or (args.flows / "hierarchy.csv")
        report_stage(args.flows, out, args.place or cfg.report.place, hierarchy, args.series, cfg.world,
                     args.groups or cfg.aggregate.groups_file, cfg.report.n_top, cfg.report.n_bottom)
    elif cmd == "run":
        run_pipeline(cfg, out, config_digest(config_text))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config_text = args.config.read_text(encoding="utf-8") if args.config else ""
    except OSError as exc:
        print(f"migraflow: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"migraflow: config error: {exc}", file=sys.stderr)
        return 2
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        _dispatch(args, cfg, config_text)
    except (StageError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"migraflow: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
