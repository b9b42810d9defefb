"""Command-line interface: train | eval | transfer | plot.

Examples:
    bunchlab train --route desk1 --policy caac --episodes 50 --seeds 0,1,2 --out runs/caac
    bunchlab eval --route desk1 --policy caac --checkpoint runs/caac/caac_seed0.json \
        --seeds 100..109 --out runs/eval
    bunchlab transfer --route desk1 --routes desk2,desk3,desk4 --policy caac \
        --checkpoint runs/caac/caac_seed0.json --seeds 100..109 --out runs/transfer
    bunchlab plot --route desk1 --policy nc --seed 3 --out traj.svg
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import BunchlabError
from .harness import ExperimentConfig, POLICIES, cmd_eval, cmd_plot, cmd_train, cmd_transfer


def _parse_seeds(text: str) -> tuple[int, ...]:
    """'0,1,2' or '100..109' (inclusive) or a single integer."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(s) for s in text.split(",") if s != "")


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise argparse.ArgumentTypeError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key] = json.loads(value) if value and value[0] in "0123456789.-tf[" else value
    return out


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with defaults for any flag")
    p.add_argument("--route", default=None, help="preset name or route config file")
    p.add_argument("--policy", default=None, choices=POLICIES)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--seeds", type=_parse_seeds, default=None, help="e.g. 0,1,2 or 100..109")
    p.add_argument("--checkpoint", action="append", default=None, help="model file (repeatable)")
    p.add_argument("--out", default=None, help="output directory (or file for plot)")
    p.add_argument("--desk-scale", action="store_true", help="remap full-size presets to desk scale")
    p.add_argument("--jobs", type=int, default=None, help="parallel training workers")
    p.add_argument("--dump-logs", action="store_true", help="export per-episode CSV logs on eval")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="agent option override")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise BunchlabError(f"experiment config {path} must be a JSON object")
    return doc


def _merge(args: argparse.Namespace, defaults: dict) -> ExperimentConfig:
    file_doc = _load_config_file(args.config)

    def pick(flag: str, fallback):
        cli_value = getattr(args, flag, None)
        if cli_value not in (None, False):
            return cli_value
        if flag in file_doc:
            return file_doc[flag]
        return fallback

    seeds = pick("seeds", defaults.get("seeds", (0,)))
    if isinstance(seeds, str):
        seeds = _parse_seeds(seeds)
    checkpoints = pick("checkpoint", None)
    checkpoint = checkpoints[0] if checkpoints else None
    return ExperimentConfig(
        route=pick("route", defaults.get("route", "r1s")),
        policy=pick("policy", defaults.get("policy", "caac")),
        episodes=int(pick("episodes", defaults.get("episodes", 250))),
        seeds=tuple(seeds),
        out_dir=pick("out", defaults.get("out", "runs")),
        checkpoint=checkpoint,
        desk_scale=bool(pick("desk_scale", False)),
        jobs=int(pick("jobs", 1) or 1),
        dump_logs=bool(pick("dump_logs", False)),
        resume=bool(getattr(args, "resume", False) or file_doc.get("resume", False)),
        agent_overrides=_parse_overrides(getattr(args, "set", None))
        or file_doc.get("agent_overrides", {}),
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="bunchlab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy, one checkpoint per seed")
    _common_flags(p_train)
    p_train.add_argument("--resume", action="store_true")
    p_train.add_argument("--checkpoint-every", type=int, default=50)

    p_eval = sub.add_parser("eval", help="evaluate a policy with a paired NC reference")
    _common_flags(p_eval)

    p_transfer = sub.add_parser("transfer", help="evaluate checkpoints on other routes")
    _common_flags(p_transfer)
    p_transfer.add_argument("--routes", required=True, help="comma-separated target routes")
    p_transfer.add_argument(
        "--policies", default=None, help="comma-separated; defaults to --policy"
    )

    p_plot = sub.add_parser("plot", help="render a time-space trajectory SVG")
    _common_flags(p_plot)
    p_plot.add_argument("--seed", type=int, default=0)
    p_plot.add_argument("--events", default=None, help="replay an exported event CSV")

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            config = _merge(args, {"policy": "caac", "episodes": 250})
            config.checkpoint_every = args.checkpoint_every
            paths = cmd_train(config)
            for p in paths:
                print(p)
        elif args.command == "eval":
            config = _merge(args, {"episodes": 1})
            path = cmd_eval(config)
            print(path)
        elif args.command == "transfer":
            config = _merge(args, {"episodes": 1})
            routes = [r.strip() for r in args.routes.split(",") if r.strip()]
            policies = (
                [p.strip() for p in args.policies.split(",") if p.strip()]
                if args.policies
                else [config.policy]
            )
            ckpts = list(args.checkpoint or [])
            needs = [p for p in policies if p not in ("nc", "fh")]
            if len(ckpts) < len(needs):
                raise BunchlabError(
                    f"policies {needs} need {len(needs)} --checkpoint arguments, got {len(ckpts)}"
                )
            checkpoints = dict(zip(needs, ckpts))
            path = cmd_transfer(config, routes, policies, checkpoints)
            print(path)
        elif args.command == "plot":
            config = _merge(args, {"policy": "nc", "episodes": 1})
            out = config.out_dir if config.out_dir.endswith(".svg") else "trajectories.svg"
            path = cmd_plot(
                config.route,
                config.policy,
                args.seed,
                out,
                checkpoint=config.checkpoint,
                desk_scale=config.desk_scale,
                events_csv=args.events,
            )
            print(path)
    except BunchlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
