"""Command line entry point: ``d3pg-wifi {train,eval,sweep,validate}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import CompatibilityError, ConfigError, NumericError, RangeError, ShapeError
from .harness.config import ALGORITHMS, ExperimentConfig, load_config
from .harness import experiments as ex

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="run a single seed")
    p.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--stas", type=int, help="number of stations")
    p.add_argument("--denoise-steps", type=int)
    p.add_argument("--interactions", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="d3pg-wifi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("train", help="train an agent (or run the BEB baseline)"))
    p = sub.add_parser("eval", help="evaluate a checkpoint or the BEB baseline")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint dir, or a train output dir holding seed_<k>/")
    p = sub.add_parser("sweep", help="train+evaluate over STA counts or denoise steps")
    _common(p)
    p.add_argument("--axis", choices=("stas", "denoise_steps"), required=True)
    p.add_argument("--values", type=_int_list, required=True)
    p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("validate", help="compare the simulator against the saturation fixed point")
    _common(p)
    p.add_argument("--ns", type=_int_list, default=[1, 5, 10, 20])
    p.add_argument("--min-slots", type=int, default=1_000_000)
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    if args.seeds:
        over["seeds"] = tuple(args.seeds)
    if args.seed is not None:
        over["seeds"] = (args.seed,)
    if args.out:
        over["out_dir"] = args.out
    if args.algo:
        over["algorithm"] = args.algo
    if args.interactions is not None:
        over["interactions"] = args.interactions
    if args.stas is not None:
        over["sim.n_stas"] = args.stas
    if args.denoise_steps is not None:
        over["agent.denoise_steps"] = args.denoise_steps
    return cfg.with_overrides(**over)


def _print_rows(rows, fields):
    print(",".join(fields))
    for r in rows:
        print(",".join(str(r[f]) for f in fields))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "train":
            art = ex.cmd_train(cfg)
            print(f"wrote {len(art.training_logs)} training log(s) under {art.out_dir}")
        elif args.command == "eval":
            _print_rows(ex.cmd_eval(cfg, args.checkpoint), ex.EVAL_FIELDS)
        elif args.command == "sweep":
            _print_rows(ex.cmd_sweep(cfg, args.axis, args.values, args.workers), ex.SWEEP_FIELDS)
        else:
            rows, ok = ex.cmd_validate(cfg, args.ns, args.min_slots)
            _print_rows(rows, ex.VALIDATE_FIELDS)
            if not ok:
                print("validation FAILED: relative error above 5%", file=sys.stderr)
                return EXIT_VALIDATION
    except (ConfigError, CompatibilityError, ShapeError, RangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
