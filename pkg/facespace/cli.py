"""
Command-line surface:
``facespace <command> [--config FILE] [--section.key=value ...]``.

Exit codes: 0 on success, 1 for usage, contract, configuration, checkpoint and
path errors, 2 for numeric failures (including a failed gradient check).
"""

from __future__ import annotations

# Typing
from typing import List, NoReturn, Optional, Sequence

# Internal
from facespace.base import FaceSpace
from facespace.errors import ConfigError, FaceSpaceError, NumericError

# External
import argparse
import logging
import sys

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NUMERIC = 2


class UsageParser(argparse.ArgumentParser):
    """Reports usage errors with the configuration exit code."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        logger.error("%s: %s", self.prog, message)
        self.exit(EXIT_ERROR)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--seed", type=int, help="overrides train.seed")
    parser.add_argument("--output", help="run directory (overrides output.directory)")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(
        prog="facespace",
        allow_abbrev=False,
        description="Identity/motion subspace models on synthetic benchmarks.",
        epilog="Any config key can be overridden with --section.key=value.",
    )
    commands = parser.add_subparsers(
        dest="command", required=True, parser_class=UsageParser
    )

    def command(name: str, text: str) -> argparse.ArgumentParser:
        return commands.add_parser(name, help=text, allow_abbrev=False)

    gen = command("gen-data", "write the synthetic dataset")
    gen.add_argument("--out", required=True, help="dataset file to write")

    train = command("train", "train a model")
    train.add_argument("--resume", action="store_true")

    ev = command("eval", "probe and cluster the descriptors")
    proj = command("project", "2D projection of w_id")
    interp = command("interpolate", "motion interpolation sweep")
    interp.add_argument("--a", type=int, required=True, help="start sample index")
    interp.add_argument("--b", type=int, required=True, help="end sample index")
    interp.add_argument("--steps", type=int, help="overrides eval.interpolation_steps")
    for sub in (ev, proj, interp):
        sub.add_argument("--checkpoint", help="defaults to <output>/model.ckpt")
        sub.add_argument("--dataset", help="dataset export; default: config.world")

    command("gradcheck", "finite-difference gradient checks")
    command("ablation", "train and compare the ablation levels")

    for sub in commands.choices.values():
        _common(sub)
    return parser


def _overrides(args: argparse.Namespace, extras: Sequence[str]) -> List[str]:
    overrides = []
    for item in extras:
        if not item.startswith("--") or "." not in item.split("=", 1)[0]:
            raise ConfigError(item, "unrecognized argument")
        overrides.append(item)
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    return overrides


def _dispatch(fs: FaceSpace, args: argparse.Namespace) -> int:
    if args.command == "gen-data":
        fs.generate_data(args.out)
        return EXIT_OK
    if args.command == "train":
        fs.train(resume=args.resume)
        return EXIT_OK
    if args.command == "gradcheck":
        failed = [r.name for r in fs.gradcheck() if not r.passed]
        if failed:
            logger.error("gradient check failed for %s", ", ".join(failed))
            return EXIT_NUMERIC
        return EXIT_OK
    if args.command == "ablation":
        fs.ablation()
        return EXIT_OK

    fs.load(args.checkpoint)
    if args.dataset:
        fs.use_dataset(args.dataset)
    if args.command == "eval":
        fs.evaluate()
    elif args.command == "project":
        fs.project()
    elif args.command == "interpolate":
        fs.interpolate(args.a, args.b, args.steps)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)

    try:
        overrides = _overrides(args, extras)
        if args.output is not None:
            overrides.append(f"output.directory={args.output}")
        with FaceSpace(config_path=args.config, overrides=overrides) as fs:
            return _dispatch(fs, args)
    except NumericError as e:
        logger.error("numeric failure: %s", e)
        return EXIT_NUMERIC
    except FaceSpaceError as e:
        logger.error("%s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
