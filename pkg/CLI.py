from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from typing import List, Optional


if __package__ in (None, ""):
    # Run from a checkout: the repository root is on sys.path
    from commands import COMMANDS  # type: ignore[no-redef]
    from __version__ import __version__  # type: ignore[no-redef]
else:
    from .commands import COMMANDS
    from .__version__ import __version__

logger = logging.getLogger('s2d.CLI')

VERSION = __version__


@dataclass
class CLIContext:
    """Options shared by every sub-command."""

    command: str = "train"
    config_path: Optional[str] = None
    overrides: List[str] = field(default_factory=list)
    output_dir: Optional[str] = None
    debug: bool = False
    checkpoint: Optional[str] = None
    resume: Optional[str] = None
    max_steps: Optional[int] = None
    seeds: Optional[List[int]] = None
    clip_mode: Optional[str] = None

    def __str__(self) -> str:
        return (
            f"Command: {self.command}\n"
            f"Config: {self.config_path or '<defaults>'}\n"
            f"Overrides: {self.overrides}\n"
            f"Output: {self.output_dir or '<from config>'}\n"
            f"Debug: {self.debug}"
        )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", dest="config_path", help="JSON run configuration")
    common.add_argument("-s", "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config value, e.g. --set tma.adapter=none (repeatable)")
    common.add_argument("-o", "--output-dir", help="Output directory (default: config output_dir)")
    common.add_argument("--debug", action="store_true", help="Enable debug logging")

    parser = argparse.ArgumentParser(
        prog="s2d",
        description="Adapt a frozen image transformer to clip classification with prompts and adapters",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common], help="Write a synthetic dataset and its manifest")

    train = sub.add_parser("train", parents=[common], help="Train and write curves, report and checkpoints")
    train.add_argument("--resume", help="Checkpoint to resume from")
    train.add_argument("--max-steps", type=int, help="Stop (and checkpoint) after this many optimizer steps")

    evaluate = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint on the test split")
    evaluate.add_argument("--checkpoint", help="Checkpoint to evaluate")
    evaluate.add_argument("--clip-mode", choices=["uniform-1", "uniform-2"], help="Override the test clip mode")

    sub.add_parser("gradcheck", parents=[common], help="Central-difference check of the full training loss")

    ablate = sub.add_parser("ablate", parents=[common], help="Train every cell of an ablation table")
    ablate.add_argument("--seeds", type=int, nargs="+", help="Seeds to average over")

    dump = sub.add_parser("dump", parents=[common], help="Dump video features and last-layer attention")
    dump.add_argument("--checkpoint", help="Checkpoint to load")
    return parser


def context_from_args(args: argparse.Namespace) -> CLIContext:
    return CLIContext(
        command=args.command,
        config_path=args.config_path,
        overrides=list(args.overrides or []),
        output_dir=args.output_dir,
        debug=bool(args.debug),
        checkpoint=getattr(args, "checkpoint", None),
        resume=getattr(args, "resume", None),
        max_steps=getattr(args, "max_steps", None),
        seeds=getattr(args, "seeds", None),
        clip_mode=getattr(args, "clip_mode", None),
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the CLI."""
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stderr)],
    )

    context = context_from_args(args)
    logger.debug("CLI context:\n%s", context)
    try:
        return COMMANDS[context.command](context)
    except KeyboardInterrupt:
        print("\nInterrupted.", file=sys.stderr)
        return 130


__all__ = ["CLIContext", "build_parser", "context_from_args", "main"]


if __name__ == "__main__":
    sys.exit(main())
