"""Command-line entry point."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import structlog

from .commands import (
    cmd_baseline_icp,
    cmd_eval,
    cmd_render_debug,
    cmd_synth,
    cmd_train_deform,
    cmd_train_reg,
    load_context,
)
from .config import get_settings
from .errors import SelfPoseError

logger = structlog.get_logger()


def configure_logging(level: str = "INFO", json_output: bool = False) -> None:
    """Configure structlog once per process."""
    renderer = (
        structlog.processors.JSONRenderer()
        if json_output
        else structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())
    )
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelName(level.upper())
        ),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selfpose",
        description="Self-supervised category-level pose and size estimation from depth.",
    )
    parser.add_argument("--config", type=Path, help="Experiment config (JSON)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a dotted config path, e.g. --set deform.epochs=5 (repeatable)",
    )
    parser.add_argument("--log-level", help="Overrides LOG_LEVEL")
    parser.add_argument("--json-logs", action="store_true", help="Emit JSON log lines")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("synth", help="Generate the synthetic fixture dataset")

    for name, stage in (("train-deform", "deformation"), ("train-reg", "registration")):
        sub = commands.add_parser(name, help=f"Train the {stage} network")
        sub.add_argument(
            "--no-resume", action="store_true", help="Ignore an existing checkpoint"
        )

    evaluate = commands.add_parser("eval", help="Evaluate the trained pipeline on the test split")
    evaluate.add_argument(
        "--icp-refine",
        action="store_true",
        default=None,
        help="Also report poses refined with similarity ICP",
    )

    commands.add_parser("baseline-icp", help="Evaluate the template-only ICP baseline")

    debug = commands.add_parser("render-debug", help="Render one test frame at its predicted pose")
    debug.add_argument("--frame", type=int, default=0, help="Index into the test split")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    configure_logging(
        args.log_level or settings.log_level,
        json_output=args.json_logs or settings.log_format == "json",
    )

    try:
        ctx = load_context(args.config, args.overrides, settings)
        logger.info(
            "Command started",
            command=args.command,
            config_hash=ctx.cfg.config_hash(),
            output=str(ctx.experiment_dir),
        )
        if args.command == "synth":
            cmd_synth(ctx)
        elif args.command == "train-deform":
            cmd_train_deform(ctx, resume=not args.no_resume)
        elif args.command == "train-reg":
            cmd_train_reg(ctx, resume=not args.no_resume)
        elif args.command == "eval":
            cmd_eval(ctx, icp_refine=args.icp_refine)
        elif args.command == "baseline-icp":
            cmd_baseline_icp(ctx)
        elif args.command == "render-debug":
            cmd_render_debug(ctx, frame_index=args.frame)
    except SelfPoseError as e:
        logger.error("Command failed", command=args.command, category=e.category, error=e.message)
        return e.exit_code
    except Exception as e:
        logger.exception("Command crashed", command=args.command, error=str(e))
        return 1

    logger.info("Command finished", command=args.command)
    return 0


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
