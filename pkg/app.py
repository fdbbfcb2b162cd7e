#!/usr/bin/env python3
import argparse
import logging
import os
import sys

from vml_lab.errors import ConfigError, LabError
from vml_lab.experiment import run_experiment
from vml_lab.experiment_config import MODES, load_config, parse_config
from vml_lab.outputs import emit_outputs

# Configure the logger
logger = logging.getLogger(__name__)
logging.basicConfig(level=os.environ.get("LOG_LEVEL", "INFO"))


def _overrides(args) -> dict:
    values = {
        "mode": args.mode,
        "runtime.out": args.out,
        "runtime.formats": args.formats,
        "runtime.threads": args.threads,
        "runtime.seed": args.seed,
    }
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        values[key] = value
    return values


def main(args) -> int:
    try:
        overrides = _overrides(args)
        if args.config:
            spec = load_config(args.config, overrides)
        else:
            text = "\n".join(f"{k} = {v}" for k, v in overrides.items() if v is not None)
            spec = parse_config(text)
    except ConfigError as err:
        where = f" (line {err.line})" if err.line else ""
        logger.error(f"Invalid configuration{where}: {err}")
        return 2

    result = run_experiment(spec)
    out_dir = os.path.join(spec.runtime.out, spec.name)
    try:
        emit_outputs(result, spec.runtime.formats, out_dir)
    except LabError as err:
        logger.error(f"Could not write outputs: {err}")
        return 1
    if result.error is not None:
        logger.error(f"Failed in stage {result.error['stage']}: {result.error['message']}")
        return 1
    failed = [v.check for v in result.verdicts if not v.passed]
    if failed:
        logger.error(f"Failed checks: {', '.join(failed)}")
        return 1
    logger.info(f"All {len(result.verdicts)} checks passed; bundle in {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Rarefaction-wave hydrodynamic-limit experiments")
    subparsers = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sub = subparsers.add_parser(mode)
        sub.add_argument("--config", help="flat key = value or JSON experiment file")
        sub.add_argument("--out", default=os.environ.get("VML_OUTPUT_ROOT"))
        sub.add_argument("--formats", default=None, help="comma separated subset of csv,json,svg")
        sub.add_argument("--threads", type=int, default=os.environ.get("VML_THREADS"))
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    return parser


def cli():
    args = build_parser().parse_args()
    logger.info("args: {}".format(vars(args)))
    sys.exit(main(args))


if __name__ == "__main__":
    cli()
