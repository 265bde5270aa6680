#!/usr/bin/env python3
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

# coding=utf-8

"""
CLI for pre-training molecular graph networks and fine-tuning them.
"""

import argparse
import sys
import traceback
from typing import List

from packaging.version import Version

from molpretrain import environment

from .args import parse_args
from .config import RunConfig
from .exceptions import Error
from .logger import init_logging, logger
from .numcore import precision_dtype, set_default_dtype
from .sentry import init_sentry, report_to_sentry


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the `--config` file, then command line flags."""
    config = RunConfig(getattr(args, "config", None))
    config.apply_args(args)
    set_default_dtype(precision_dtype(config.precision))
    logger.debug(
        "seed %s, %s-bit arithmetic, config %s",
        config.seed,
        config.precision,
        config.filename or "(defaults)",
    )
    return config


def main(argv: List[str], *, is_development: bool):
    try:
        args = parse_args(argv)

        if args.trace:
            environment.DEBUG = True

        init_logging()

        logger.debug(
            "%s (%s)", environment.MOLPRETRAIN_NAME, environment.MOLPRETRAIN_VERSION
        )

        config = load_run_config(args)

        if not is_development and config.sentry_dsn:
            init_sentry(config.sentry_dsn)

        args.func(args, config)

    except KeyboardInterrupt:
        pass
    except MemoryError:
        logger.error(
            "Out of memory. Lower [model] hidden or ffn, or the batch sizes in "
            "[pretrain] and [finetune]."
        )
        sys.exit(1)
    except Error as e:
        logger.error(e)
        sys.exit(e.status)
    except Exception as e:
        if environment.DEBUG:
            logger.error(traceback.format_exc())
        else:
            logger.error("%s: %s", e.__class__.__name__, e)
            logger.error(
                "Run mol-pretrain again with '--trace' to show debugging output"
            )
        report_to_sentry(e)
        sys.exit(1)


def run():
    is_development = Version(environment.MOLPRETRAIN_VERSION).is_prerelease
    main(sys.argv[1:], is_development=is_development)


if __name__ == "__main__":
    run()
