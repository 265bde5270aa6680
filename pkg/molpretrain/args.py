# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import argparse
import textwrap
from importlib import import_module
from pathlib import Path
from typing import List, Tuple

from molpretrain import commands

from .exceptions import UsageError
from .logger import logger


class ArgumentParser(argparse.ArgumentParser):
    """Report bad usage as a `UsageError` so it exits like every other error."""

    def error(self, message: str):
        self.print_usage()
        raise UsageError(message)


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {text}")
    return value


def add_common_arguments(parser: argparse.ArgumentParser):
    """Flags shared by every command that touches a model."""
    parser.add_argument(
        "--config", type=Path, help="INI file overriding the built-in defaults"
    )
    parser.add_argument("--seed", type=int, help="seed for every random draw")
    parser.add_argument(
        "--precision",
        type=int,
        choices=(32, 64),
        help="floating point width of all arrays (default: 64)",
    )
    parser.add_argument("--checkpoint", type=Path, help="checkpoint file")
    parser.add_argument("--out", type=Path, help="output file")


def build_parser() -> Tuple[argparse.ArgumentParser, argparse.ArgumentParser]:
    """The global-flag parser and the full parser with every subcommand."""
    main_parser = ArgumentParser(add_help=False)
    main_parser.add_argument("--version", action="store_true", help=argparse.SUPPRESS)
    main_parser.add_argument(
        "--trace", "--debug", action="store_true", help=argparse.SUPPRESS
    )
    parser = ArgumentParser(
        prog="mol-pretrain",
        parents=[main_parser],
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description=textwrap.dedent(
            """
            Self-supervised pre-training of a molecular graph network and
            fine-tuning on labeled molecule (or molecule pair) datasets.
            """
        ),
        epilog=textwrap.dedent(
            """\
                exit status:
                    0 ok, 1 usage or configuration error, 2 data error,
                    3 numerical failure
            """
        ),
    )

    commands_parser = parser.add_subparsers(
        dest="command",
        metavar="COMMAND",
        description="For full command description: mol-pretrain COMMAND -h",
    )
    commands_parser.required = True

    for command in commands.__all__:
        module = import_module(f"molpretrain.commands.{command}")
        add_parser = getattr(module, "add_parser", None)
        if callable(add_parser):
            add_parser(commands_parser)
            logger.debug("Command added - %s", command)

    help_parser = commands_parser.add_parser("help", help="Show help for a command.")
    help_parser.add_argument("command", nargs=argparse.OPTIONAL)
    help_parser.set_defaults(print_help=True)
    return main_parser, parser


def parse_args(argv: List[str]) -> argparse.Namespace:
    main_parser, parser = build_parser()
    main_args, unknown = main_parser.parse_known_args(argv)

    # map --version to the 'version' command
    if main_args.version:
        unknown = ["version"]

    args = parser.parse_args(unknown)

    # global flags live on main_parser only
    for name, value in vars(main_args).items():
        setattr(args, name, value)

    # printing help needs access to the parser
    if hasattr(args, "print_help"):
        help_argv = ["--help"]
        if args.command:
            help_argv.insert(0, args.command)
        # parse_args calls parser.exit() when passed --help
        parser.parse_args(help_argv)

    return args
