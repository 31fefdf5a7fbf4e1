"""
Core module for the command-line front end.

This module builds the `ifgkit` argument parser from the registered command
classes and maps every invocation to an exit code: 0 on success, 2 on usage
errors and 1 on runtime failures, whose traceback is written to
`<out>/error.txt`.
"""

import argparse
import io
import os
import traceback
from typing import Optional, Sequence

from absl import logging

from src.ifgkit.cli.commands import COMMANDS, CommandSpec
from src.ifgkit.cli.CONSTANTS import CliCONSTANTS
from src.ifgkit.utils.CONSTANTS import DEFAULT_OUT_DIR, ERROR_FILENAME

COMMON_FLAGS = ('config', 'out', 'seed', 'verbose', 'subcommand')


def common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--config', metavar='PATH', help='JSON config file; its sections mirror the config classes')
    parser.add_argument('--out', metavar='DIR', default=DEFAULT_OUT_DIR, help='Directory receiving every artifact')
    parser.add_argument('--seed', type=int, metavar='N', help='Base seed (default 0)')
    parser.add_argument('--verbose', action='store_true', help='Log progress at INFO level')
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=CliCONSTANTS.PROG,
        description='Template-guided two-stage 3D detection on synthetic point-cloud scenes.',
        epilog=CliCONSTANTS.PRECEDENCE,
    )
    subparsers = parser.add_subparsers(dest='subcommand', required=True, metavar='SUBCOMMAND')
    parent = common_parser()
    for name, command in COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[parent], help=command.help, description=command.help,
                                    epilog=CliCONSTANTS.PRECEDENCE)
        command.add_arguments(sub)
    return parser


def spec_from_namespace(args: argparse.Namespace) -> CommandSpec:
    values = vars(args)
    flags = {k: v for k, v in values.items() if k not in COMMON_FLAGS or k == 'seed'}
    seed = 0 if args.seed is None else args.seed
    return CommandSpec(args.subcommand, flags, args.config, seed, args.out)


def write_error_file(out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, ERROR_FILENAME)
    log_buffer = io.StringIO()
    traceback.print_exc(file=log_buffer)
    with open(path, 'w', encoding='utf-8') as log_file:
        log_file.write(log_buffer.getvalue())
    return path


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse `argv` (default `sys.argv[1:]`), run one subcommand and return its
    exit code.

    Examples
    --------
    >>> dispatch(['gen-templates', '--out', 'out/templates', '--k', '1024'])
    0
    """
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else CliCONSTANTS.EXIT_USAGE

    logging.set_verbosity(logging.INFO if args.verbose else logging.WARNING)
    try:
        spec = spec_from_namespace(args)
    except ValueError as e:
        print(f"{CliCONSTANTS.PROG} {args.subcommand}: {e}")
        return CliCONSTANTS.EXIT_USAGE

    try:
        return COMMANDS[spec.subcommand](spec).execute()
    except Exception as error:
        path = write_error_file(spec.out_dir)
        logging.error('%s failed: %s (traceback in %s)', spec.subcommand, error, path)
        print(error)
        return CliCONSTANTS.EXIT_FAILURE
