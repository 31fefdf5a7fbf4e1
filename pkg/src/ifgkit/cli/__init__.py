from .core import build_parser, dispatch
from .commands import COMMANDS, Command, CommandSpec
from .checks import SuiteResult, run_checks
from .report import format_report, print_report

__all__ = [
    'build_parser', 'dispatch', 'COMMANDS', 'Command', 'CommandSpec', 'SuiteResult', 'run_checks',
    'format_report', 'print_report',
]
