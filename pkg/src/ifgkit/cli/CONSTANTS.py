"""
Constants for the command-line front end.
"""

from typing import Tuple


class CliCONSTANTS:
    """
    Program name, exit codes and artifact layout under `--out`.
    """
    PROG: str = 'ifgkit'

    EXIT_OK: int = 0
    EXIT_FAILURE: int = 1
    EXIT_USAGE: int = 2

    PRECEDENCE: str = ('Settings are resolved as: command-line flag, then the --config file, then the built-in '
                       'default. A flag that is not given leaves the config value untouched.')

    class Artifacts:
        """
        Sub-directories and files written under the output directory.
        """
        TEMPLATES_DIR: str = 'templates'
        SCENES_DIR: str = 'scenes'
        DETECTIONS_DIR: str = 'detections'
        CHECKS_CSV: str = 'checks.csv'

    class Check:
        """
        Sizes of the oracle suites, full and `--quick`.
        """
        IOU_PAIRS: Tuple[int, int] = (1000, 100)
        NMS_SETS: Tuple[int, int] = (500, 50)
        NMS_SET_SIZE: int = 60
        ENCODING_PAIRS: int = 1000
        # entries checked per tensor of the feature extractor
        EXTRACTOR_ENTRIES: Tuple[int, int] = (24, 6)
        SUPCON_STEPS: int = 200
        SUPCON_STEP_SIZE: float = 0.5

        IOU_TOLERANCE: float = 0.01
        ENCODING_TOLERANCE: float = 1e-9
        AP_TOLERANCE: float = 1e-9
        SUPCON_MIN_SEPARATION: float = 0.3

        HEADER: Tuple[str, ...] = ('suite', 'status', 'checked', 'worst', 'limit')
