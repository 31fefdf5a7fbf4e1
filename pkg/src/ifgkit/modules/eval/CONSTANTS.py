"""
Constants for label files and AP evaluation.
"""

import math
from typing import Tuple


class EvalCONSTANTS:
    """
    Constants for label I/O and average precision.
    """
    LABEL_FIELDS: int = 15
    SCORED_LABEL_FIELDS: int = 16
    DECIMALS: int = 6
    # truncation, occlusion, alpha, 2D box
    UNUSED_FIELDS: int = 7

    IOU_THRESHOLDS = {1: 0.7, 2: 0.5, 3: 0.5}
    BUCKETS: Tuple[Tuple[float, float], ...] = ((0.0, 20.0), (20.0, 40.0), (40.0, math.inf))
    MODES: Tuple[str, ...] = ('R11', 'R40')
    ALL_BUCKETS: str = 'all'

    class Csv:
        """
        AP result file columns.
        """
        HEADER: Tuple[str, ...] = ('class', 'bucket', 'mode', 'ap')
        SKIPPED: str = 'skipped'
