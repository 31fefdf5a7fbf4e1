"""
Constants for scene synthesis, the detector and its inference presets.
"""

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class NmsPreset:
    """Proposal NMS used at inference before refinement."""
    iou_threshold: float
    keep: int


class PipelineCONSTANTS:
    """
    Constants for the two-stage detector pipeline.
    """
    ANCHOR_YAWS = (0.0, math.pi / 2)
    # per-cell hand features: log1p count, mean z, max z, z variance
    CELL_FEATURES: int = 4
    # anchor outputs: one logit and seven deltas
    ANCHOR_OUTPUTS: int = 8

    class Presets:
        """
        Inference proposal presets.
        """
        KITTI = NmsPreset(0.7, 100)
        WAYMO = NmsPreset(0.8, 500)
        BY_NAME = {'kitti': KITTI, 'waymo': WAYMO}

    class Scene:
        """
        Scene dump file layout.
        """
        CLOUD_SUFFIX: str = '.bin'
        LABEL_SUFFIX: str = '.txt'
        CLOUD_DTYPE: str = '<f4'
        NAME_FORMAT: str = '{:06d}'

    class Ablation:
        """
        Module ablation grid: (method, use_tafe, use_pscl).
        """
        METHODS = (('A', False, False), ('B', True, False), ('C', False, True), ('D', True, True))
        HEADER = ('method', 'TAFE', 'PSCL', 'car AP', 'ped AP', 'cyc AP')
