"""
Inference cascade: RPN proposals, proposal NMS per preset, refinement with the
confidence and box heads only, then class-wise final NMS over the proposals that
pooled points.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from src.ifgkit.modules.eval.labels import LabeledBox
from src.ifgkit.modules.geom.core import Box3D, decode_boxes
from src.ifgkit.modules.geom.nms import nms, score_order
from src.ifgkit.modules.pipeline.config import InferConfig, PipelineConfig
from src.ifgkit.modules.pipeline.detector import Detector
from src.ifgkit.modules.pointops.core import PointCloud
from src.ifgkit.modules.templates.CONSTANTS import TemplateCONSTANTS

INFERENCE_HEADS = ('conf', 'reg')


@dataclass(frozen=True)
class Detection:
    box: Box3D
    class_id: int
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"Detection score must lie in [0, 1], got {self.score}")

    def labeled(self, frame_id: int = 0) -> LabeledBox:
        return LabeledBox(self.box, self.class_id, self.score, frame_id)


def detect(detector: Detector, cloud: PointCloud, cfg: InferConfig) -> List[Detection]:
    """Detections sorted by descending score."""
    if len(cloud) == 0:
        return []
    rpn = detector.rpn
    preset = cfg.proposal_nms
    proposals = rpn.proposals(rpn.forward(cloud), preset.iou_threshold, preset.keep)
    if len(proposals) == 0:
        return []
    refined = detector.refiner.forward(cloud, proposals.boxes, heads=INFERENCE_HEADS)
    clamp = rpn.cfg.size_delta_clamp
    deltas = refined.deltas.copy()
    deltas[:, 3:6] = np.clip(deltas[:, 3:6], -clamp, clamp)
    boxes = decode_boxes(deltas, proposals.boxes)

    detections = []
    for class_id in TemplateCONSTANTS.CLASS_IDS:
        # proposals that pooled no points only carry the zero-feature fallback score
        members = np.nonzero((proposals.classes == class_id) & ~refined.empty)[0]
        kept = members[nms(boxes[members], refined.scores[members], cfg.final_nms_threshold, cfg.max_detections)]
        detections.extend(
            Detection(Box3D.from_array(boxes[i]), class_id, float(refined.scores[i]))
            for i in kept if refined.scores[i] >= cfg.score_threshold
        )
    order = score_order([d.score for d in detections])
    return [detections[i] for i in order[:cfg.max_detections]]


def infer(cloud: PointCloud, checkpoint_path: str, cfg: PipelineConfig) -> List[Detection]:
    return detect(Detector.from_checkpoint(cfg, checkpoint_path), cloud, cfg.infer)
