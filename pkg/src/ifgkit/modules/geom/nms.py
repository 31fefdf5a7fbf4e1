"""
Greedy non-maximum suppression on footprint IoU.
"""

import numpy as np

from src.ifgkit.modules.geom.iou import bounding_radii, iou_one_to_many, overlap_candidates


def score_order(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score; equal scores keep input order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind='stable')


def nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float, max_keep: int) -> np.ndarray:
    """
    Keep the highest-scoring box, drop every remaining box whose BEV IoU with it
    exceeds `iou_threshold`, repeat. Returns at most `max_keep` indices in
    descending score order.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(boxes) != len(scores):
        raise ValueError(f"Got {len(boxes)} boxes but {len(scores)} scores")
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"IoU threshold must lie in [0, 1], got {iou_threshold}")
    if len(boxes) == 0 or max_keep <= 0:
        return np.zeros(0, dtype=np.int64)

    order = score_order(scores)
    radii = bounding_radii(boxes)
    alive = np.ones(len(boxes), dtype=bool)
    kept = []
    for index in order:
        if not alive[index]:
            continue
        kept.append(index)
        if len(kept) >= max_keep:
            break
        alive[index] = False
        candidates = overlap_candidates(boxes[index], boxes, radii[index], radii)
        candidates = candidates[alive[candidates]]
        if candidates.size:
            ious = iou_one_to_many(boxes[index], boxes[candidates], 'bev')
            alive[candidates[ious > iou_threshold]] = False
    return np.asarray(kept, dtype=np.int64)
