"""
Precision/recall curves and interpolated average precision.

Detections are matched greedily in descending score order, within one frame
and one class, to the unmatched ground truth of highest 3D IoU.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.ifgkit.modules.eval.CONSTANTS import EvalCONSTANTS
from src.ifgkit.modules.eval.labels import LabeledBox
from src.ifgkit.modules.geom.core import boxes_to_array
from src.ifgkit.modules.geom.iou import iou_one_to_many
from src.ifgkit.modules.geom.nms import score_order
from src.ifgkit.modules.templates.CONSTANTS import class_name

Bucket = Tuple[float, float]
# recall positions are compared with this slack so that 1/3 reaches 0.3 but not 0.35
RECALL_SLACK = 1e-12


def _bucket(values) -> Bucket:
    lo, hi = values
    return float(lo), math.inf if hi is None else float(hi)


@dataclass(frozen=True)
class EvalConfig:
    """
    Attributes
    ----------
    iou_thresholds : dict
        Per-class 3D IoU threshold of a true positive.
    modes : tuple of str
        Recall interpolation modes to report, 'R11' and/or 'R40'.
    buckets : tuple of (lo, hi)
        Half-open planar distance ranges; `hi` may be None (unbounded) in JSON.
    summary_mode : str
        Mode of the per-class APs in the ablation table.
    """
    iou_thresholds: Dict[int, float] = field(default_factory=lambda: dict(EvalCONSTANTS.IOU_THRESHOLDS))
    modes: Tuple[str, ...] = EvalCONSTANTS.MODES
    buckets: Tuple[Bucket, ...] = EvalCONSTANTS.BUCKETS
    summary_mode: str = 'R40'

    def __post_init__(self) -> None:
        object.__setattr__(self, 'iou_thresholds', {int(k): float(v) for k, v in self.iou_thresholds.items()})
        object.__setattr__(self, 'buckets', tuple(_bucket(b) for b in self.buckets))
        object.__setattr__(self, 'modes', tuple(self.modes))
        if any(not 0.0 < t <= 1.0 for t in self.iou_thresholds.values()):
            raise ValueError(f"IoU thresholds must lie in (0, 1], got {self.iou_thresholds}")
        unknown = [m for m in (*self.modes, self.summary_mode) if m not in EvalCONSTANTS.MODES]
        if unknown or not self.modes:
            raise ValueError(f"Unknown recall mode(s) {unknown}. Use: {', '.join(EvalCONSTANTS.MODES)}")
        buckets = self.buckets
        if not buckets or buckets[0][0] != 0.0 or buckets[-1][1] != math.inf:
            raise ValueError(f"Buckets must cover [0, inf), got {buckets}")
        for (lo, hi), (next_lo, _) in zip(buckets, buckets[1:] + ((math.inf, None),)):
            if not lo < hi or (next_lo != math.inf and hi != next_lo):
                raise ValueError(f"Buckets must be ordered, disjoint and contiguous, got {buckets}")


@dataclass(frozen=True)
class PrCurve:
    """(precision, recall) after each detection in score order, and the GT count."""
    points: Tuple[Tuple[float, float], ...]
    num_gt: int


@dataclass(frozen=True)
class MatchOutcome:
    """Class detections in score order, their TP flags and matched GT positions (-1 if none)."""
    order: np.ndarray
    true_positive: np.ndarray
    matched_gt: np.ndarray


def _of_class(objects: Sequence[LabeledBox], class_id: int) -> List[int]:
    return [i for i, obj in enumerate(objects) if obj.class_id == class_id]


def match_detections(detections: Sequence[LabeledBox], gts: Sequence[LabeledBox], class_id: int,
                     iou_threshold: float) -> MatchOutcome:
    """Greedy matching; indices in the result refer to the input sequences."""
    dets = _of_class(detections, class_id)
    gt_ids = _of_class(gts, class_id)
    scores = np.array([detections[i].score or 0.0 for i in dets], dtype=np.float64)
    order = np.asarray(dets, dtype=np.int64)[score_order(scores)] if dets else np.zeros(0, dtype=np.int64)

    by_frame: Dict[int, List[int]] = {}
    for i in gt_ids:
        by_frame.setdefault(gts[i].frame_id, []).append(i)
    frame_boxes = {frame: boxes_to_array(gts[i].box for i in members) for frame, members in by_frame.items()}
    taken = set()

    true_positive = np.zeros(len(order), dtype=bool)
    matched_gt = np.full(len(order), -1, dtype=np.int64)
    for rank, i in enumerate(order):
        members = by_frame.get(detections[i].frame_id)
        if not members:
            continue
        ious = iou_one_to_many(detections[i].box.as_array(), frame_boxes[detections[i].frame_id], '3d')
        free = np.array([m not in taken for m in members])
        ious = np.where(free, ious, -1.0)
        best = int(np.argmax(ious))
        if ious[best] >= iou_threshold:
            true_positive[rank] = True
            matched_gt[rank] = members[best]
            taken.add(members[best])
    return MatchOutcome(order, true_positive, matched_gt)


def _curve(true_positive: np.ndarray, num_gt: int) -> PrCurve:
    tp = np.cumsum(true_positive)
    ranks = np.arange(1, len(true_positive) + 1)
    recall = tp / num_gt if num_gt else np.zeros(len(tp))
    precision = tp / ranks
    return PrCurve(tuple(zip(precision.tolist(), recall.tolist())), num_gt)


def pr_curve(detections: Sequence[LabeledBox], gts: Sequence[LabeledBox], class_id: int,
             iou_threshold: float) -> PrCurve:
    outcome = match_detections(detections, gts, class_id, iou_threshold)
    return _curve(outcome.true_positive, len(_of_class(gts, class_id)))


def recall_positions(mode: str) -> np.ndarray:
    if mode == 'R11':
        return np.arange(11) / 10
    if mode == 'R40':
        return np.arange(1, 41) / 40
    raise ValueError(f"Unknown recall mode '{mode}'. Use: {', '.join(EvalCONSTANTS.MODES)}")


def average_precision(curve: PrCurve, mode: str = 'R40') -> Optional[float]:
    """
    Mean over recall positions of the best precision at recall >= r; positions
    past the highest recall count as 0. None when there is no ground truth.
    """
    positions = recall_positions(mode)
    if curve.num_gt == 0:
        return None
    if not curve.points:
        return 0.0
    precision, recall = (np.array(v, dtype=np.float64) for v in zip(*curve.points))
    total = 0.0
    for r in positions:
        reached = recall >= r - RECALL_SLACK
        total += float(precision[reached].max()) if np.any(reached) else 0.0
    return total / len(positions)


def bucket_label(bucket: Bucket) -> str:
    lo, hi = bucket
    return f'{lo:g}-{hi:g}'


def bucket_index(distance: float, buckets: Sequence[Bucket]) -> int:
    for i, (lo, hi) in enumerate(buckets):
        if lo <= distance < hi:
            return i
    raise ValueError(f"Distance {distance} lies outside every bucket")


def bucketed_ap(detections: Sequence[LabeledBox], gts: Sequence[LabeledBox],
                cfg: EvalConfig) -> Dict[Tuple[int, str], Dict[str, Optional[float]]]:
    """
    AP per (class, bucket) and mode. GTs fall in the bucket of their planar
    distance; a detection follows its matched GT, else its own distance.
    """
    table: Dict[Tuple[int, str], Dict[str, Optional[float]]] = {}
    for class_id, threshold in sorted(cfg.iou_thresholds.items()):
        outcome = match_detections(detections, gts, class_id, threshold)
        gt_bucket = {i: bucket_index(gts[i].box.planar_distance, cfg.buckets) for i in _of_class(gts, class_id)}
        det_bucket = {}
        for i, gt in zip(outcome.order, outcome.matched_gt):
            own = bucket_index(detections[i].box.planar_distance, cfg.buckets)
            det_bucket[int(i)] = gt_bucket[int(gt)] if gt >= 0 else own
        for b, bucket in enumerate(cfg.buckets):
            dets = [detections[i] for i, k in det_bucket.items() if k == b]
            members = [gts[i] for i, k in gt_bucket.items() if k == b]
            curve = pr_curve(dets, members, class_id, threshold)
            table[(class_id, bucket_label(bucket))] = {mode: average_precision(curve, mode) for mode in cfg.modes}
    return table


@dataclass(frozen=True)
class ApRow:
    class_name: str
    bucket: str
    mode: str
    ap: Optional[float]

    def cells(self) -> Tuple[str, str, str, str]:
        ap = EvalCONSTANTS.Csv.SKIPPED if self.ap is None else f'{self.ap:.{EvalCONSTANTS.DECIMALS}f}'
        return self.class_name, self.bucket, self.mode, ap


def class_ap(detections: Sequence[LabeledBox], gts: Sequence[LabeledBox], class_id: int, cfg: EvalConfig,
             mode: str) -> Optional[float]:
    return average_precision(pr_curve(detections, gts, class_id, cfg.iou_thresholds[class_id]), mode)


def evaluate(detections: Sequence[LabeledBox], gts: Sequence[LabeledBox], cfg: EvalConfig = EvalConfig()) -> List[ApRow]:
    """Per class: AP over all distances, then per bucket, for every configured mode."""
    bucketed = bucketed_ap(detections, gts, cfg)
    rows = []
    for class_id, threshold in sorted(cfg.iou_thresholds.items()):
        curve = pr_curve(detections, gts, class_id, threshold)
        name = class_name(class_id)
        for mode in cfg.modes:
            rows.append(ApRow(name, EvalCONSTANTS.ALL_BUCKETS, mode, average_precision(curve, mode)))
        for bucket in cfg.buckets:
            label = bucket_label(bucket)
            for mode in cfg.modes:
                rows.append(ApRow(name, label, mode, bucketed[(class_id, label)][mode]))
    return rows


def write_ap_csv(rows: Sequence[ApRow], path: str) -> str:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(EvalCONSTANTS.Csv.HEADER)
        writer.writerows(row.cells() for row in rows)
    return path
