"""
IoU-based target assignment.

Proposals are matched to ground truth with 3D IoU and labeled foreground,
background or ignored; anchors are matched per class with footprint IoU.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from src.ifgkit.modules.geom.core import encode_boxes
from src.ifgkit.modules.geom.iou import iou_matrix

IGNORED = -1


def _per_class(values: Dict[int, float]) -> Dict[int, float]:
    return {int(k): float(v) for k, v in values.items()}


@dataclass(frozen=True)
class AssignmentConfig:
    """
    Thresholds for labeling and sampling.

    Attributes
    ----------
    fg_threshold, bg_threshold : float
        Proposals above `fg_threshold` are foreground, below `bg_threshold`
        background, the rest ignored.
    anchor_pos, anchor_neg : dict
        Per-class anchor IoU thresholds.
    positive_sample_iou : float
        Minimum IoU of a positive in balanced sampling and of a proposal used
        for box regression.
    """
    fg_threshold: float = 0.75
    bg_threshold: float = 0.25
    anchor_pos: Dict[int, float] = field(default_factory=lambda: {1: 0.6, 2: 0.5, 3: 0.5})
    anchor_neg: Dict[int, float] = field(default_factory=lambda: {1: 0.45, 2: 0.35, 3: 0.35})
    train_nms_threshold: float = 0.8
    train_keep: int = 128
    positive_sample_iou: float = 0.55
    sample_size: int = 128

    def __post_init__(self) -> None:
        object.__setattr__(self, 'anchor_pos', _per_class(self.anchor_pos))
        object.__setattr__(self, 'anchor_neg', _per_class(self.anchor_neg))
        if not 0.0 <= self.bg_threshold < self.fg_threshold <= 1.0:
            raise ValueError(f"Need 0 <= b < a <= 1, got a={self.fg_threshold}, b={self.bg_threshold}")
        if set(self.anchor_pos) != set(self.anchor_neg):
            raise ValueError("anchor_pos and anchor_neg must name the same classes")
        for class_id, pos in self.anchor_pos.items():
            if not self.anchor_neg[class_id] < pos:
                raise ValueError(f"Class {class_id}: anchor_neg must be below anchor_pos")
        if self.train_keep < 1 or self.sample_size < 1:
            raise ValueError("train_keep and sample_size must be positive")


@dataclass(frozen=True)
class MatchResult:
    """Best IoU per proposal and the index of that GT (-1 only when there are no GTs)."""
    ious: np.ndarray
    gt_indices: np.ndarray


@dataclass(frozen=True)
class ProposalLabel:
    class_label: int
    matched_gt_index: Optional[int]
    matched_iou: float

    @property
    def is_foreground(self) -> bool:
        return self.class_label >= 1

    @property
    def is_ignored(self) -> bool:
        return self.class_label == IGNORED


def match_proposals_to_gt(proposals: np.ndarray, gt_boxes: np.ndarray) -> MatchResult:
    """Per proposal, the highest 3D IoU over all GTs and its argmax, also when that IoU is 0."""
    proposals = np.asarray(proposals, dtype=np.float64).reshape(-1, 7)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 7)
    if len(gt_boxes) == 0 or len(proposals) == 0:
        return MatchResult(np.zeros(len(proposals)), np.full(len(proposals), -1, dtype=np.int64))
    # one clipping pass per GT, vectorized over proposals
    table = iou_matrix(gt_boxes, proposals, '3d').T
    best = np.argmax(table, axis=1)
    ious = table[np.arange(len(proposals)), best]
    return MatchResult(ious, best.astype(np.int64))


def label_proposals(matches: MatchResult, gt_classes: np.ndarray, cfg: AssignmentConfig) -> List[ProposalLabel]:
    """Foreground above a (matched GT's class), background below b, ignored in between."""
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    labels = []
    for iou, gt_index in zip(matches.ious, matches.gt_indices):
        iou = float(iou)
        index = int(gt_index) if gt_index >= 0 else None
        if iou > cfg.fg_threshold:
            labels.append(ProposalLabel(int(gt_classes[index]), index, iou))
        elif iou < cfg.bg_threshold:
            labels.append(ProposalLabel(0, index, iou))
        else:
            labels.append(ProposalLabel(IGNORED, index, iou))
    return labels


@dataclass(frozen=True)
class AnchorTargets:
    """
    Per-anchor labels (-1 ignored, 0 background, else class), matched GT
    indices (-1 when unmatched) and regression targets (zero unless positive).
    """
    labels: np.ndarray
    gt_indices: np.ndarray
    targets: np.ndarray

    @property
    def num_fg(self) -> int:
        return int(np.sum(self.labels >= 1))


def anchor_targets(anchors: np.ndarray, anchor_classes: np.ndarray, gt_boxes: np.ndarray,
                   gt_classes: np.ndarray, cfg: AssignmentConfig) -> AnchorTargets:
    """
    Label anchors against same-class GTs by footprint IoU: positive at or above
    the class's `anchor_pos`, negative below `anchor_neg`, ignored between.
    Each GT also claims its best anchor when that IoU is positive.
    """
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 7)
    anchor_classes = np.asarray(anchor_classes, dtype=np.int64)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 7)
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    n = len(anchors)
    labels = np.zeros(n, dtype=np.int64)
    gt_indices = np.full(n, -1, dtype=np.int64)
    targets = np.zeros((n, 7))

    for class_id in np.unique(anchor_classes):
        members = np.nonzero(anchor_classes == class_id)[0]
        gts = np.nonzero(gt_classes == class_id)[0]
        if gts.size == 0:
            continue
        table = iou_matrix(gt_boxes[gts], anchors[members], 'bev').T
        best_gt = np.argmax(table, axis=1)
        best_iou = table[np.arange(len(members)), best_gt]
        pos = cfg.anchor_pos.get(int(class_id), 0.6)
        neg = cfg.anchor_neg.get(int(class_id), 0.45)

        positive = best_iou >= pos
        ignored = (best_iou >= neg) & ~positive
        matched = best_gt.copy()
        for column in range(len(gts)):
            row = int(np.argmax(table[:, column]))
            if table[row, column] > 0:
                positive[row] = True
                ignored[row] = False
                matched[row] = column

        labels[members[ignored]] = IGNORED
        labels[members[positive]] = class_id
        gt_indices[members[positive]] = gts[matched[positive]]

    fg = labels >= 1
    if np.any(fg):
        targets[fg] = encode_boxes(gt_boxes[gt_indices[fg]], anchors[fg])
    return AnchorTargets(labels, gt_indices, targets)


def sample_balanced(labels: List[ProposalLabel], n: int = 128, pos_iou: float = 0.55,
                    rng: Optional[np.random.Generator] = None, seed: int = 0) -> np.ndarray:
    """
    Up to n/2 positives (matched IoU >= pos_iou) and the rest from the
    remaining proposals, each side a uniform draw without replacement.
    Negatives fill in for missing positives and vice versa. Returned indices
    are sorted.
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    ious = np.array([label.matched_iou for label in labels], dtype=np.float64)
    positives = np.nonzero(ious >= pos_iou)[0]
    negatives = np.nonzero(ious < pos_iou)[0]
    n_pos = min(len(positives), n // 2)
    n_neg = min(len(negatives), n - n_pos)
    n_pos = min(len(positives), n - n_neg)
    chosen = np.concatenate([
        rng.choice(positives, size=n_pos, replace=False) if n_pos else np.zeros(0, dtype=np.int64),
        rng.choice(negatives, size=n_neg, replace=False) if n_neg else np.zeros(0, dtype=np.int64),
    ])
    return np.sort(chosen.astype(np.int64))
