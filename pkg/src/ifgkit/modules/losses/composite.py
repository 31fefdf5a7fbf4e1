"""
Stage losses: the template-guided feature loss, the anchor (RPN) loss and the
four-term refinement loss, plus the per-epoch loss record.
"""

from dataclasses import dataclass, fields
from typing import Optional, Tuple

import numpy as np

from src.ifgkit.modules.losses.contrastive import ContrastiveBatch, Reduction, supcon_loss
from src.ifgkit.modules.losses.core import bce, confidence_label, focal_loss, smooth_l1
from src.ifgkit.modules.losses.CONSTANTS import LossCONSTANTS
from src.ifgkit.modules.netcore.params import ShapeError


@dataclass(frozen=True, eq=False)
class TemplateLossBatch:
    """
    Predicted proposal features against intrinsic targets. `n_p` defaults to
    the number of participating proposals (IoU > mu).
    """
    features: np.ndarray
    targets: np.ndarray
    ious: np.ndarray
    mu: float = LossCONSTANTS.TEMPLATE_MU
    n_p: Optional[int] = None

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        ious = np.asarray(self.ious, dtype=np.float64).reshape(-1)
        if features.shape != targets.shape or features.ndim != 2 or len(ious) != len(features):
            raise ShapeError(f"Template batch shapes disagree: {features.shape}, {targets.shape}, {ious.shape}")
        if not 0.0 < self.mu < 1.0:
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'targets', targets)
        object.__setattr__(self, 'ious', ious)

    @property
    def participating(self) -> np.ndarray:
        return self.ious > self.mu


@dataclass(frozen=True, eq=False)
class TemplateLossResult:
    value: float
    grad: np.ndarray
    participating: int


def template_loss(batch: TemplateLossBatch) -> TemplateLossResult:
    """Smooth L1 between features and targets over participating proposals, divided by N_p."""
    mask = batch.participating
    count = int(mask.sum())
    if count == 0:
        return TemplateLossResult(0.0, np.zeros_like(batch.features), 0)
    n_p = max(batch.n_p if batch.n_p is not None else count, 1)
    value, grad = smooth_l1(batch.features[mask], batch.targets[mask])
    full_grad = np.zeros_like(batch.features)
    full_grad[mask] = grad / n_p
    return TemplateLossResult(value / n_p, full_grad, count)


@dataclass(frozen=True, eq=False)
class AnchorBatch:
    """
    Per-anchor predictions and targets.

    `labels` holds -1 (ignored), 0 (background) or the matched class; an anchor
    is a classification positive when its label equals `anchor_classes`.
    Regression targets are read only where the label is a class.
    """
    scores: np.ndarray
    labels: np.ndarray
    anchor_classes: np.ndarray
    deltas: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.scores)
        if not (len(self.labels) == len(self.anchor_classes) == n
                and np.shape(self.deltas) == np.shape(self.targets) == (n, 7)):
            raise ShapeError(f"Anchor batch shapes disagree for {n} anchors")

    @property
    def foreground(self) -> np.ndarray:
        return np.asarray(self.labels) >= 1

    @property
    def num_fg(self) -> int:
        return int(self.foreground.sum())


@dataclass(frozen=True, eq=False)
class RpnLossResult:
    total: float
    cls: float
    reg: float
    grad_scores: np.ndarray
    grad_deltas: np.ndarray
    num_fg: int


def rpn_loss(batch: AnchorBatch) -> RpnLossResult:
    """(sum of focal terms over non-ignored anchors + smooth L1 over foreground) / max(N_fg, 1)."""
    labels = np.asarray(batch.labels)
    scores = np.asarray(batch.scores, dtype=np.float64)
    counted = labels >= 0
    fg = batch.foreground
    normalizer = max(batch.num_fg, 1)

    binary = (labels == np.asarray(batch.anchor_classes)).astype(np.float64)
    cls, cls_grad = focal_loss(scores[counted], binary[counted])
    grad_scores = np.zeros_like(scores)
    grad_scores[counted] = cls_grad / normalizer

    grad_deltas = np.zeros((len(scores), 7))
    reg = 0.0
    if np.any(fg):
        reg, reg_grad = smooth_l1(np.asarray(batch.deltas)[fg], np.asarray(batch.targets)[fg])
        grad_deltas[fg] = reg_grad / normalizer
    cls, reg = cls / normalizer, reg / normalizer
    return RpnLossResult(cls + reg, cls, reg, grad_scores, grad_deltas, batch.num_fg)


@dataclass(frozen=True, eq=False)
class ConfidenceBatch:
    """Predicted confidences and the matched IoU of each proposal."""
    scores: np.ndarray
    ious: np.ndarray

    @property
    def targets(self) -> np.ndarray:
        return confidence_label(np.asarray(self.ious, dtype=np.float64).reshape(-1))


@dataclass(frozen=True, eq=False)
class RegressionBatch:
    """Refinement deltas, targets, and the mask of proposals they apply to."""
    deltas: np.ndarray
    targets: np.ndarray
    positive: np.ndarray


@dataclass(frozen=True)
class RcnnLossWeights:
    conf: float = 1.0
    reg: float = 1.0
    temp: float = 1.0
    contra: float = 1.0


@dataclass(frozen=True, eq=False)
class RcnnLossResult:
    total: float
    l_conf: float
    l_reg: float
    l_temp: float
    l_contra: float
    grad_scores: np.ndarray
    grad_deltas: np.ndarray
    grad_features: Optional[np.ndarray]
    grad_projections: Optional[np.ndarray]
    template_participating: int = 0
    contrastive_skipped: int = 0


def rcnn_loss(conf_terms: ConfidenceBatch, reg_terms: RegressionBatch,
              template_batch: Optional[TemplateLossBatch] = None,
              contrastive_batch: Optional[ContrastiveBatch] = None,
              weights: RcnnLossWeights = RcnnLossWeights(),
              contrastive_reduction: Reduction = 'mean') -> RcnnLossResult:
    """
    Weighted refinement loss: mean BCE confidence loss, smooth L1 over positive
    proposals divided by their count, and the optional template and contrastive
    terms (absent terms count as 0 and produce no gradient).
    """
    scores = np.asarray(conf_terms.scores, dtype=np.float64).reshape(-1)
    n = max(len(scores), 1)
    l_conf, conf_grad = bce(scores, conf_terms.targets)
    l_conf /= n
    grad_scores = weights.conf * conf_grad / n

    positive = np.asarray(reg_terms.positive, dtype=bool)
    deltas = np.asarray(reg_terms.deltas, dtype=np.float64)
    grad_deltas = np.zeros_like(deltas)
    l_reg = 0.0
    if np.any(positive):
        n_pos = int(positive.sum())
        l_reg, reg_grad = smooth_l1(deltas[positive], np.asarray(reg_terms.targets)[positive])
        l_reg /= n_pos
        grad_deltas[positive] = weights.reg * reg_grad / n_pos

    l_temp, grad_features, participating = 0.0, None, 0
    if template_batch is not None:
        result = template_loss(template_batch)
        l_temp, grad_features, participating = result.value, weights.temp * result.grad, result.participating

    l_contra, grad_projections, skipped = 0.0, None, 0
    if contrastive_batch is not None:
        result = supcon_loss(contrastive_batch, contrastive_reduction)
        l_contra, grad_projections, skipped = result.value, weights.contra * result.grad, result.skipped

    total = weights.conf * l_conf + weights.reg * l_reg + weights.temp * l_temp + weights.contra * l_contra
    return RcnnLossResult(total, l_conf, l_reg, l_temp, l_contra, grad_scores, grad_deltas,
                          grad_features, grad_projections, participating, skipped)


@dataclass(frozen=True)
class LossReport:
    """Loss components of one step or epoch; also a row of the loss log."""
    l_rpn: float = 0.0
    l_conf: float = 0.0
    l_reg: float = 0.0
    l_temp: float = 0.0
    l_contra: float = 0.0
    total: float = 0.0

    def __add__(self, other: 'LossReport') -> 'LossReport':
        return LossReport(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def scaled(self, factor: float) -> 'LossReport':
        return LossReport(*(getattr(self, f.name) * factor for f in fields(self)))

    def values(self) -> Tuple[float, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values())))

    @staticmethod
    def header() -> Tuple[str, ...]:
        return LossCONSTANTS.LOSS_LOG_HEADER

    def row(self, epoch: int) -> Tuple[str, ...]:
        return (str(epoch), *(repr(float(v)) for v in self.values()))
