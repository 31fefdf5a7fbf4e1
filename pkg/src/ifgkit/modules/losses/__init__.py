from .core import bce, confidence_label, focal_loss, probability_grad_to_logit, smooth_l1
from .contrastive import ContrastiveBatch, SupConResult, supcon_loss
from .composite import (
    AnchorBatch, ConfidenceBatch, LossReport, RcnnLossResult, RcnnLossWeights, RegressionBatch, RpnLossResult,
    TemplateLossBatch, TemplateLossResult, rcnn_loss, rpn_loss, template_loss,
)

__all__ = [
    'bce', 'confidence_label', 'focal_loss', 'probability_grad_to_logit', 'smooth_l1',
    'ContrastiveBatch', 'SupConResult', 'supcon_loss',
    'AnchorBatch', 'ConfidenceBatch', 'LossReport', 'RcnnLossResult', 'RcnnLossWeights', 'RegressionBatch',
    'RpnLossResult', 'TemplateLossBatch', 'TemplateLossResult', 'rcnn_loss', 'rpn_loss', 'template_loss',
]
