"""
Elementwise losses. Every function returns the summed loss and its gradient
with respect to the prediction.
"""

from typing import Tuple

import numpy as np

from src.ifgkit.modules.losses.CONSTANTS import LossCONSTANTS
from src.ifgkit.modules.netcore.params import ShapeError

LossAndGrad = Tuple[float, np.ndarray]


def _same_shape(pred: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction shape {pred.shape} differs from target shape {target.shape}")
    return pred, target


def _clamped(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Clamped probabilities and the mask where clamping left them unchanged."""
    clamp = LossCONSTANTS.PROB_CLAMP
    clipped = np.clip(p, clamp, 1.0 - clamp)
    return clipped, (p >= clamp) & (p <= 1.0 - clamp)


def smooth_l1(pred: np.ndarray, target: np.ndarray) -> LossAndGrad:
    """0.5 d^2 where |d| < 1, |d| - 0.5 elsewhere, summed."""
    pred, target = _same_shape(pred, target)
    d = pred - target
    abs_d = np.abs(d)
    loss = np.where(abs_d < 1.0, 0.5 * d * d, abs_d - 0.5)
    return float(loss.sum()), np.clip(d, -1.0, 1.0)


def focal_loss(p: np.ndarray, label: np.ndarray, alpha: float = LossCONSTANTS.FOCAL_ALPHA,
               gamma: float = LossCONSTANTS.FOCAL_GAMMA) -> LossAndGrad:
    """-alpha_t (1 - p_t)^gamma log(p_t), summed over binary labels."""
    p, label = _same_shape(p, label)
    p, live = _clamped(p)
    positive = label >= 0.5
    pt = np.where(positive, p, 1.0 - p)
    alpha_t = np.where(positive, alpha, 1.0 - alpha)
    log_pt = np.log(pt)
    loss = -alpha_t * (1.0 - pt) ** gamma * log_pt
    d_pt = alpha_t * (gamma * (1.0 - pt) ** (gamma - 1.0) * log_pt - (1.0 - pt) ** gamma / pt)
    grad = np.where(positive, d_pt, -d_pt) * live
    return float(loss.sum()), grad


def bce(p: np.ndarray, y: np.ndarray) -> LossAndGrad:
    """Binary cross entropy against soft targets, summed."""
    p, y = _same_shape(p, y)
    p, live = _clamped(p)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(loss.sum()), (p - y) / (p * (1.0 - p)) * live


def confidence_label(iou):
    """Soft confidence target min(1, max(0, 2 iou - 0.5))."""
    target = np.clip(2.0 * np.asarray(iou, dtype=np.float64) - 0.5, 0.0, 1.0)
    return float(target) if target.ndim == 0 else target


def probability_grad_to_logit(grad_p: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. sigmoid outputs back to the logits."""
    return grad_p * p * (1.0 - p)
