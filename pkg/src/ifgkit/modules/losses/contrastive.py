"""
Supervised contrastive loss over proposal embeddings.

For anchor i with positives P(i) (other samples of the same label) and
candidates A(i) (every other sample), the anchor term is

    logsumexp_{a in A(i)} s_ia  -  mean_{p in P(i)} s_ip,   s = f f^T / tau

which equals the average over positives of -log softmax_i(p). Background
(label 0) is a class of its own.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.ifgkit.modules.losses.CONSTANTS import LossCONSTANTS

Reduction = Literal['sum', 'mean']


@dataclass(frozen=True, eq=False)
class ContrastiveBatch:
    features: np.ndarray
    labels: np.ndarray
    tau: float = LossCONSTANTS.CONTRASTIVE_TAU

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2 or len(features) != len(labels):
            raise ValueError(f"Need (N, D) features and N labels, got {features.shape} and {labels.shape}")
        if len(features) < 2:
            raise ValueError(f"Contrastive loss needs at least 2 samples, got {len(features)}")
        if self.tau <= 0:
            raise ValueError(f"Temperature must be positive, got {self.tau}")
        norms = np.linalg.norm(features, axis=1)
        if np.any(np.abs(norms - 1.0) > LossCONSTANTS.UNIT_NORM_TOLERANCE):
            raise ValueError(f"Contrastive features must be unit length, norms span [{norms.min()}, {norms.max()}]")
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)


@dataclass(frozen=True, eq=False)
class SupConResult:
    value: float
    grad: np.ndarray
    # anchors with no positive partner; they contribute nothing
    skipped: int


def supcon_loss(batch: ContrastiveBatch, reduction: Reduction = 'sum') -> SupConResult:
    """Supervised contrastive loss and its gradient w.r.t. the features."""
    if reduction not in ('sum', 'mean'):
        raise ValueError(f"Unknown reduction '{reduction}'. Use: sum, mean")
    features, labels, tau = batch.features, batch.labels, batch.tau
    n = len(features)
    similarity = features @ features.T / tau
    off_diagonal = ~np.eye(n, dtype=bool)
    positives = (labels[:, None] == labels[None, :]) & off_diagonal
    positive_counts = positives.sum(axis=1)
    active = positive_counts > 0
    skipped = int(n - active.sum())
    if not np.any(active):
        return SupConResult(0.0, np.zeros_like(features), skipped)

    masked = np.where(off_diagonal, similarity, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    exp = np.where(off_diagonal, np.exp(masked - row_max), 0.0)
    denominator = exp.sum(axis=1, keepdims=True)
    log_denominator = (row_max + np.log(denominator)).reshape(-1)
    softmax = exp / denominator

    counts = np.maximum(positive_counts, 1)
    positive_mean = np.where(positives, similarity, 0.0).sum(axis=1) / counts
    per_anchor = np.where(active, log_denominator - positive_mean, 0.0)

    weight = 1.0 if reduction == 'sum' else 1.0 / active.sum()
    d_similarity = (softmax - positives / counts[:, None]) * active[:, None] * weight
    grad = (d_similarity + d_similarity.T) @ features / tau
    return SupConResult(float(per_anchor.sum() * weight), grad, skipped)
