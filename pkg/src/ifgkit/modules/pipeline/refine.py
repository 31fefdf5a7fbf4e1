"""
Second stage: points pooled from each enlarged proposal, canonicalized to the
proposal frame, encoded by a shared point MLP with max-pooling, and read by
up to four heads (confidence, box residuals, intrinsic-feature prediction and
contrastive projection).
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from absl import logging

from src.ifgkit.modules.geom.core import Box3D
from src.ifgkit.modules.netcore.CONSTANTS import NetcoreCONSTANTS
from src.ifgkit.modules.netcore.layers import Mlp, MlpCache, max_pool, max_pool_backward, sigmoid
from src.ifgkit.modules.netcore.params import ParamStore
from src.ifgkit.modules.pipeline.config import RefineConfig
from src.ifgkit.modules.pointops.core import PointCloud, points_in_box, to_local_frame

HEADS = ('conf', 'reg', 'feat', 'proj')


@dataclass(frozen=True, eq=False)
class PooledPoints:
    """(P, M, 3) canonical coordinates per proposal and the number of real points (<= M)."""
    points: np.ndarray
    counts: np.ndarray

    @property
    def empty(self) -> np.ndarray:
        return self.counts == 0


def pool_points(cloud: PointCloud, proposals: np.ndarray, margin: float, max_points: int) -> PooledPoints:
    """
    Points inside each proposal enlarged by `margin`, in the proposal frame.
    Larger sets are thinned to evenly spaced indices; smaller ones are padded
    by repetition, which leaves max-pooling unchanged.
    """
    proposals = np.asarray(proposals, dtype=np.float64).reshape(-1, 7)
    pooled = np.zeros((len(proposals), max_points, 3))
    counts = np.zeros(len(proposals), dtype=np.int64)
    for i, values in enumerate(proposals):
        box = Box3D.from_array(values)
        inside = points_in_box(cloud, box, margin)
        if inside.size == 0:
            continue
        if inside.size > max_points:
            inside = inside[np.linspace(0, inside.size - 1, max_points).astype(np.int64)]
        local = to_local_frame(cloud.points[inside], box)
        pooled[i] = np.resize(local, (max_points, 3))
        counts[i] = inside.size
    return PooledPoints(pooled, counts)


@dataclass(eq=False)
class RefineCache:
    pooled: PooledPoints
    encoder: Optional[MlpCache]
    winners: Optional[np.ndarray]
    heads: Dict[str, MlpCache]
    projection_norms: Optional[np.ndarray]


@dataclass(frozen=True, eq=False)
class RefineOutput:
    """
    Per-proposal outputs. `features` and `projections` are None unless their
    head ran; `projection_valid` marks projections usable for contrast.
    """
    logits: np.ndarray
    scores: np.ndarray
    deltas: np.ndarray
    features: Optional[np.ndarray]
    projections: Optional[np.ndarray]
    projection_valid: Optional[np.ndarray]
    empty: np.ndarray
    cache: RefineCache


class RefinementHead:
    """
    Point encoder plus heads over pooled proposals.

    Parameters
    ----------
    store : ParamStore
        Receives `refine.encoder`, `refine.conf`, `refine.reg` and, when
        enabled, `refine.feat` and `refine.proj`.
    cfg : RefineConfig
    feature_dim : int
        Output size of the feature-prediction head; equals the intrinsic
        feature size.
    use_tafe, use_pscl : bool
        Build the feature-prediction and projection heads. Disabled heads
        create no parameters at all.
    """

    def __init__(self, store: ParamStore, cfg: RefineConfig, feature_dim: int, use_tafe: bool = False,
                 use_pscl: bool = False) -> None:
        self.cfg = cfg
        d = cfg.feature_dim
        self.encoder = Mlp(store, 'refine.encoder', cfg.encoder_dims, final_activation=True)
        self.heads: Dict[str, Mlp] = {
            'conf': Mlp(store, 'refine.conf', (d, cfg.head_hidden, 1)),
            'reg': Mlp(store, 'refine.reg', (d, cfg.head_hidden, 7)),
        }
        if use_tafe:
            self.heads['feat'] = Mlp(store, 'refine.feat', (d, cfg.head_hidden, feature_dim))
        if use_pscl:
            self.heads['proj'] = Mlp(store, 'refine.proj', (d, cfg.projection_hidden, cfg.projection_dim))

    @property
    def available_heads(self) -> Sequence[str]:
        return tuple(self.heads)

    def encode(self, pooled: PooledPoints):
        encoded = np.zeros((len(pooled.counts), self.cfg.feature_dim))
        filled = ~pooled.empty
        if not np.any(filled):
            return encoded, None, None
        per_point, cache = self.encoder.forward(pooled.points[filled])
        encoded[filled], winners = max_pool(per_point, axis=1)
        return encoded, cache, winners

    def forward(self, cloud: PointCloud, proposals: np.ndarray, heads: Sequence[str] = HEADS) -> RefineOutput:
        """Run the encoder and the requested heads that exist."""
        pooled = pool_points(cloud, proposals, self.cfg.pool_margin, self.cfg.max_points)
        if np.any(pooled.empty):
            logging.log_every_n(logging.WARNING, '%s of %s proposals pooled no points; using zero features', 100,
                                int(pooled.empty.sum()), len(pooled.counts))
        encoded, encoder_cache, winners = self.encode(pooled)

        outputs, caches = {}, {}
        for name in heads:
            if name in self.heads:
                outputs[name], caches[name] = self.heads[name].forward(encoded)
        logits = outputs['conf'][:, 0] if 'conf' in outputs else np.zeros(len(encoded))
        deltas = outputs['reg'] if 'reg' in outputs else np.zeros((len(encoded), 7))

        projections, valid, norms = None, None, None
        if 'proj' in outputs:
            raw = outputs['proj']
            norms = np.linalg.norm(raw, axis=1)
            valid = ~pooled.empty & (norms > NetcoreCONSTANTS.NORM_EPS)
            projections = np.zeros_like(raw)
            projections[valid] = raw[valid] / norms[valid, None]

        cache = RefineCache(pooled, encoder_cache, winners, caches, norms)
        return RefineOutput(logits, sigmoid(logits), deltas, outputs.get('feat'), projections, valid,
                            pooled.empty, cache)

    def backward(self, output: RefineOutput, grad_logits: Optional[np.ndarray] = None,
                 grad_deltas: Optional[np.ndarray] = None, grad_features: Optional[np.ndarray] = None,
                 grad_projections: Optional[np.ndarray] = None) -> None:
        """Accumulate parameter gradients; heads without a gradient are skipped."""
        cache = output.cache
        grad_encoded = np.zeros((len(output.empty), self.cfg.feature_dim))
        head_grads = {
            'conf': None if grad_logits is None else np.asarray(grad_logits).reshape(-1, 1),
            'reg': grad_deltas,
            'feat': grad_features,
        }
        if grad_projections is not None and output.projections is not None:
            unit, norms, valid = output.projections, cache.projection_norms, output.projection_valid
            grad_raw = np.zeros_like(unit)
            g = grad_projections[valid]
            u = unit[valid]
            grad_raw[valid] = (g - u * np.sum(u * g, axis=1, keepdims=True)) / norms[valid, None]
            head_grads['proj'] = grad_raw
        for name, grad in head_grads.items():
            if grad is not None and name in cache.heads:
                grad_encoded += self.heads[name].backward(grad, cache.heads[name])

        filled = ~output.empty
        if cache.encoder is None or not np.any(filled):
            return
        per_point = max_pool_backward(grad_encoded[filled], cache.winners, self.cfg.max_points, axis=1)
        self.encoder.backward(per_point, cache.encoder)
