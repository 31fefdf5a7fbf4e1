"""
Intrinsic feature extraction from a template point set.

FPS picks the centers, two set abstraction passes with different radii
describe each center's neighborhood, and a fully connected stack maps the
flattened multi-scale description to a compact global vector.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.ifgkit.modules.netcore.layers import Mlp, MlpCache, max_pool, max_pool_backward
from src.ifgkit.modules.netcore.params import ParamStore
from src.ifgkit.modules.pointops.core import PointCloud, ball_query, farthest_point_sampling


@dataclass(frozen=True)
class FeatureExtractorConfig:
    m: int = 128
    radii: Tuple[float, float] = (0.2, 0.4)
    group_sizes: Tuple[int, int] = (16, 32)
    local_hidden: int = 32
    local_dim: int = 32
    fc_hidden: Tuple[int, ...] = (256, 64)
    out_dim: int = 16

    def __post_init__(self) -> None:
        counts = (self.m, *self.group_sizes, self.local_hidden, self.local_dim, *self.fc_hidden, self.out_dim)
        if any(c <= 0 for c in counts):
            raise ValueError(f"Extractor sizes must be positive, got {self}")
        if len(self.radii) != len(self.group_sizes) or any(r <= 0 for r in self.radii):
            raise ValueError(f"Need one positive radius per group size, got {self.radii} / {self.group_sizes}")

    @property
    def flat_dim(self) -> int:
        return self.m * self.local_dim * len(self.radii)


def group_points(cloud: PointCloud, centers: np.ndarray, radius: float, k_max: int) -> np.ndarray:
    """(m, k_max) neighbor indices; short groups repeat their first member."""
    groups = np.empty((len(centers), k_max), dtype=np.int64)
    for row, center in enumerate(centers):
        found = ball_query(cloud, center, radius, k_max)
        slots = np.arange(k_max)
        groups[row] = found[np.where(slots < len(found), slots, 0)]
    return groups


@dataclass
class SetAbstractionCache:
    mlp_cache: MlpCache
    winners: np.ndarray
    group_size: int


def set_abstraction(points: np.ndarray, centers: np.ndarray, groups: np.ndarray,
                    mlp: Mlp) -> Tuple[np.ndarray, SetAbstractionCache]:
    """
    Per-center features: the shared MLP applied to (point - center) offsets of
    each group, max-pooled over the group members.
    """
    offsets = points[groups] - centers[:, None, :]
    encoded, mlp_cache = mlp.forward(offsets)
    pooled, winners = max_pool(encoded, axis=1)
    return pooled, SetAbstractionCache(mlp_cache, winners, groups.shape[1])


def set_abstraction_backward(grad: np.ndarray, cache: SetAbstractionCache, mlp: Mlp) -> None:
    mlp.backward(max_pool_backward(grad, cache.winners, cache.group_size, axis=1), cache.mlp_cache)


@dataclass
class ExtractorCache:
    sa_caches: Tuple[SetAbstractionCache, ...]
    head_cache: MlpCache


class IntrinsicFeatureExtractor:
    """
    Maps a point set to an `out_dim` intrinsic feature.

    Parameters
    ----------
    store : ParamStore
        Receives the local MLPs (`<prefix>.sa<i>`) and the head (`<prefix>.fc`).
    cfg : FeatureExtractorConfig, optional
    prefix : str, optional
        Parameter name prefix (default is 'extractor').

    Raises
    ------
    ValueError
        If the input has fewer than `cfg.m` points.
    """

    def __init__(self, store: ParamStore, cfg: FeatureExtractorConfig = FeatureExtractorConfig(),
                 prefix: str = 'extractor') -> None:
        self.cfg = cfg
        self.local_mlps = [
            Mlp(store, f'{prefix}.sa{i}', (3, cfg.local_hidden, cfg.local_dim), final_activation=True)
            for i in range(len(cfg.radii))
        ]
        self.head = Mlp(store, f'{prefix}.fc', (cfg.flat_dim, *cfg.fc_hidden, cfg.out_dim))

    def forward(self, cloud: PointCloud) -> Tuple[np.ndarray, ExtractorCache]:
        if len(cloud) < self.cfg.m:
            raise ValueError(f"Intrinsic feature needs at least {self.cfg.m} points, got {len(cloud)}")
        points = cloud.points
        centers = points[farthest_point_sampling(cloud, self.cfg.m)[:self.cfg.m]]
        scales, caches = [], []
        for mlp, radius, k_max in zip(self.local_mlps, self.cfg.radii, self.cfg.group_sizes):
            pooled, cache = set_abstraction(points, centers, group_points(cloud, centers, radius, k_max), mlp)
            scales.append(pooled)
            caches.append(cache)
        flat = np.concatenate(scales, axis=1).reshape(-1)
        feature, head_cache = self.head.forward(flat)
        return feature, ExtractorCache(tuple(caches), head_cache)

    def __call__(self, cloud: PointCloud) -> np.ndarray:
        return self.forward(cloud)[0]

    def backward(self, grad: np.ndarray, cache: ExtractorCache) -> None:
        flat_grad = self.head.backward(grad, cache.head_cache)
        per_center = flat_grad.reshape(self.cfg.m, -1)
        for i, (mlp, sa_cache) in enumerate(zip(self.local_mlps, cache.sa_caches)):
            block = per_center[:, i * self.cfg.local_dim:(i + 1) * self.cfg.local_dim]
            set_abstraction_backward(block, sa_cache, mlp)


def intrinsic_feature(template_points: PointCloud, cfg: FeatureExtractorConfig, params: ParamStore) -> np.ndarray:
    """Intrinsic feature of a point set with the extractor held in `params`."""
    return IntrinsicFeatureExtractor(params, cfg)(template_points)
