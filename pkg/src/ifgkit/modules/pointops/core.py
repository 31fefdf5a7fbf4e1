"""
Point-set primitives: farthest point sampling, ball query and box membership.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.ifgkit.modules.geom.core import Box3D


class EmptyInputError(ValueError):
    """Raised when an operation needs at least one point."""
    pass


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered (N, 3) float64 coordinates in meters."""
    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            if points.size == 0:
                points = points.reshape(0, 3)
            else:
                raise ValueError(f"Points must have shape (N, 3), got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("Point coordinates must be finite")
        points.setflags(write=False)
        object.__setattr__(self, 'points', points)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def from_array(cls, values: Sequence[Sequence[float]]) -> 'PointCloud':
        return cls(np.array(values, dtype=np.float64))

    def translate(self, offset: Sequence[float]) -> 'PointCloud':
        return PointCloud(self.points + np.asarray(offset, dtype=np.float64))

    def subset(self, indices: np.ndarray) -> 'PointCloud':
        return PointCloud(self.points[np.asarray(indices, dtype=np.int64)])


def _require_points(cloud: PointCloud) -> np.ndarray:
    if len(cloud) == 0:
        raise EmptyInputError("empty input")
    return cloud.points


def farthest_point_sampling(cloud: PointCloud, m: int) -> np.ndarray:
    """
    Greedy FPS seeded at index 0; each step takes the point farthest from the
    current selection, lowest index on ties. With m >= N every index is
    returned, FPS order first and the rest in index order.
    """
    points = _require_points(cloud)
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    n = len(points)
    count = min(m, n)
    selected = np.empty(count, dtype=np.int64)
    selected[0] = 0
    nearest = np.sum((points - points[0]) ** 2, axis=1)
    # selected points are pinned below any distance so duplicates are never re-picked
    nearest[0] = -1.0
    for step in range(1, count):
        index = int(np.argmax(nearest))
        selected[step] = index
        nearest = np.minimum(nearest, np.sum((points - points[index]) ** 2, axis=1))
        nearest[index] = -1.0
    if m >= n:
        rest = np.setdiff1d(np.arange(n), selected, assume_unique=True)
        selected = np.concatenate([selected, rest])
    return selected


def ball_query(cloud: PointCloud, center: Sequence[float], radius: float, k_max: int) -> np.ndarray:
    """
    Indices of points within `radius` of `center`, in index order, truncated to
    `k_max`. An empty ball yields the nearest point's index repeated `k_max` times.
    """
    points = _require_points(cloud)
    if radius <= 0:
        raise ValueError(f"Radius must be positive, got {radius}")
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}")
    distances = np.sum((points - np.asarray(center, dtype=np.float64)) ** 2, axis=1)
    inside = np.nonzero(distances <= radius * radius)[0]
    if inside.size == 0:
        return np.full(k_max, int(np.argmin(distances)), dtype=np.int64)
    return inside[:k_max]


def to_local_frame(points: np.ndarray, box: Box3D) -> np.ndarray:
    """Coordinates relative to the box center, x along the heading."""
    offset = np.asarray(points, dtype=np.float64).reshape(-1, 3) - np.array([box.x, box.y, box.z])
    c, s = np.cos(box.theta), np.sin(box.theta)
    return np.column_stack([c * offset[:, 0] + s * offset[:, 1], -s * offset[:, 0] + c * offset[:, 1], offset[:, 2]])


def points_in_box(cloud: PointCloud, box: Box3D, margin: float = 1.0) -> np.ndarray:
    """Indices of points inside the box scaled by `margin` about its center."""
    if margin < 1.0:
        raise ValueError(f"Margin must be at least 1, got {margin}")
    if len(cloud) == 0:
        return np.zeros(0, dtype=np.int64)
    local = np.abs(to_local_frame(cloud.points, box))
    half = margin * np.array([box.l, box.w, box.h]) / 2
    return np.nonzero(np.all(local <= half, axis=1))[0]
