"""
Oriented 3D boxes: the (x, y, z, l, w, h, theta) parameterization, corners,
and the residual encoding used by both detector stages.
"""

import math
from dataclasses import dataclass, astuple
from typing import Iterable, List, Sequence

import numpy as np

from src.ifgkit.utils.numeric_utils import wrap_angle


@dataclass(frozen=True)
class Box3D:
    """
    Yaw-oriented cuboid centered at (x, y, z).

    `l` runs along the heading, `w` across it and `h` is vertical. `theta` is
    stored wrapped to [-pi, pi).
    """
    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError(f"Box dimensions must be positive, got l={self.l}, w={self.w}, h={self.h}")
        values = astuple(self)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"Box fields must be finite, got {values}")
        object.__setattr__(self, 'theta', wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'Box3D':
        return cls(*(float(v) for v in values[:7]))

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h

    @property
    def planar_distance(self) -> float:
        """Distance of the center from the sensor origin in the ground plane."""
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class RegressionTarget:
    """Dimensionless residuals of a box relative to an anchor."""
    tx: float
    ty: float
    tz: float
    tw: float
    tl: float
    th: float
    ttheta: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'RegressionTarget':
        return cls(*(float(v) for v in values[:7]))


def boxes_to_array(boxes: Iterable[Box3D]) -> np.ndarray:
    rows = [b.as_array() for b in boxes]
    if not rows:
        return np.zeros((0, 7))
    return np.stack(rows)


def boxes_from_array(values: np.ndarray) -> List[Box3D]:
    return [Box3D.from_array(row) for row in np.asarray(values, dtype=np.float64).reshape(-1, 7)]


def bev_corners_array(box: np.ndarray) -> np.ndarray:
    """Footprint corners of one (7,) box array, counter-clockwise, shape (4, 2)."""
    x, y, _, l, w, _, theta = box
    local = np.array([[l / 2, w / 2], [-l / 2, w / 2], [-l / 2, -w / 2], [l / 2, -w / 2]])
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def bev_corners(box: Box3D) -> np.ndarray:
    return bev_corners_array(box.as_array())


def box_corners(box: Box3D) -> np.ndarray:
    """
    The 8 corners of the box, shape (8, 3): the bottom face (z - h/2)
    counter-clockwise seen from above, then the top face in the same order.
    """
    footprint = bev_corners(box)
    bottom = np.column_stack([footprint, np.full(4, box.z - box.h / 2)])
    top = np.column_stack([footprint, np.full(4, box.z + box.h / 2)])
    return np.vstack([bottom, top])


def encode_boxes(gt: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """
    Residuals of (N, 7) ground-truth boxes against (N, 7) anchors, columns
    ordered (tx, ty, tz, tw, tl, th, ttheta).
    """
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 7)
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 7)
    if gt.shape != anchors.shape:
        raise ValueError(f"Box/anchor count mismatch: {gt.shape} vs {anchors.shape}")
    xa, ya, za, la, wa, ha, ta = anchors.T
    xg, yg, zg, lg, wg, hg, tg = gt.T
    diagonal = np.sqrt(la ** 2 + wa ** 2)
    return np.column_stack([
        (xg - xa) / diagonal,
        (yg - ya) / diagonal,
        (zg - za) / ha,
        np.log(wg / wa),
        np.log(lg / la),
        np.log(hg / ha),
        wrap_angle(tg - ta),
    ])


def decode_boxes(targets: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Inverse of `encode_boxes`; returns (N, 7) box arrays."""
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 7)
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 7)
    if targets.shape != anchors.shape:
        raise ValueError(f"Target/anchor count mismatch: {targets.shape} vs {anchors.shape}")
    xa, ya, za, la, wa, ha, ta = anchors.T
    tx, ty, tz, tw, tl, th, tt = targets.T
    diagonal = np.sqrt(la ** 2 + wa ** 2)
    return np.column_stack([
        tx * diagonal + xa,
        ty * diagonal + ya,
        tz * ha + za,
        la * np.exp(tl),
        wa * np.exp(tw),
        ha * np.exp(th),
        wrap_angle(tt + ta),
    ])


def encode_box(gt: Box3D, anchor: Box3D) -> RegressionTarget:
    return RegressionTarget.from_array(encode_boxes(gt.as_array(), anchor.as_array())[0])


def decode_box(target: RegressionTarget, anchor: Box3D) -> Box3D:
    return Box3D.from_array(decode_boxes(target.as_array(), anchor.as_array())[0])
