"""
Slow reference implementations used to cross-check the exact geometry.

The grid oracles rasterize the union bounding region at cell centers; the
NMS oracle compares every candidate with every kept box pair by pair, without
the circumscribed-circle prefilter.
"""

import numpy as np

from src.ifgkit.modules.geom.core import Box3D, bev_corners
from src.ifgkit.modules.geom.iou import bev_iou
from src.ifgkit.modules.geom.nms import score_order
from src.ifgkit.modules.geom.CONSTANTS import GeomCONSTANTS


def _inside_footprint(box: Box3D, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    dx, dy = xs - box.x, ys - box.y
    c, s = np.cos(box.theta), np.sin(box.theta)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (np.abs(u) <= box.l / 2) & (np.abs(v) <= box.w / 2)


def _footprint_grid(a: Box3D, b: Box3D, resolution: int):
    corners = np.vstack([bev_corners(a), bev_corners(b)])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    xs = lo[0] + (np.arange(resolution) + 0.5) * (hi[0] - lo[0]) / resolution
    ys = lo[1] + (np.arange(resolution) + 0.5) * (hi[1] - lo[1]) / resolution
    gx, gy = np.meshgrid(xs, ys, indexing='ij')
    return _inside_footprint(a, gx, gy), _inside_footprint(b, gx, gy)


def grid_bev_iou(a: Box3D, b: Box3D, resolution: int = GeomCONSTANTS.Oracle.BEV_RESOLUTION) -> float:
    """Footprint IoU by counting covered cell centers."""
    in_a, in_b = _footprint_grid(a, b, resolution)
    union = np.count_nonzero(in_a | in_b)
    return float(np.count_nonzero(in_a & in_b) / union) if union else 0.0


def grid_iou3d(a: Box3D, b: Box3D, resolution: int = GeomCONSTANTS.Oracle.BEV_RESOLUTION,
               height_resolution: int = GeomCONSTANTS.Oracle.HEIGHT_RESOLUTION) -> float:
    """
    Volumetric IoU on a resolution x resolution x height_resolution lattice.

    Boxes are vertical prisms, so a lattice cell is inside a box iff its column
    is inside the footprint and its height sample is inside the z interval;
    counts factor into column counts times height-sample counts.
    """
    in_a, in_b = _footprint_grid(a, b, resolution)
    z_lo = min(a.z - a.h / 2, b.z - b.h / 2)
    z_hi = max(a.z + a.h / 2, b.z + b.h / 2)
    zs = z_lo + (np.arange(height_resolution) + 0.5) * (z_hi - z_lo) / height_resolution
    za = np.abs(zs - a.z) <= a.h / 2
    zb = np.abs(zs - b.z) <= b.h / 2

    col_a, col_b = np.count_nonzero(in_a), np.count_nonzero(in_b)
    col_ab = np.count_nonzero(in_a & in_b)
    n_a, n_b, n_ab = np.count_nonzero(za), np.count_nonzero(zb), np.count_nonzero(za & zb)
    inter = col_ab * n_ab
    union = col_a * n_a + col_b * n_b - inter
    return float(inter / union) if union else 0.0


def brute_force_nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float, max_keep: int) -> np.ndarray:
    """Greedy suppression with one exact BEV IoU per (kept, candidate) pair."""
    boxes = [Box3D.from_array(values) for values in np.asarray(boxes, dtype=np.float64).reshape(-1, 7)]
    kept = []
    for index in score_order(scores):
        if len(kept) >= max_keep:
            break
        if all(bev_iou(boxes[k], boxes[index]) <= iou_threshold for k in kept):
            kept.append(index)
    return np.asarray(kept, dtype=np.int64)
