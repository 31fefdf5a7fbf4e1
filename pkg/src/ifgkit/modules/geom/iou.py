"""
Exact rotated IoU.

Footprint intersections are computed by Sutherland-Hodgman clipping of every
subject rectangle against the four edges of one clip rectangle, vectorized over
the subjects, with shoelace areas. Heights overlap as 1D intervals.
"""

from typing import Literal

import numpy as np

from src.ifgkit.modules.geom.core import Box3D, bev_corners_array
from src.ifgkit.modules.geom.CONSTANTS import GeomCONSTANTS

IouMode = Literal['bev', '3d']

EPS = GeomCONSTANTS.EPS


def _bev_corners_batch(boxes: np.ndarray) -> np.ndarray:
    """(M, 7) boxes -> (M, 4, 2) counter-clockwise footprints."""
    x, y, _, l, w, _, theta = boxes.T
    sx = np.array([0.5, -0.5, -0.5, 0.5])
    sy = np.array([0.5, 0.5, -0.5, -0.5])
    lx = l[:, None] * sx
    ly = w[:, None] * sy
    c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
    return np.stack([lx * c - ly * s + x[:, None], lx * s + ly * c + y[:, None]], axis=-1)


def _next_index(counts: np.ndarray, width: int) -> np.ndarray:
    idx = np.arange(width)[None, :]
    return np.where(idx + 1 < counts[:, None], idx + 1, 0)


def _gather(vertices: np.ndarray, index: np.ndarray) -> np.ndarray:
    return np.take_along_axis(vertices, index[..., None].repeat(2, axis=-1), axis=1)


def clip_polygons(subjects: np.ndarray, counts: np.ndarray, clip: np.ndarray):
    """
    Clip each convex subject polygon against a convex counter-clockwise clip polygon.

    Parameters
    ----------
    subjects : ndarray, shape (M, K, 2)
        Vertices, only the first `counts[i]` of row i are used.
    counts : ndarray, shape (M,)
    clip : ndarray, shape (C, 2)

    Returns
    -------
    (vertices, counts) of the clipped polygons, same layout as the input.
    """
    vertices = np.asarray(subjects, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    m = vertices.shape[0]
    for e in range(len(clip)):
        a = clip[e]
        edge = clip[(e + 1) % len(clip)] - a
        width = vertices.shape[1]
        valid = np.arange(width)[None, :] < counts[:, None]
        following = _gather(vertices, _next_index(counts, width))

        d_cur = edge[0] * (vertices[..., 1] - a[1]) - edge[1] * (vertices[..., 0] - a[0])
        d_nxt = edge[0] * (following[..., 1] - a[1]) - edge[1] * (following[..., 0] - a[0])
        in_cur = d_cur >= 0.0
        crosses = in_cur != (d_nxt >= 0.0)
        t = d_cur / np.where(crosses, d_cur - d_nxt, 1.0)
        crossing = vertices + t[..., None] * (following - vertices)

        candidates = np.stack([vertices, crossing], axis=2).reshape(m, 2 * width, 2)
        emit = np.stack([valid & in_cur, valid & crosses], axis=2).reshape(m, 2 * width)
        order = np.argsort(~emit, axis=1, kind='stable')
        counts = emit.sum(axis=1)
        keep = max(int(counts.max(initial=0)), 1)
        vertices = _gather(candidates, order)[:, :keep]
    return vertices, counts


def polygon_areas(vertices: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Shoelace areas of (M, K, 2) polygons with per-row vertex counts."""
    width = vertices.shape[1]
    valid = np.arange(width)[None, :] < counts[:, None]
    following = _gather(vertices, _next_index(counts, width))
    cross = vertices[..., 0] * following[..., 1] - following[..., 0] * vertices[..., 1]
    return 0.5 * np.abs(np.where(valid, cross, 0.0).sum(axis=1))


def bev_intersection_areas(clip_box: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Footprint intersection areas of one (7,) box against (M, 7) boxes."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    if boxes.shape[0] == 0:
        return np.zeros(0)
    subjects = _bev_corners_batch(boxes)
    clipped, counts = clip_polygons(subjects, np.full(len(boxes), 4), bev_corners_array(clip_box))
    areas = polygon_areas(clipped, counts)
    return np.where(areas < EPS, 0.0, areas)


def _height_overlaps(box: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    top = np.minimum(box[2] + box[5] / 2, boxes[:, 2] + boxes[:, 5] / 2)
    bottom = np.maximum(box[2] - box[5] / 2, boxes[:, 2] - boxes[:, 5] / 2)
    return np.maximum(top - bottom, 0.0)


def iou_one_to_many(box: np.ndarray, boxes: np.ndarray, mode: IouMode = '3d') -> np.ndarray:
    """IoU of one (7,) box array against (M, 7) box arrays."""
    box = np.asarray(box, dtype=np.float64)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    inter = bev_intersection_areas(box, boxes)
    if mode == 'bev':
        union = box[3] * box[4] + boxes[:, 3] * boxes[:, 4] - inter
    elif mode == '3d':
        inter = inter * _height_overlaps(box, boxes)
        inter = np.where(inter < EPS, 0.0, inter)
        union = box[3] * box[4] * box[5] + boxes[:, 3] * boxes[:, 4] * boxes[:, 5] - inter
    else:
        raise ValueError(f"Unknown IoU mode '{mode}'. Use: bev, 3d")
    return np.clip(inter / union, 0.0, 1.0)


def bounding_radii(boxes: np.ndarray) -> np.ndarray:
    """Radius of the circle circumscribing each footprint."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    return 0.5 * np.hypot(boxes[:, 3], boxes[:, 4])


def overlap_candidates(box: np.ndarray, boxes: np.ndarray, radius: float, radii: np.ndarray) -> np.ndarray:
    """Indices of boxes whose circumscribed circle meets that of `box`."""
    distance = np.hypot(boxes[:, 0] - box[0], boxes[:, 1] - box[1])
    return np.nonzero(distance < radius + radii + 1e-9)[0]


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray, mode: IouMode = '3d') -> np.ndarray:
    """(N, M) IoU table; pairs with disjoint circumscribed circles are 0 without clipping."""
    boxes_a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 7)
    boxes_b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 7)
    table = np.zeros((len(boxes_a), len(boxes_b)))
    if table.size == 0:
        return table
    radii_a = bounding_radii(boxes_a)
    radii_b = bounding_radii(boxes_b)
    for i, box in enumerate(boxes_a):
        candidates = overlap_candidates(box, boxes_b, radii_a[i], radii_b)
        if candidates.size:
            table[i, candidates] = iou_one_to_many(box, boxes_b[candidates], mode)
    return table


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Bird's-eye-view IoU of two boxes."""
    return float(iou_one_to_many(a.as_array(), b.as_array()[None, :], 'bev')[0])


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU of two yaw-oriented boxes."""
    return float(iou_one_to_many(a.as_array(), b.as_array()[None, :], '3d')[0])
