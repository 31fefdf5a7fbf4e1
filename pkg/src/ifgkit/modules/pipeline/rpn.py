"""
First stage: a bird's-eye-view grid of hand-crafted cell statistics, seen
through a window of neighbor cells and a wider window of neighborhood
statistics, a shared per-cell MLP and six anchors per cell (three classes, two
yaws).
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.ifgkit.modules.geom.core import decode_boxes
from src.ifgkit.modules.geom.nms import nms, score_order
from src.ifgkit.modules.netcore.layers import Mlp, MlpCache, sigmoid
from src.ifgkit.modules.netcore.params import ParamStore, ShapeError
from src.ifgkit.modules.pipeline.config import RpnConfig, SceneGenConfig
from src.ifgkit.modules.pipeline.CONSTANTS import PipelineCONSTANTS
from src.ifgkit.modules.pointops.core import PointCloud
from src.ifgkit.modules.templates.CONSTANTS import TemplateCONSTANTS


def _cells(span: Tuple[float, float], cell_size: float) -> int:
    # a quotient like 30.000000000000004 still means 30 cells
    return int(math.ceil((span[1] - span[0]) / cell_size - 1e-9))


@dataclass(frozen=True)
class BevGrid:
    """Cells of `cell_size` over the world; cell (ix, iy) has flat index ix * ny + iy."""
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]
    cell_size: float

    @property
    def nx(self) -> int:
        return _cells(self.x_range, self.cell_size)

    @property
    def ny(self) -> int:
        return _cells(self.y_range, self.cell_size)

    @property
    def num_cells(self) -> int:
        return self.nx * self.ny

    def centers(self) -> np.ndarray:
        xs = self.x_range[0] + (np.arange(self.nx) + 0.5) * self.cell_size
        ys = self.y_range[0] + (np.arange(self.ny) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys, indexing='ij')
        return np.column_stack([gx.reshape(-1), gy.reshape(-1)])

    def flat_index(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Flat cell index of each point inside the grid, and the inside mask."""
        ix = np.floor((points[:, 0] - self.x_range[0]) / self.cell_size).astype(np.int64)
        iy = np.floor((points[:, 1] - self.y_range[0]) / self.cell_size).astype(np.int64)
        inside = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        return ix[inside] * self.ny + iy[inside], inside


def _cell_sums(cloud: PointCloud, grid: BevGrid, ground_z: float) -> Tuple[np.ndarray, ...]:
    """(nx, ny) point count, height sum, squared-height sum and max height per cell."""
    index, inside = grid.flat_index(cloud.points)
    z = cloud.points[inside, 2] - ground_z
    n = grid.num_cells
    count = np.bincount(index, minlength=n).astype(np.float64)
    total = np.bincount(index, weights=z, minlength=n).astype(np.float64)
    squares = np.bincount(index, weights=z * z, minlength=n).astype(np.float64)
    highest = np.full(n, -np.inf)
    np.maximum.at(highest, index, z)
    return tuple(values.reshape(grid.nx, grid.ny) for values in (count, total, squares, highest))


def _describe(count: np.ndarray, total: np.ndarray, squares: np.ndarray, highest: np.ndarray) -> np.ndarray:
    occupied = count > 0
    mean = np.divide(total, count, out=np.zeros_like(total), where=occupied)
    variance = np.divide(squares, count, out=np.zeros_like(total), where=occupied) - mean ** 2
    return np.stack([
        np.log1p(count),
        mean,
        np.where(occupied, highest, 0.0),
        np.where(occupied, np.maximum(variance, 0.0), 0.0),
    ], axis=-1)


def _neighborhoods(values: np.ndarray, block: int, reduce, fill: float) -> np.ndarray:
    r = block // 2
    nx, ny = values.shape
    padded = np.pad(values, r, constant_values=fill)
    return reduce(np.stack([padded[dx:dx + nx, dy:dy + ny] for dx in range(block) for dy in range(block)]), axis=0)


def cell_features(cloud: PointCloud, grid: BevGrid, ground_z: float = 0.0) -> np.ndarray:
    """
    (nx, ny, 4): log1p point count, mean height, max height and height
    variance; heights are measured from `ground_z`. Empty cells are zeros.
    """
    return _describe(*_cell_sums(cloud, grid, ground_z))


def context_features(cloud: PointCloud, grid: BevGrid, block: int, ground_z: float = 0.0) -> np.ndarray:
    """`cell_features` of each cell's block x block neighborhood taken as one cell."""
    count, total, squares, highest = _cell_sums(cloud, grid, ground_z)
    return _describe(_neighborhoods(count, block, np.sum, 0.0), _neighborhoods(total, block, np.sum, 0.0),
                     _neighborhoods(squares, block, np.sum, 0.0), _neighborhoods(highest, block, np.max, -np.inf))


def window_features(cells: np.ndarray, window: int, dilation: int = 1) -> np.ndarray:
    """
    Concatenate each cell's window x window neighborhood (zero padded) into one
    row. Neighbors are `dilation` cells apart.
    """
    nx, ny, c = cells.shape
    r = (window // 2) * dilation
    padded = np.pad(cells, ((r, r), (r, r), (0, 0)))
    shifted = [padded[dx:dx + nx, dy:dy + ny]
               for dx in range(0, window * dilation, dilation) for dy in range(0, window * dilation, dilation)]
    return np.concatenate(shifted, axis=2).reshape(nx * ny, window * window * c)


def prior_logit(probability: float) -> float:
    return -math.log((1.0 - probability) / probability)


def make_anchors(grid: BevGrid, ground_z: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Canonical-size anchors standing on the ground, ordered cell-major, then
    class, then yaw. Returns (anchors (N, 7), anchor classes (N,)).
    """
    per_cell = []
    classes = []
    for class_id in TemplateCONSTANTS.CLASS_IDS:
        l, w, h = TemplateCONSTANTS.CLASSES[class_id].canonical_dims
        for yaw in PipelineCONSTANTS.ANCHOR_YAWS:
            per_cell.append((ground_z + h / 2, l, w, h, yaw))
            classes.append(class_id)
    centers = grid.centers()
    a = len(per_cell)
    anchors = np.empty((len(centers), a, 7))
    anchors[:, :, :2] = centers[:, None, :]
    anchors[:, :, 2:] = np.asarray(per_cell)[None]
    return anchors.reshape(-1, 7), np.tile(np.asarray(classes, dtype=np.int64), len(centers))


@dataclass(frozen=True, eq=False)
class RpnOutput:
    logits: np.ndarray
    scores: np.ndarray
    deltas: np.ndarray
    cache: MlpCache


@dataclass(frozen=True, eq=False)
class Proposals:
    """Decoded candidate boxes with the class and score of their anchor."""
    boxes: np.ndarray
    classes: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.boxes)

    def take(self, indices: np.ndarray) -> 'Proposals':
        return Proposals(self.boxes[indices], self.classes[indices], self.scores[indices])

    @classmethod
    def empty(cls) -> 'Proposals':
        return cls(np.zeros((0, 7)), np.zeros(0, dtype=np.int64), np.zeros(0))


class RegionProposalNetwork:
    """
    Per-anchor objectness and box residuals from BEV cell statistics.

    Parameters
    ----------
    store : ParamStore
        Receives the shared cell MLP (`rpn.<i>.weight`, `rpn.<i>.bias`).
    cfg : RpnConfig
    scene_cfg : SceneGenConfig
        World extents and ground height that fix the grid and the anchors.
    """

    def __init__(self, store: ParamStore, cfg: RpnConfig, scene_cfg: SceneGenConfig) -> None:
        self.cfg = cfg
        self.grid = BevGrid(scene_cfg.x_range, scene_cfg.y_range, cfg.cell_size)
        self.anchors, self.anchor_classes = make_anchors(self.grid, scene_cfg.ground_z)
        self.anchors_per_cell = len(TemplateCONSTANTS.CLASS_IDS) * len(PipelineCONSTANTS.ANCHOR_YAWS)
        self.ground_z = scene_cfg.ground_z
        dims = (cfg.input_dim, cfg.hidden, self.anchors_per_cell * PipelineCONSTANTS.ANCHOR_OUTPUTS)
        output_bias = f'rpn.{len(dims) - 2}.bias'
        fresh = output_bias not in store
        self.mlp = Mlp(store, 'rpn', dims)
        if fresh:
            # objectness logits start at the foreground prior
            store[output_bias].reshape(self.anchors_per_cell, -1)[:, 0] = prior_logit(cfg.prior_probability)

    @property
    def num_anchors(self) -> int:
        return len(self.anchors)

    def features(self, cloud: PointCloud) -> np.ndarray:
        cfg = self.cfg
        rows = window_features(cell_features(cloud, self.grid, self.ground_z), cfg.window)
        if cfg.context_block == 1:
            return rows
        context = context_features(cloud, self.grid, cfg.context_block, self.ground_z)
        return np.hstack([rows, window_features(context, cfg.window, cfg.context_block)])

    def forward(self, cloud: PointCloud) -> RpnOutput:
        out, cache = self.mlp.forward(self.features(cloud))
        out = out.reshape(self.num_anchors, PipelineCONSTANTS.ANCHOR_OUTPUTS)
        logits = out[:, 0]
        return RpnOutput(logits, sigmoid(logits), out[:, 1:], cache)

    def backward(self, grad_logits: np.ndarray, grad_deltas: np.ndarray, output: RpnOutput) -> None:
        if grad_logits.shape != (self.num_anchors,) or grad_deltas.shape != (self.num_anchors, 7):
            raise ShapeError(f"RPN gradients have shapes {grad_logits.shape}, {grad_deltas.shape}")
        grad = np.column_stack([grad_logits, grad_deltas]).reshape(self.grid.num_cells, -1)
        self.mlp.backward(grad, output.cache)

    def decode(self, deltas: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """Boxes of the given anchors with their log-size residuals clipped."""
        deltas = np.array(deltas[indices], dtype=np.float64)
        deltas[:, 3:6] = np.clip(deltas[:, 3:6], -self.cfg.size_delta_clamp, self.cfg.size_delta_clamp)
        return decode_boxes(deltas, self.anchors[indices])

    def proposals(self, output: RpnOutput, iou_threshold: float, keep: int) -> Proposals:
        """Top-scoring anchors, decoded, then suppressed with footprint NMS."""
        top = score_order(output.scores)[:self.cfg.pre_nms_top_k]
        boxes = self.decode(output.deltas, top)
        kept = nms(boxes, output.scores[top], iou_threshold, keep)
        return Proposals(boxes[kept], self.anchor_classes[top][kept], output.scores[top][kept])
