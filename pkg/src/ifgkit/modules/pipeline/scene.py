"""
Synthetic LiDAR-like scenes: template objects seen from a sensor at the
origin, thinned with distance, partly occluded and noisy, over ground clutter
and pole-shaped confusers.
"""

import math
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from absl import logging
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from src.ifgkit.modules.eval.labels import LabeledBox, read_labels, write_labels
from src.ifgkit.modules.geom.core import Box3D, boxes_to_array
from src.ifgkit.modules.geom.iou import iou_one_to_many
from src.ifgkit.modules.pipeline.config import SceneGenConfig
from src.ifgkit.modules.pipeline.CONSTANTS import PipelineCONSTANTS
from src.ifgkit.modules.pointops.core import PointCloud, points_in_box
from src.ifgkit.modules.templates.core import Template, TemplateLibrary, adjust_template
from src.ifgkit.modules.templates.CONSTANTS import TemplateCONSTANTS
from src.ifgkit.utils.numeric_utils import seeded_rng


class PlacementRejected(Exception):
    pass


class SceneGenerationError(RuntimeError):
    """Raised when a scene cannot be generated from its config."""
    pass


@dataclass(frozen=True, eq=False)
class SceneSample:
    cloud: PointCloud
    gt_boxes: Tuple[Box3D, ...]
    gt_classes: Tuple[int, ...]
    seed: int
    dropped_objects: int = 0

    def __post_init__(self) -> None:
        if len(self.gt_boxes) != len(self.gt_classes):
            raise ValueError(f"Got {len(self.gt_boxes)} boxes but {len(self.gt_classes)} classes")

    @property
    def gt_array(self) -> np.ndarray:
        return boxes_to_array(self.gt_boxes)

    @property
    def gt_class_array(self) -> np.ndarray:
        return np.asarray(self.gt_classes, dtype=np.int64)

    def labels(self, frame_id: int = 0) -> List[LabeledBox]:
        return [LabeledBox(box, class_id, None, frame_id) for box, class_id in zip(self.gt_boxes, self.gt_classes)]


def _sensor_facing(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Mask of points whose radial component from the origin does not exceed the center's."""
    distance = np.linalg.norm(center[:2])
    if distance == 0.0:
        return np.ones(len(points), dtype=bool)
    radial = center[:2] / distance
    return points[:, :2] @ radial <= center[:2] @ radial


def _decay_keep(points: np.ndarray, distance: float, cfg: SceneGenConfig, rng: np.random.Generator) -> np.ndarray:
    keep = min(1.0, (cfg.reference_distance / max(distance, 1e-9)) ** 2)
    return rng.random(len(points)) < keep


def _occlusion_keep(points: np.ndarray, cfg: SceneGenConfig, rng: np.random.Generator) -> np.ndarray:
    """Drop one contiguous azimuth window of the object as seen from the sensor."""
    keep = np.ones(len(points), dtype=bool)
    if len(points) == 0 or rng.random() >= cfg.occlusion_probability:
        return keep
    azimuth = np.arctan2(points[:, 1], points[:, 0])
    lo, hi = azimuth.min(), azimuth.max()
    hidden = (1.0 - rng.uniform(cfg.occlusion_keep, 1.0)) * (hi - lo)
    start = rng.uniform(lo, hi - hidden) if hi - hidden > lo else lo
    keep &= ~((azimuth >= start) & (azimuth <= start + hidden))
    return keep


def sample_object_points(template: Template, box: Box3D, cfg: SceneGenConfig,
                         rng: np.random.Generator) -> np.ndarray:
    """
    The visible points of one object: the adjusted template's sensor-facing
    half, thinned by distance, optionally occluded, plus Gaussian noise.
    """
    points = adjust_template(template, box).points
    center = np.array([box.x, box.y, box.z])
    points = points[_sensor_facing(points, center)]
    points = points[_decay_keep(points, box.planar_distance, cfg, rng)]
    points = points[_occlusion_keep(points, cfg, rng)]
    return points + rng.normal(0.0, cfg.noise_sigma, size=points.shape)


def _draw_box(class_id: int, placed: List[Box3D], cfg: SceneGenConfig, rng: np.random.Generator) -> Box3D:
    dims = np.asarray(TemplateCONSTANTS.CLASSES[class_id].canonical_dims)
    dims = dims * np.clip(1.0 + cfg.dim_jitter * rng.standard_normal(3), 0.8, 1.2)
    l, w, h = dims
    reach = math.hypot(l, w) / 2
    x_lo, x_hi = cfg.x_range[0] + reach, cfg.x_range[1] - reach
    y_lo, y_hi = cfg.y_range[0] + reach, cfg.y_range[1] - reach
    if x_lo >= x_hi or y_lo >= y_hi:
        raise SceneGenerationError(f"World {cfg.x_range} x {cfg.y_range} is too small for class {class_id}")
    box = Box3D(rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi), cfg.ground_z + h / 2, l, w, h,
                rng.uniform(-math.pi, math.pi))
    if box.planar_distance < cfg.min_sensor_distance:
        raise PlacementRejected('too close to the sensor')
    if placed and np.any(iou_one_to_many(box.as_array(), boxes_to_array(placed), 'bev') > 0.0):
        raise PlacementRejected('overlaps a placed object')
    return box


def _place(class_id: int, placed: List[Box3D], cfg: SceneGenConfig, rng: np.random.Generator) -> Box3D:
    retrying = Retrying(stop=stop_after_attempt(cfg.max_placement_attempts),
                        retry=retry_if_exception_type(PlacementRejected), reraise=True)
    try:
        return retrying(_draw_box, class_id, placed, cfg, rng)
    except PlacementRejected as e:
        raise SceneGenerationError(
            f"Scene config infeasible: no free spot for object {len(placed) + 1} "
            f"after {cfg.max_placement_attempts} attempts") from e


def _ground_points(cfg: SceneGenConfig, rng: np.random.Generator) -> np.ndarray:
    area = (cfg.x_range[1] - cfg.x_range[0]) * (cfg.y_range[1] - cfg.y_range[0])
    n = int(rng.poisson(cfg.ground_density * area))
    return np.column_stack([
        rng.uniform(*cfg.x_range, size=n),
        rng.uniform(*cfg.y_range, size=n),
        np.full(n, cfg.ground_z),
    ]) + rng.normal(0.0, cfg.noise_sigma, size=(n, 3))


def _pole_points(placed: List[Box3D], cfg: SceneGenConfig, rng: np.random.Generator) -> List[np.ndarray]:
    """Thin upright cylinders standing on the ground away from every object."""
    poles = []
    for _ in range(int(rng.integers(0, cfg.max_poles + 1))):
        x, y = rng.uniform(*cfg.x_range), rng.uniform(*cfg.y_range)
        radius, height = 0.1, rng.uniform(2.0, 3.5)
        footprint = Box3D(x, y, cfg.ground_z + height / 2, 2 * radius, 2 * radius, height)
        if placed and np.any(iou_one_to_many(footprint.as_array(), boxes_to_array(placed), 'bev') > 0.0):
            continue
        n = cfg.pole_points
        angle = rng.uniform(0.0, 2 * math.pi, size=n)
        points = np.column_stack([
            x + radius * np.cos(angle),
            y + radius * np.sin(angle),
            cfg.ground_z + rng.uniform(0.0, height, size=n),
        ])
        center = np.array([x, y, footprint.z])
        points = points[_sensor_facing(points, center)]
        points = points[_decay_keep(points, footprint.planar_distance, cfg, rng)]
        poles.append(points + rng.normal(0.0, cfg.noise_sigma, size=points.shape))
    return poles


def generate_scene(cfg: SceneGenConfig, seed: int, library: Optional[TemplateLibrary] = None) -> SceneSample:
    """
    Raises
    ------
    SceneGenerationError
        If objects cannot be placed without overlap.
    """
    library = library if library is not None else TemplateLibrary(cfg.template_k, cfg.template_seed)
    rng = seeded_rng(seed)
    weights = np.asarray(cfg.class_weights, dtype=np.float64)
    count = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    classes = [int(c) for c in rng.choice(TemplateCONSTANTS.CLASS_IDS, size=count, p=weights / weights.sum())]

    placed: List[Box3D] = []
    for class_id in classes:
        placed.append(_place(class_id, placed, cfg, rng))

    parts, boxes, kept_classes = [], [], []
    for box, class_id in zip(placed, classes):
        points = sample_object_points(library.get(class_id), box, cfg, rng)
        if points_in_box(PointCloud(points), box).size == 0:
            continue
        parts.append(points)
        boxes.append(box)
        kept_classes.append(class_id)
    dropped = len(placed) - len(boxes)
    if dropped:
        logging.warning('Scene %s: dropped %s object(s) with no visible points', seed, dropped)

    parts.append(_ground_points(cfg, rng))
    parts.extend(_pole_points(placed, cfg, rng))
    cloud = PointCloud(np.vstack([p.reshape(-1, 3) for p in parts]))
    logging.debug('Generated scene %s: %s objects, %s points', seed, len(boxes), len(cloud))
    return SceneSample(cloud, tuple(boxes), tuple(kept_classes), seed, dropped)


def generate_scenes(cfg: SceneGenConfig, count: int, seed: int = 0,
                    library: Optional[TemplateLibrary] = None) -> List[SceneSample]:
    """`count` scenes seeded seed, seed + 1, ..."""
    library = library if library is not None else TemplateLibrary(cfg.template_k, cfg.template_seed)
    return [generate_scene(cfg, seed + i, library) for i in range(count)]


def scene_name(index: int) -> str:
    return PipelineCONSTANTS.Scene.NAME_FORMAT.format(index)


def write_scene(scene: SceneSample, directory: str, index: int) -> Tuple[str, str]:
    """Write `<index>.bin` (float32 x, y, z triplets) and `<index>.txt` (labels)."""
    os.makedirs(directory, exist_ok=True)
    stem = os.path.join(directory, scene_name(index))
    cloud_path = stem + PipelineCONSTANTS.Scene.CLOUD_SUFFIX
    scene.cloud.points.astype(PipelineCONSTANTS.Scene.CLOUD_DTYPE).tofile(cloud_path)
    label_path = write_labels(scene.labels(index), stem + PipelineCONSTANTS.Scene.LABEL_SUFFIX)
    return cloud_path, label_path


def read_scene_cloud(path: str) -> PointCloud:
    values = np.fromfile(path, dtype=PipelineCONSTANTS.Scene.CLOUD_DTYPE)
    if values.size % 3:
        raise ValueError(f"{path} holds {values.size} floats, not a whole number of points")
    return PointCloud(values.reshape(-1, 3).astype(np.float64))


def read_scenes(directory: str) -> List[SceneSample]:
    """
    Scene dumps of `directory` in file-name order. A cloud without a label file
    is a scene without objects; the frame index is the position in that order.
    """
    suffix = PipelineCONSTANTS.Scene.CLOUD_SUFFIX
    try:
        names = sorted(name for name in os.listdir(directory) if name.endswith(suffix))
    except OSError as e:
        raise SceneGenerationError(f"Cannot list scene directory {directory}: {e}") from e
    scenes = []
    for index, name in enumerate(names):
        stem = os.path.join(directory, name[:-len(suffix)])
        label_path = stem + PipelineCONSTANTS.Scene.LABEL_SUFFIX
        labels = read_labels(label_path, index) if os.path.exists(label_path) else []
        scenes.append(SceneSample(read_scene_cloud(stem + suffix), tuple(label.box for label in labels),
                                  tuple(label.class_id for label in labels), index))
    logging.info('Read %s scenes from %s', len(scenes), directory)
    return scenes
