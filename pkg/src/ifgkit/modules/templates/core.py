"""
Procedural class templates and their adjustment to ground-truth boxes.
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from absl import logging

from src.ifgkit.modules.geom.core import Box3D
from src.ifgkit.modules.pointops.core import PointCloud
from src.ifgkit.modules.templates.CONSTANTS import TemplateCONSTANTS
from src.ifgkit.modules.templates.primitives import (
    BoxSurface, CapsuleSurface, CylinderSurface, EllipsoidSurface, Primitive,
)
from src.ifgkit.utils.numeric_utils import largest_remainder, rotation_z, seeded_rng


class TemplateError(ValueError):
    """Raised for unknown classes or templates that break their invariants."""
    pass


@dataclass(frozen=True, eq=False)
class Template:
    """
    Canonical point set of one class: centered at the origin, heading along +x,
    extents equal to `canonical_dims`.
    """
    class_id: int
    points: PointCloud
    canonical_dims: Tuple[float, float, float]

    def __post_init__(self) -> None:
        if self.class_id not in TemplateCONSTANTS.CLASSES:
            raise TemplateError(f"Unknown class id {self.class_id}")
        if len(self.points) == 0:
            raise TemplateError("Template has no points")
        extents = np.ptp(self.points.points, axis=0)
        if not np.allclose(extents, self.canonical_dims, rtol=0.0, atol=TemplateCONSTANTS.EXTENT_TOLERANCE):
            raise TemplateError(f"Template extents {extents} differ from canonical dims {self.canonical_dims}")

    @property
    def k(self) -> int:
        return len(self.points)


def _car_primitives() -> List[Primitive]:
    wheels = [
        CylinderSurface((x, y, -0.43), (0, 1, 0), radius=0.35, length=0.22)
        for x in (1.25, -1.25) for y in (0.69, -0.69)
    ]
    return [BoxSurface((-1.95, -0.78, -0.55), (1.95, 0.78, 0.78))] + wheels


def _pedestrian_primitives() -> List[Primitive]:
    return [
        EllipsoidSurface((0.0, 0.0, 0.745), (0.1, 0.09, 0.12)),
        CapsuleSurface((0.0, 0.0, 0.05), (0.0, 0.0, 0.5), radius=0.17),
        CapsuleSurface((0.0, 0.1, 0.0), (0.25, 0.1, -0.795), radius=0.07),
        CapsuleSurface((0.0, -0.1, 0.0), (-0.25, -0.1, -0.795), radius=0.07),
        CapsuleSurface((0.0, 0.22, 0.45), (-0.33, 0.25, -0.05), radius=0.05),
        CapsuleSurface((0.0, -0.22, 0.45), (0.35, -0.25, -0.05), radius=0.05),
    ]


def _cyclist_primitives() -> List[Primitive]:
    wheels = [CylinderSurface((x, 0.0, -0.525), (0, 1, 0), radius=0.34, length=0.06) for x in (0.54, -0.54)]
    return wheels + [CapsuleSurface((-0.1, 0.0, -0.1), (0.1, 0.0, 0.565), radius=0.3)]


_LAYOUTS = {
    TemplateCONSTANTS.CAR.class_id: _car_primitives,
    TemplateCONSTANTS.PEDESTRIAN.class_id: _pedestrian_primitives,
    TemplateCONSTANTS.CYCLIST.class_id: _cyclist_primitives,
}


def class_primitives(class_id: int) -> List[Primitive]:
    """Primitive layout of a class in canonical coordinates (before normalization)."""
    if class_id not in _LAYOUTS:
        raise TemplateError(f"Unknown class id {class_id}. Use one of {sorted(_LAYOUTS)}")
    return _LAYOUTS[class_id]()


def normalize_to_dims(points: np.ndarray, dims: Tuple[float, float, float]) -> np.ndarray:
    """Center the points' bounding box at the origin and stretch it to `dims`."""
    lower, upper = points.min(axis=0), points.max(axis=0)
    return (points - (lower + upper) / 2) * (np.asarray(dims) / (upper - lower))


def generate_template(class_id: int, k: int = TemplateCONSTANTS.DEFAULT_K, seed: int = 0) -> Template:
    """
    Sample k surface points from the class's primitive union.

    The budget is split across primitives by area with largest remainders, so
    each primitive's share is within one point of its exact area share.
    """
    if k < TemplateCONSTANTS.MIN_K:
        raise TemplateError(f"Template needs at least {TemplateCONSTANTS.MIN_K} points, got {k}")
    primitives = class_primitives(class_id)
    rng = seeded_rng(seed, class_id)
    counts = largest_remainder([p.area for p in primitives], k)
    points = np.vstack([p.sample(rng, int(n)) for p, n in zip(primitives, counts)])
    dims = TemplateCONSTANTS.CLASSES[class_id].canonical_dims
    logging.debug('Generated template for class %s with %s points', class_id, k)
    return Template(class_id, PointCloud(normalize_to_dims(points, dims)), dims)


def adjust_template(template: Template, gt: Box3D) -> PointCloud:
    """Scale the template to the box dims, rotate by its yaw and move it to its center."""
    scale = np.array([gt.l, gt.w, gt.h]) / np.asarray(template.canonical_dims)
    scaled = template.points.points * scale
    return PointCloud(scaled @ rotation_z(gt.theta).T + np.array([gt.x, gt.y, gt.z]))


class TemplateLibrary:
    """Lazily generated templates for every class at one (k, seed)."""

    def __init__(self, k: int = TemplateCONSTANTS.DEFAULT_K, seed: int = 0) -> None:
        if k < TemplateCONSTANTS.MIN_K:
            raise TemplateError(f"Template needs at least {TemplateCONSTANTS.MIN_K} points, got {k}")
        self.k = k
        self.seed = seed
        self.__templates: Dict[int, Template] = {}

    def get(self, class_id: int) -> Template:
        if class_id not in self.__templates:
            self.__templates[class_id] = generate_template(class_id, self.k, self.seed)
        return self.__templates[class_id]

    def adjust(self, class_id: int, gt: Box3D) -> PointCloud:
        return adjust_template(self.get(class_id), gt)

    def all(self) -> List[Template]:
        return [self.get(class_id) for class_id in TemplateCONSTANTS.CLASS_IDS]
