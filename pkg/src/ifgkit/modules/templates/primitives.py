"""
Surface primitives used to build the procedural templates.

Every primitive knows its surface area and draws points uniformly from its
surface, so a union of primitives can be sampled by splitting the point budget
in proportion to area.
"""

import math
from abc import ABC, abstractmethod
from typing import Sequence, Tuple

import numpy as np


def _unit(vector: Sequence[float]) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    return v / np.linalg.norm(v)


def _orthonormal_basis(axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = _unit(np.cross(axis, helper))
    return u, np.cross(axis, u)


def _sphere_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class Primitive(ABC):
    """Base class for sampleable surfaces."""

    @property
    @abstractmethod
    def area(self) -> float:
        """Surface area in square meters."""
        pass

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n surface points, shape (n, 3)."""
        pass

    @abstractmethod
    def contains(self, points: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
        """Mask of points inside the solid grown by `tolerance`."""
        pass


class BoxSurface(Primitive):
    """Axis-aligned cuboid given by its min and max corners."""

    def __init__(self, lower: Sequence[float], upper: Sequence[float]) -> None:
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        if np.any(self.upper <= self.lower):
            raise ValueError(f"Degenerate box {lower} -> {upper}")

    @property
    def _face_areas(self) -> np.ndarray:
        dx, dy, dz = self.upper - self.lower
        return np.array([dy * dz, dy * dz, dx * dz, dx * dz, dx * dy, dx * dy])

    @property
    def area(self) -> float:
        return float(self._face_areas.sum())

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        areas = self._face_areas
        faces = rng.choice(6, size=n, p=areas / areas.sum())
        points = self.lower + rng.random((n, 3)) * (self.upper - self.lower)
        axis = faces // 2
        pinned = np.where(faces % 2 == 0, self.lower[axis], self.upper[axis])
        points[np.arange(n), axis] = pinned
        return points

    def contains(self, points: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
        return np.all((points >= self.lower - tolerance) & (points <= self.upper + tolerance), axis=1)


class CylinderSurface(Primitive):
    """Closed cylinder: lateral surface plus both caps."""

    def __init__(self, center: Sequence[float], axis: Sequence[float], radius: float, length: float) -> None:
        self.center = np.asarray(center, dtype=np.float64)
        self.axis = _unit(axis)
        self.radius = float(radius)
        self.length = float(length)

    @property
    def area(self) -> float:
        return 2 * math.pi * self.radius * self.length + 2 * math.pi * self.radius ** 2

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u, v = _orthonormal_basis(self.axis)
        lateral = 2 * math.pi * self.radius * self.length
        on_side = rng.random(n) < lateral / self.area
        angle = rng.uniform(0, 2 * math.pi, n)
        # caps need sqrt-distributed radii for uniform density
        radial = np.where(on_side, self.radius, self.radius * np.sqrt(rng.random(n)))
        along = np.where(on_side, rng.uniform(-0.5, 0.5, n), rng.choice([-0.5, 0.5], size=n)) * self.length
        return (self.center + along[:, None] * self.axis
                + (radial * np.cos(angle))[:, None] * u + (radial * np.sin(angle))[:, None] * v)

    def contains(self, points: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
        offset = points - self.center
        along = offset @ self.axis
        radial = np.linalg.norm(offset - along[:, None] * self.axis, axis=1)
        return (np.abs(along) <= self.length / 2 + tolerance) & (radial <= self.radius + tolerance)


class CapsuleSurface(Primitive):
    """Segment swept by a sphere: a tube with two hemispherical ends."""

    def __init__(self, start: Sequence[float], end: Sequence[float], radius: float) -> None:
        self.start = np.asarray(start, dtype=np.float64)
        self.end = np.asarray(end, dtype=np.float64)
        self.radius = float(radius)
        self.length = float(np.linalg.norm(self.end - self.start))
        self.axis = _unit(self.end - self.start)

    @property
    def area(self) -> float:
        return 2 * math.pi * self.radius * self.length + 4 * math.pi * self.radius ** 2

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u, v = _orthonormal_basis(self.axis)
        lateral = 2 * math.pi * self.radius * self.length
        on_side = rng.random(n) < lateral / self.area
        angle = rng.uniform(0, 2 * math.pi, n)
        side = (self.start + rng.random(n)[:, None] * (self.end - self.start)
                + self.radius * (np.cos(angle)[:, None] * u + np.sin(angle)[:, None] * v))
        direction = _sphere_directions(rng, n)
        # each hemisphere sits on the end it faces
        anchor = np.where((direction @ self.axis >= 0)[:, None], self.end, self.start)
        cap = anchor + self.radius * direction
        return np.where(on_side[:, None], side, cap)

    def contains(self, points: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
        t = np.clip((points - self.start) @ self.axis, 0.0, self.length)
        nearest = self.start + t[:, None] * self.axis
        return np.linalg.norm(points - nearest, axis=1) <= self.radius + tolerance


class EllipsoidSurface(Primitive):
    """Axis-aligned ellipsoid, sampled uniformly by area with rejection."""

    def __init__(self, center: Sequence[float], semi_axes: Sequence[float]) -> None:
        self.center = np.asarray(center, dtype=np.float64)
        self.semi_axes = np.asarray(semi_axes, dtype=np.float64)

    @property
    def area(self) -> float:
        # Knud Thomsen's approximation, relative error below 1.1%
        a, b, c = self.semi_axes
        p = 1.6075
        return 4 * math.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3) ** (1 / p)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        a, b, c = self.semi_axes
        ceiling = max(b * c, a * c, a * b)
        accepted = []
        remaining = n
        while remaining > 0:
            direction = _sphere_directions(rng, 2 * remaining + 8)
            density = np.sqrt((b * c * direction[:, 0]) ** 2 + (a * c * direction[:, 1]) ** 2
                              + (a * b * direction[:, 2]) ** 2)
            keep = direction[rng.random(len(direction)) < density / ceiling][:remaining]
            accepted.append(keep)
            remaining -= len(keep)
        return self.center + np.vstack(accepted) * self.semi_axes

    def contains(self, points: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
        scaled = (points - self.center) / (self.semi_axes + tolerance)
        return np.sum(scaled ** 2, axis=1) <= 1.0
