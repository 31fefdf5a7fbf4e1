import math
import zlib
from typing import Sequence, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]


def wrap_angle(angle: ArrayLike) -> ArrayLike:
    """
    Wrap an angle (or array of angles) to [-pi, pi).
    """
    wrapped = np.mod(np.asarray(angle, dtype=np.float64) + math.pi, 2.0 * math.pi) - math.pi
    # np.mod can round up to exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= math.pi, wrapped - 2.0 * math.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def seeded_rng(*entropy: int) -> np.random.Generator:
    """
    Build a generator from a tuple of non-negative integers.
    """
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def name_seed(seed: int, name: str) -> np.random.Generator:
    """
    Generator keyed on a seed and a stable hash of a name.
    """
    return seeded_rng(seed, zlib.crc32(name.encode('utf-8')))


def rotation_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def largest_remainder(weights: Sequence[float], total: int) -> np.ndarray:
    """
    Split `total` into integer shares proportional to `weights`; each share
    deviates from its exact quota by less than one.
    """
    w = np.asarray(weights, dtype=np.float64)
    quotas = total * w / w.sum()
    shares = np.floor(quotas).astype(np.int64)
    remainder = int(total - shares.sum())
    if remainder:
        order = np.argsort(-(quotas - shares), kind='stable')
        shares[order[:remainder]] += 1
    return shares
