"""
Constants for the per-class templates.

Class ids are shared by every module: 0 is background, 1..3 are the object
classes. Canonical dimensions are (L, W, H) in meters.
"""

from dataclasses import dataclass
from typing import Dict, Tuple


@dataclass(frozen=True)
class ObjectClass:
    """
    A detectable object class.

    Attributes
    ----------
    class_id : int
        Positive id, 0 is reserved for background.
    name : str
        Label-file type name.
    canonical_dims : tuple of float
        Template (L, W, H) in meters.
    """
    class_id: int
    name: str
    canonical_dims: Tuple[float, float, float]


class TemplateCONSTANTS:
    """
    Constants for template generation and storage.
    """
    BACKGROUND: int = 0
    CAR = ObjectClass(1, 'Car', (3.9, 1.6, 1.56))
    PEDESTRIAN = ObjectClass(2, 'Pedestrian', (0.8, 0.6, 1.73))
    CYCLIST = ObjectClass(3, 'Cyclist', (1.76, 0.6, 1.73))

    CLASSES: Dict[int, ObjectClass] = {c.class_id: c for c in (CAR, PEDESTRIAN, CYCLIST)}
    CLASS_IDS: Tuple[int, ...] = tuple(CLASSES)

    DEFAULT_K: int = 1024
    MIN_K: int = 64
    # extents of a template must match its canonical dims this closely
    EXTENT_TOLERANCE: float = 1e-6

    class Ply:
        """
        ASCII PLY header lines.
        """
        MAGIC: str = 'ply'
        FORMAT: str = 'format ascii 1.0'
        CLASS_COMMENT: str = 'comment class'
        DIMS_COMMENT: str = 'comment dims'
        ELEMENT_VERTEX: str = 'element vertex'
        PROPERTIES: Tuple[str, ...] = ('property float x', 'property float y', 'property float z')
        END_HEADER: str = 'end_header'


def class_name(class_id: int) -> str:
    return TemplateCONSTANTS.CLASSES[class_id].name
