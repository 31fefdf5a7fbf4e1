"""
KITTI-style label text: one object per line,
`type trunc occl alpha x1 y1 x2 y2 h w l x y z ry [score]`.

Label (x, y, z) is the bottom center of the box; boxes are stored by center,
so z is shifted by h/2 on the way in and out. No calibration is applied.
"""

from dataclasses import dataclass
from typing import Iterable, List, Optional

from absl import logging

from src.ifgkit.modules.eval.CONSTANTS import EvalCONSTANTS
from src.ifgkit.modules.geom.core import Box3D
from src.ifgkit.modules.templates.CONSTANTS import TemplateCONSTANTS, class_name

_CLASS_BY_NAME = {c.name: c.class_id for c in TemplateCONSTANTS.CLASSES.values()}


class LabelParseError(ValueError):
    """A malformed label line; `line` is 1-based."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class LabeledBox:
    """A ground-truth or detected box; matching never crosses `frame_id`."""
    box: Box3D
    class_id: int
    score: Optional[float] = None
    frame_id: int = 0

    def __post_init__(self) -> None:
        if self.class_id not in TemplateCONSTANTS.CLASSES:
            raise ValueError(f"Unknown class id {self.class_id}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"Score must lie in [0, 1], got {self.score}")


def parse_labels(text: str, frame_id: int = 0) -> List[LabeledBox]:
    objects = []
    for number, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (EvalCONSTANTS.LABEL_FIELDS, EvalCONSTANTS.SCORED_LABEL_FIELDS):
            raise LabelParseError(number, f"expected 15 or 16 fields, got {len(fields)}")
        try:
            values = [float(v) for v in fields[1:]]
        except ValueError as e:
            raise LabelParseError(number, f"non-numeric field: {e}") from e
        class_id = _CLASS_BY_NAME.get(fields[0])
        if class_id is None:
            logging.warning('Skipping unknown label type %s at line %s', fields[0], number)
            continue
        h, w, l, x, y, z, ry = values[7:14]
        score = values[14] if len(values) == EvalCONSTANTS.SCORED_LABEL_FIELDS - 1 else None
        try:
            objects.append(LabeledBox(Box3D(x, y, z + h / 2, l, w, h, ry), class_id, score, frame_id))
        except ValueError as e:
            raise LabelParseError(number, str(e)) from e
    return objects


def _format_line(obj: LabeledBox) -> str:
    box = obj.box
    values = [0.0] * EvalCONSTANTS.UNUSED_FIELDS + [box.h, box.w, box.l, box.x, box.y, box.z - box.h / 2, box.theta]
    if obj.score is not None:
        values.append(obj.score)
    return ' '.join([class_name(obj.class_id), *(f'{v:.{EvalCONSTANTS.DECIMALS}f}' for v in values)])


def serialize_labels(objects: Iterable[LabeledBox]) -> str:
    lines = [_format_line(obj) for obj in objects]
    return ''.join(line + '\n' for line in lines)


def read_labels(path: str, frame_id: int = 0) -> List[LabeledBox]:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_labels(f.read(), frame_id)


def write_labels(objects: Iterable[LabeledBox], path: str) -> str:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(serialize_labels(objects))
    return path
