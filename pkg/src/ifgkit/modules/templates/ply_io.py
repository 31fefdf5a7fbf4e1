"""
ASCII PLY storage for templates.

The class id and canonical dims travel in comment lines; coordinates are
written at float32 precision.
"""

import os
from typing import List, Optional, Tuple

import numpy as np
from absl import logging

from src.ifgkit.modules.pointops.core import PointCloud
from src.ifgkit.modules.templates.core import Template, TemplateError
from src.ifgkit.modules.templates.CONSTANTS import TemplateCONSTANTS

PLY = TemplateCONSTANTS.Ply


class PlyParseError(ValueError):
    """Malformed PLY content; `line` is 1-based."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


def _float32_text(value: float) -> str:
    return '%.9g' % np.float32(value)


def format_template(template: Template) -> str:
    header = [
        PLY.MAGIC,
        PLY.FORMAT,
        f"{PLY.CLASS_COMMENT} {template.class_id}",
        f"{PLY.DIMS_COMMENT} {' '.join(repr(float(d)) for d in template.canonical_dims)}",
        f"{PLY.ELEMENT_VERTEX} {template.k}",
        *PLY.PROPERTIES,
        PLY.END_HEADER,
    ]
    body = [' '.join(_float32_text(v) for v in point) for point in template.points.points]
    return '\n'.join(header + body) + '\n'


def write_template(template: Template, path: str) -> str:
    """Write `template` to `path`, creating parent directories."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(format_template(template))
    logging.info('Wrote %s-point template for class %s to %s', template.k, template.class_id, path)
    return path


def _numbers(line_no: int, fields: List[str], count: int, what: str) -> List[float]:
    if len(fields) != count:
        raise PlyParseError(line_no, f"expected {count} values for {what}, got {len(fields)}")
    try:
        return [float(f) for f in fields]
    except ValueError as e:
        raise PlyParseError(line_no, f"non-numeric {what}: {' '.join(fields)}") from e


def parse_template(text: str) -> Template:
    """Parse PLY text written by `format_template`."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != PLY.MAGIC:
        raise PlyParseError(1, f"expected '{PLY.MAGIC}'")

    class_id: Optional[int] = None
    dims: Optional[Tuple[float, float, float]] = None
    vertex_count: Optional[int] = None
    properties: List[str] = []
    body_start = None
    for index in range(1, len(lines)):
        line_no = index + 1
        line = lines[index].strip()
        if line == PLY.END_HEADER:
            body_start = index + 1
            break
        if line.startswith('format'):
            if line != PLY.FORMAT:
                raise PlyParseError(line_no, f"unsupported format '{line}'")
        elif line.startswith(PLY.CLASS_COMMENT + ' '):
            value = _numbers(line_no, line.split()[2:], 1, 'class id')[0]
            class_id = int(value)
        elif line.startswith(PLY.DIMS_COMMENT + ' '):
            dims = tuple(_numbers(line_no, line.split()[2:], 3, 'dims'))
        elif line.startswith('comment'):
            continue
        elif line.startswith(PLY.ELEMENT_VERTEX + ' '):
            vertex_count = int(_numbers(line_no, line.split()[2:], 1, 'vertex count')[0])
        elif line.startswith('property'):
            properties.append(line)
        else:
            raise PlyParseError(line_no, f"unexpected header line '{line}'")

    if body_start is None:
        raise PlyParseError(len(lines) + 1, f"missing '{PLY.END_HEADER}'")
    if class_id is None or dims is None:
        raise PlyParseError(body_start, "header lacks class or dims comment")
    if vertex_count is None or vertex_count < 1:
        raise PlyParseError(body_start, "header lacks a positive vertex count")
    if tuple(properties) != PLY.PROPERTIES:
        raise PlyParseError(body_start, f"expected properties {PLY.PROPERTIES}, got {tuple(properties)}")

    body = [(body_start + i + 1, line) for i, line in enumerate(lines[body_start:]) if line.strip()]
    if len(body) < vertex_count:
        raise PlyParseError(len(lines) + 1, f"expected {vertex_count} vertices, file ends after {len(body)}")
    if len(body) > vertex_count:
        raise PlyParseError(body[vertex_count][0], f"more than {vertex_count} vertices")
    points = np.array([_numbers(line_no, line.split(), 3, 'vertex') for line_no, line in body])

    try:
        return Template(class_id, PointCloud(points), dims)
    except (TemplateError, ValueError) as e:
        raise PlyParseError(body_start, str(e)) from e


def read_template(path: str) -> Template:
    with open(path, 'r', encoding='utf-8') as f:
        return parse_template(f.read())
