from .core import (
    Box3D, RegressionTarget, boxes_to_array, boxes_from_array, bev_corners, bev_corners_array,
    box_corners, encode_box, decode_box, encode_boxes, decode_boxes,
)
from .iou import bev_iou, iou3d, iou_one_to_many, iou_matrix
from .nms import nms

__all__ = [
    'Box3D', 'RegressionTarget', 'boxes_to_array', 'boxes_from_array', 'bev_corners',
    'bev_corners_array', 'box_corners', 'encode_box', 'decode_box', 'encode_boxes',
    'decode_boxes', 'bev_iou', 'iou3d', 'iou_one_to_many', 'iou_matrix', 'nms',
]
