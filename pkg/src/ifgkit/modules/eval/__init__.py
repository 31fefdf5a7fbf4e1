from .labels import LabelParseError, LabeledBox, parse_labels, read_labels, serialize_labels, write_labels
from .metrics import (
    ApRow, EvalConfig, PrCurve, average_precision, bucketed_ap, class_ap, evaluate, match_detections, pr_curve,
    write_ap_csv,
)

__all__ = [
    'LabelParseError', 'LabeledBox', 'parse_labels', 'read_labels', 'serialize_labels', 'write_labels',
    'ApRow', 'EvalConfig', 'PrCurve', 'average_precision', 'bucketed_ap', 'class_ap', 'evaluate',
    'match_detections', 'pr_curve', 'write_ap_csv',
]
