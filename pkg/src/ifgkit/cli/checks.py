"""
Oracle suites run by `ifgkit check`.

Each suite compares a fast implementation with an independent reference (grid
sampling, brute force, finite differences, hand-computed values) and reports
the worst deviation it observed.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Type

import numpy as np
from absl import logging

from src.ifgkit.cli.CONSTANTS import CliCONSTANTS
from src.ifgkit.modules.eval.metrics import PrCurve, average_precision
from src.ifgkit.modules.geom.core import Box3D, decode_boxes, encode_boxes
from src.ifgkit.modules.geom.iou import bev_iou, iou3d
from src.ifgkit.modules.geom.nms import nms
from src.ifgkit.modules.geom.oracles import brute_force_nms, grid_bev_iou, grid_iou3d
from src.ifgkit.modules.losses.composite import (
    AnchorBatch, ConfidenceBatch, RcnnLossWeights, RegressionBatch, TemplateLossBatch, rcnn_loss, rpn_loss,
    template_loss,
)
from src.ifgkit.modules.losses.contrastive import ContrastiveBatch, supcon_loss
from src.ifgkit.modules.losses.core import bce, confidence_label, focal_loss, smooth_l1
from src.ifgkit.modules.netcore.extractor import FeatureExtractorConfig, IntrinsicFeatureExtractor
from src.ifgkit.modules.netcore.grad_check import GradCheckReport, check_store_gradients, grad_check
from src.ifgkit.modules.netcore.layers import Mlp, dense_backward, dense_forward, l2_normalize, l2_normalize_backward
from src.ifgkit.modules.netcore.params import ParamStore
from src.ifgkit.modules.pointops.core import PointCloud
from src.ifgkit.utils.numeric_utils import name_seed, wrap_angle

SIZES = CliCONSTANTS.Check


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    checked: int
    worst: float
    limit: str

    def cells(self) -> Tuple[str, ...]:
        return self.name, 'pass' if self.passed else 'FAIL', str(self.checked), f'{self.worst:.3e}', self.limit


def random_box_array(rng: np.random.Generator, n: int, spread: float) -> np.ndarray:
    return np.column_stack([
        rng.uniform(-spread, spread, n), rng.uniform(-spread, spread, n), rng.uniform(-1, 1, n),
        rng.uniform(1.0, 4.0, n), rng.uniform(0.5, 2.0, n), rng.uniform(1.0, 2.0, n),
        rng.uniform(-math.pi, math.pi, n),
    ])


def random_overlapping_pair(rng: np.random.Generator) -> Tuple[Box3D, Box3D]:
    a = Box3D(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5),
              rng.uniform(1.0, 4.0), rng.uniform(0.8, 2.0), rng.uniform(0.8, 2.0), rng.uniform(-math.pi, math.pi))
    b = Box3D(a.x + rng.uniform(-1.5, 1.5), a.y + rng.uniform(-1.5, 1.5), a.z + rng.uniform(-0.8, 0.8),
              rng.uniform(1.0, 4.0), rng.uniform(0.8, 2.0), rng.uniform(0.8, 2.0), rng.uniform(-math.pi, math.pi))
    return a, b


def unit_rows(raw: np.ndarray) -> np.ndarray:
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def unit_rows_backward(grad: np.ndarray, raw: np.ndarray) -> np.ndarray:
    return np.stack([l2_normalize_backward(g, *l2_normalize(row)) for g, row in zip(grad, raw)])


class OracleSuite(ABC):
    """Base class for one group of oracle comparisons."""
    name: str = ''

    def __init__(self, quick: bool = False, seed: int = 0) -> None:
        self.quick = quick
        self.rng = name_seed(seed, self.name)

    def size(self, full_and_quick: Tuple[int, int]) -> int:
        return full_and_quick[1] if self.quick else full_and_quick[0]

    @abstractmethod
    def execute(self) -> SuiteResult:
        """Run the comparisons."""
        pass


class IouSuite(OracleSuite):
    """Exact BEV and 3D IoU against the grid-sampling oracles."""
    name = 'iou'

    def execute(self) -> SuiteResult:
        pairs = self.size(SIZES.IOU_PAIRS)
        worst = 0.0
        for _ in range(pairs):
            a, b = random_overlapping_pair(self.rng)
            worst = max(worst, abs(bev_iou(a, b) - grid_bev_iou(a, b)), abs(iou3d(a, b) - grid_iou3d(a, b)))
        return SuiteResult(self.name, worst <= SIZES.IOU_TOLERANCE, pairs, worst, f'<= {SIZES.IOU_TOLERANCE:g}')


class NmsSuite(OracleSuite):
    """Fast NMS against suppression over the full IoU table; the deviation is the count of differing sets."""
    name = 'nms'

    def execute(self) -> SuiteResult:
        sets = self.size(SIZES.NMS_SETS)
        mismatches = 0
        for _ in range(sets):
            boxes = random_box_array(self.rng, SIZES.NMS_SET_SIZE, 8.0)
            scores = self.rng.random(SIZES.NMS_SET_SIZE)
            threshold = float(self.rng.uniform(0.05, 0.8))
            max_keep = int(self.rng.integers(1, SIZES.NMS_SET_SIZE + 1))
            fast = nms(boxes, scores, threshold, max_keep)
            if not np.array_equal(fast, brute_force_nms(boxes, scores, threshold, max_keep)):
                mismatches += 1
        return SuiteResult(self.name, mismatches == 0, sets, float(mismatches), '== 0')


class EncodingSuite(OracleSuite):
    """Residual encoding followed by decoding recovers the box."""
    name = 'encoding'

    def execute(self) -> SuiteResult:
        gt = random_box_array(self.rng, SIZES.ENCODING_PAIRS, 10.0)
        anchors = random_box_array(self.rng, SIZES.ENCODING_PAIRS, 10.0)
        back = decode_boxes(encode_boxes(gt, anchors), anchors)
        worst = max(float(np.abs(back[:, :6] - gt[:, :6]).max()),
                    float(np.abs(wrap_angle(back[:, 6] - gt[:, 6])).max()))
        return SuiteResult(self.name, worst < SIZES.ENCODING_TOLERANCE, SIZES.ENCODING_PAIRS, worst,
                           f'< {SIZES.ENCODING_TOLERANCE:g}')


class GradientSuite(OracleSuite):
    """Central finite differences for every loss and every network layer."""
    name = 'gradients'

    def _smooth_l1(self) -> GradCheckReport:
        pred, target = self.rng.normal(scale=2, size=20), self.rng.normal(size=20)
        return grad_check(lambda: smooth_l1(pred, target)[0], {'pred': pred}, {'pred': smooth_l1(pred, target)[1]})

    def _focal(self) -> GradCheckReport:
        p = np.linspace(0.02, 0.98, 25)
        labels = (self.rng.random(25) > 0.5).astype(np.float64)
        return grad_check(lambda: focal_loss(p, labels)[0], {'p': p}, {'p': focal_loss(p, labels)[1]})

    def _bce(self) -> GradCheckReport:
        p, y = self.rng.uniform(0.05, 0.95, 30), self.rng.random(30)
        return grad_check(lambda: bce(p, y)[0], {'p': p}, {'p': bce(p, y)[1]})

    def _supcon(self, reduction: str) -> GradCheckReport:
        raw = self.rng.normal(size=(10, 5))
        labels = np.array([0, 0, 1, 1, 1, 2, 2, 0, 3, 1])

        def loss():
            return supcon_loss(ContrastiveBatch(unit_rows(raw), labels), reduction).value

        result = supcon_loss(ContrastiveBatch(unit_rows(raw), labels), reduction)
        return grad_check(loss, {'raw': raw}, {'raw': unit_rows_backward(result.grad, raw)})

    def _template(self) -> GradCheckReport:
        features, targets = self.rng.normal(size=(8, 16)), self.rng.normal(size=(8, 16))
        ious = self.rng.random(8)
        result = template_loss(TemplateLossBatch(features, targets, ious))
        return grad_check(lambda: template_loss(TemplateLossBatch(features, targets, ious)).value,
                          {'features': features}, {'features': result.grad})

    def _rpn(self) -> GradCheckReport:
        n = 40
        labels = self.rng.choice([-1, 0, 0, 1, 2], size=n)
        classes = np.where(labels >= 1, labels, self.rng.integers(1, 4, n))
        batch = AnchorBatch(self.rng.uniform(0.05, 0.95, n), labels, classes,
                            self.rng.normal(size=(n, 7)), self.rng.normal(size=(n, 7)))
        result = rpn_loss(batch)
        return grad_check(lambda: rpn_loss(batch).total, {'scores': batch.scores, 'deltas': batch.deltas},
                          {'scores': result.grad_scores, 'deltas': result.grad_deltas})

    def _rcnn(self) -> GradCheckReport:
        n = 12
        scores, ious = self.rng.uniform(0.05, 0.95, n), self.rng.random(n)
        deltas, targets, positive = self.rng.normal(size=(n, 7)), self.rng.normal(size=(n, 7)), self.rng.random(n) > 0.5
        features, feature_targets = self.rng.normal(size=(n, 16)), self.rng.normal(size=(n, 16))
        raw, labels = self.rng.normal(size=(n, 8)), self.rng.integers(0, 3, n)
        weights = RcnnLossWeights(conf=0.7, reg=1.3, temp=0.5, contra=2.0)

        def loss():
            return rcnn_loss(ConfidenceBatch(scores, ious), RegressionBatch(deltas, targets, positive),
                             TemplateLossBatch(features, feature_targets, ious),
                             ContrastiveBatch(unit_rows(raw), labels), weights).total

        result = rcnn_loss(ConfidenceBatch(scores, ious), RegressionBatch(deltas, targets, positive),
                           TemplateLossBatch(features, feature_targets, ious),
                           ContrastiveBatch(unit_rows(raw), labels), weights)
        return grad_check(loss, {'scores': scores, 'deltas': deltas, 'features': features, 'raw': raw}, {
            'scores': result.grad_scores, 'deltas': result.grad_deltas, 'features': result.grad_features,
            'raw': unit_rows_backward(result.grad_projections, raw),
        })

    def _dense(self) -> GradCheckReport:
        x, w, b = self.rng.normal(size=(5, 8)), self.rng.normal(size=(8, 8)), self.rng.normal(size=8)
        upstream = self.rng.normal(size=(5, 8))
        dx, dw, db = dense_backward(upstream, x, w)
        return grad_check(lambda: float(np.sum(dense_forward(x, w, b) * upstream)),
                          {'x': x, 'w': w, 'b': b}, {'x': dx, 'w': dw, 'b': db})

    def _l2_normalize(self) -> GradCheckReport:
        v, upstream = self.rng.normal(size=128), self.rng.normal(size=128)
        grad = l2_normalize_backward(upstream, *l2_normalize(v))
        return grad_check(lambda: float(l2_normalize(v)[0] @ upstream), {'v': v}, {'v': grad})

    def _mlp(self) -> GradCheckReport:
        store = ParamStore(seed=int(self.rng.integers(1 << 31)))
        mlp = Mlp(store, 'mlp', (8, 6, 4))
        x, upstream = self.rng.normal(size=(5, 8)), self.rng.normal(size=(5, 4))

        def backward():
            out, cache = mlp.forward(x)
            mlp.backward(upstream, cache)

        return check_store_gradients(lambda: float(np.sum(mlp(x) * upstream)), backward, store,
                                     step=1e-6, skip_kinks=True)

    def _extractor(self) -> GradCheckReport:
        store = ParamStore(seed=int(self.rng.integers(1 << 31)))
        cfg = FeatureExtractorConfig(m=16, group_sizes=(4, 8), local_hidden=8, local_dim=8, fc_hidden=(16, 12),
                                     out_dim=16)
        extractor = IntrinsicFeatureExtractor(store, cfg)
        cloud = PointCloud(self.rng.uniform(-0.5, 0.5, size=(64, 3)))
        upstream = self.rng.normal(size=cfg.out_dim)

        def backward():
            feature, cache = extractor.forward(cloud)
            extractor.backward(upstream, cache)

        return check_store_gradients(lambda: float(extractor(cloud) @ upstream), backward, store, step=1e-6,
                                     max_entries=self.size(SIZES.EXTRACTOR_ENTRIES), skip_kinks=True)

    def checks(self) -> List[Tuple[str, Callable[[], GradCheckReport]]]:
        return [
            ('smooth_l1', self._smooth_l1), ('focal', self._focal), ('bce', self._bce),
            ('supcon_sum', lambda: self._supcon('sum')), ('supcon_mean', lambda: self._supcon('mean')),
            ('template', self._template), ('rpn', self._rpn), ('rcnn', self._rcnn),
            ('dense', self._dense), ('l2_normalize', self._l2_normalize), ('mlp', self._mlp),
            ('extractor', self._extractor),
        ]

    def execute(self) -> SuiteResult:
        worst, checked, passed = 0.0, 0, True
        for label, run in self.checks():
            report = run()
            logging.info('Gradient check %s: %s', label, report.summary())
            if not report.passed:
                logging.error('Gradient check %s failed: %s', label, report.summary())
            passed = passed and report.passed
            worst = max(worst, report.max_rel_error)
            checked += report.checked
        return SuiteResult(self.name, passed, checked, worst, '< 1e-4 relative')


class ConfidenceLabelSuite(OracleSuite):
    """Exact values of the IoU-to-confidence mapping."""
    name = 'confidence_label'
    EXPECTED = ((0.25, 0.0), (0.5, 0.5), (0.75, 1.0))

    def execute(self) -> SuiteResult:
        worst = max(abs(float(confidence_label(iou)) - label) for iou, label in self.EXPECTED)
        return SuiteResult(self.name, worst == 0.0, len(self.EXPECTED), worst, '== 0')


class SupConSeparationSuite(OracleSuite):
    """
    Descending the contrastive loss alone over free unit features separates
    the classes; the reported value is the intra-minus-inter cosine margin.
    """
    name = 'supcon_separation'

    def execute(self) -> SuiteResult:
        labels = np.repeat([1, 2, 3], 10)
        raw = unit_rows(self.rng.normal(size=(len(labels), 8)))
        for _ in range(SIZES.SUPCON_STEPS):
            result = supcon_loss(ContrastiveBatch(unit_rows(raw), labels), 'mean')
            raw = raw - SIZES.SUPCON_STEP_SIZE * unit_rows_backward(result.grad, raw)
        f = unit_rows(raw)
        cosine = f @ f.T
        same = (labels[:, None] == labels[None, :]) & ~np.eye(len(labels), dtype=bool)
        different = labels[:, None] != labels[None, :]
        margin = float(cosine[same].mean() - cosine[different].mean())
        return SuiteResult(self.name, margin >= SIZES.SUPCON_MIN_SEPARATION, SIZES.SUPCON_STEPS, margin,
                           f'>= {SIZES.SUPCON_MIN_SEPARATION:g}')


class AveragePrecisionSuite(OracleSuite):
    """Hand-computed precision/recall fixtures."""
    name = 'average_precision'
    THREE_GT = PrCurve(((1.0, 1 / 3), (0.5, 1 / 3), (2 / 3, 2 / 3)), 3)
    CASES: Sequence[Tuple[PrCurve, str, float]] = (
        (THREE_GT, 'R11', 6 / 11),
        (THREE_GT, 'R40', (13 + 13 * 2 / 3) / 40),
        (PrCurve(((1.0, 0.5), (1.0, 1.0)), 2), 'R11', 1.0),
        (PrCurve(((1.0, 0.5), (1.0, 1.0)), 2), 'R40', 1.0),
        (PrCurve((), 4), 'R40', 0.0),
    )

    def execute(self) -> SuiteResult:
        worst = max(abs(average_precision(curve, mode) - expected) for curve, mode, expected in self.CASES)
        return SuiteResult(self.name, worst <= SIZES.AP_TOLERANCE, len(self.CASES), worst,
                           f'<= {SIZES.AP_TOLERANCE:g}')


SUITES: Tuple[Type[OracleSuite], ...] = (
    IouSuite, NmsSuite, EncodingSuite, GradientSuite, ConfidenceLabelSuite, SupConSeparationSuite,
    AveragePrecisionSuite,
)


def run_checks(quick: bool = False, seed: int = 0) -> List[SuiteResult]:
    results = []
    for suite in SUITES:
        result = suite(quick, seed).execute()
        logging.info('Suite %s: %s (worst %s)', result.name, 'pass' if result.passed else 'FAIL', result.worst)
        results.append(result)
    return results
