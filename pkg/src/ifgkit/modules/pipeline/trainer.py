"""
Training loop: anchor and proposal assignment per scene, both stage losses,
gradient accumulation over `train.batch_size` scenes and one Adam step per
batch. The per-epoch mean losses go to a CSV log.
"""

import csv
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from absl import logging
from tqdm import tqdm

from src.ifgkit.modules.assign.core import (
    AnchorTargets, AssignmentConfig, ProposalLabel, anchor_targets, label_proposals, match_proposals_to_gt,
    sample_balanced,
)
from src.ifgkit.modules.geom.core import Box3D, encode_boxes
from src.ifgkit.modules.losses.composite import (
    AnchorBatch, ConfidenceBatch, LossReport, RcnnLossWeights, RegressionBatch, TemplateLossBatch, rcnn_loss,
    rpn_loss,
)
from src.ifgkit.modules.losses.contrastive import ContrastiveBatch
from src.ifgkit.modules.losses.core import probability_grad_to_logit
from src.ifgkit.modules.netcore.extractor import IntrinsicFeatureExtractor
from src.ifgkit.modules.netcore.params import Adam, ParamStore
from src.ifgkit.modules.pipeline.config import PipelineConfig, RefineConfig
from src.ifgkit.modules.pipeline.detector import Detector
from src.ifgkit.modules.pipeline.rpn import Proposals, RpnOutput
from src.ifgkit.modules.pipeline.scene import SceneSample
from src.ifgkit.modules.templates.core import TemplateLibrary, adjust_template
from src.ifgkit.utils.CONSTANTS import CHECKPOINT_FILENAME, LOSS_LOG_FILENAME
from src.ifgkit.utils.numeric_utils import seeded_rng


class TrainingDivergedError(RuntimeError):
    """A loss or gradient became non-finite; the last good parameters were saved."""

    def __init__(self, message: str, checkpoint_path: str) -> None:
        super().__init__(f"{message}; last good checkpoint written to {checkpoint_path}")
        self.checkpoint_path = checkpoint_path


@dataclass(frozen=True)
class TrainResult:
    checkpoint_path: str
    loss_log_path: str
    history: Tuple[LossReport, ...]


def canonical_pose(box: Box3D) -> Box3D:
    """The box's size at the origin with zero yaw."""
    return Box3D(0.0, 0.0, 0.0, box.l, box.w, box.h, 0.0)


def jitter_proposals(gt_boxes: np.ndarray, gt_classes: np.ndarray, cfg: RefineConfig,
                     rng: np.random.Generator) -> Proposals:
    """`cfg.jitter_copies` noisy copies of every GT box."""
    boxes = np.repeat(np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 7), cfg.jitter_copies, axis=0)
    boxes[:, :3] += rng.normal(0.0, cfg.jitter_xyz, size=(len(boxes), 3))
    boxes[:, 6] += rng.normal(0.0, cfg.jitter_theta, size=len(boxes))
    classes = np.repeat(np.asarray(gt_classes, dtype=np.int64), cfg.jitter_copies)
    return Proposals(boxes, classes, np.ones(len(boxes)))


def concat_proposals(parts: Sequence[Proposals]) -> Proposals:
    if not parts:
        return Proposals.empty()
    return Proposals(np.vstack([p.boxes for p in parts]), np.concatenate([p.classes for p in parts]),
                     np.concatenate([p.scores for p in parts]))


def check_labels(labels: Sequence[ProposalLabel], cfg: AssignmentConfig) -> None:
    """Foreground labels must carry a match above the foreground threshold, background ones sit below b."""
    for label in labels:
        if label.is_foreground and (label.matched_gt_index is None or not label.matched_iou > cfg.fg_threshold):
            raise RuntimeError(f"Inconsistent foreground label {label}")
        if label.class_label == 0 and not label.matched_iou < cfg.bg_threshold:
            raise RuntimeError(f"Inconsistent background label {label}")


class Trainer:
    """
    Trains a Detector on a fixed list of scenes.

    With `use_tafe`, foreground proposal features are pulled toward intrinsic
    features of the matched GT's template. The template extractor keeps its
    seeded initialization: targets are constants, so it receives no gradient.
    With `use_pscl`, labeled proposals feed the supervised contrastive loss.

    Parameters
    ----------
    cfg : PipelineConfig
    use_tafe, use_pscl : bool
    library : TemplateLibrary, optional
        Templates for intrinsic targets (default built from `cfg.scene`).
    """

    def __init__(self, cfg: PipelineConfig, use_tafe: bool = False, use_pscl: bool = False,
                 library: Optional[TemplateLibrary] = None) -> None:
        self.cfg = cfg
        self.detector = Detector(cfg, use_tafe, use_pscl)
        self.library = library if library is not None else TemplateLibrary(cfg.scene.template_k,
                                                                           cfg.scene.template_seed)
        self.extractor = IntrinsicFeatureExtractor(ParamStore(cfg.train.seed), cfg.extractor) if use_tafe else None
        train = cfg.train
        self.weights = RcnnLossWeights(train.w_conf, train.w_reg, train.w_temp, train.w_contra)
        self.__anchor_targets: Dict[int, AnchorTargets] = {}
        self.__intrinsic_targets: Dict[int, np.ndarray] = {}

    def anchor_targets_for(self, index: int, scene: SceneSample) -> AnchorTargets:
        if index not in self.__anchor_targets:
            rpn = self.detector.rpn
            self.__anchor_targets[index] = anchor_targets(rpn.anchors, rpn.anchor_classes, scene.gt_array,
                                                          scene.gt_class_array, self.cfg.assign)
        return self.__anchor_targets[index]

    def intrinsic_targets_for(self, index: int, scene: SceneSample) -> np.ndarray:
        """(G, out_dim) features of each GT's template, sized to the GT, in the GT's own frame."""
        if index not in self.__intrinsic_targets:
            targets = np.zeros((len(scene.gt_boxes), self.cfg.extractor.out_dim))
            for i, (box, class_id) in enumerate(zip(scene.gt_boxes, scene.gt_classes)):
                targets[i] = self.extractor(adjust_template(self.library.get(class_id), canonical_pose(box)))
            self.__intrinsic_targets[index] = targets
        return self.__intrinsic_targets[index]

    def training_proposals(self, scene: SceneSample, output: RpnOutput, rng: np.random.Generator) -> Proposals:
        mode = self.cfg.refine.proposal_mode
        parts: List[Proposals] = []
        if mode in ('rpn', 'mixed'):
            parts.append(self.detector.rpn.proposals(output, self.cfg.assign.train_nms_threshold,
                                                     self.cfg.assign.train_keep))
        if mode in ('jitter', 'mixed') and scene.gt_boxes:
            parts.append(jitter_proposals(scene.gt_array, scene.gt_class_array, self.cfg.refine, rng))
        return concat_proposals(parts)

    def scene_step(self, scene: SceneSample, index: int, epoch: int) -> LossReport:
        """Forward and backward on one scene; gradients accumulate in the store."""
        cfg = self.cfg
        rng = seeded_rng(cfg.train.seed, epoch, index)
        rpn = self.detector.rpn
        output = rpn.forward(scene.cloud)
        targets = self.anchor_targets_for(index, scene)
        first = rpn_loss(AnchorBatch(output.scores, targets.labels, rpn.anchor_classes, output.deltas, targets.targets))
        if not math.isfinite(first.total):
            return LossReport(l_rpn=first.total, total=first.total)
        rpn.backward(probability_grad_to_logit(first.grad_scores, output.scores), first.grad_deltas, output)

        proposals = self.training_proposals(scene, output, rng)
        if len(proposals) == 0:
            return LossReport(l_rpn=first.total, total=first.total)
        gt = scene.gt_array
        matches = match_proposals_to_gt(proposals.boxes, gt)
        labels = label_proposals(matches, scene.gt_class_array, cfg.assign)
        chosen = sample_balanced(labels, cfg.assign.sample_size, cfg.assign.positive_sample_iou, rng=rng)
        chosen_labels = [labels[i] for i in chosen]
        check_labels(chosen_labels, cfg.assign)
        boxes, ious, gt_indices = proposals.boxes[chosen], matches.ious[chosen], matches.gt_indices[chosen]

        refiner = self.detector.refiner
        out = refiner.forward(scene.cloud, boxes)
        confidence = ConfidenceBatch(out.scores, ious)
        if np.any((confidence.targets < 0) | (confidence.targets > 1)):
            raise RuntimeError("Confidence targets left [0, 1]")

        positive = (ious >= cfg.assign.positive_sample_iou) & (gt_indices >= 0)
        reg_targets = np.zeros((len(boxes), 7))
        if np.any(positive):
            reg_targets[positive] = encode_boxes(gt[gt_indices[positive]], boxes[positive])

        template_batch = None
        if self.extractor is not None:
            intrinsic = self.intrinsic_targets_for(index, scene)
            feature_targets = np.zeros_like(out.features)
            matched = gt_indices >= 0
            feature_targets[matched] = intrinsic[gt_indices[matched]]
            template_batch = TemplateLossBatch(out.features, feature_targets, ious, cfg.train.mu)

        contrastive_batch, members = None, None
        if out.projections is not None:
            usable = out.projection_valid & np.array([not label.is_ignored for label in chosen_labels], dtype=bool)
            members = np.nonzero(usable)[0]
            if len(members) >= 2:
                contrastive_batch = ContrastiveBatch(out.projections[members],
                                                     [chosen_labels[i].class_label for i in members], cfg.train.tau)

        second = rcnn_loss(confidence, RegressionBatch(out.deltas, reg_targets, positive), template_batch,
                           contrastive_batch, self.weights, cfg.train.contrastive_reduction)
        grad_projections = None
        if contrastive_batch is not None:
            grad_projections = np.zeros_like(out.projections)
            grad_projections[members] = second.grad_projections
        refiner.backward(out, probability_grad_to_logit(second.grad_scores, out.scores), second.grad_deltas,
                         second.grad_features, grad_projections)
        return LossReport(first.total, second.l_conf, second.l_reg, second.l_temp, second.l_contra,
                          first.total + second.total)

    def __diverged(self, message: str, last_good: Dict[str, np.ndarray], checkpoint_path: str) -> None:
        self.detector.store.load_state(last_good)
        self.detector.save(checkpoint_path)
        logging.error('Training diverged: %s', message)
        raise TrainingDivergedError(message, checkpoint_path)

    def train(self, scenes: Sequence[SceneSample], out_dir: str) -> TrainResult:
        """
        Raises
        ------
        TrainingDivergedError
            If a loss or gradient becomes non-finite.
        """
        if not scenes:
            raise ValueError("Training needs at least one scene")
        train = self.cfg.train
        store = self.detector.store
        os.makedirs(out_dir, exist_ok=True)
        checkpoint_path = os.path.join(out_dir, CHECKPOINT_FILENAME)
        log_path = os.path.join(out_dir, LOSS_LOG_FILENAME)
        steps_per_epoch = math.ceil(len(scenes) / train.batch_size)
        optimizer = Adam(store, train.learning_rate, train.schedule, total_steps=train.epochs * steps_per_epoch)
        last_good = store.state()
        history: List[LossReport] = []

        with open(log_path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(LossReport.header())
            for epoch in tqdm(range(train.epochs), desc='epochs', disable=not train.progress):
                order = seeded_rng(train.seed, epoch).permutation(len(scenes))
                epoch_total = LossReport()
                for start in range(0, len(order), train.batch_size):
                    batch = order[start:start + train.batch_size]
                    store.zero_grad()
                    for index in batch:
                        report = self.scene_step(scenes[index], int(index), epoch)
                        if not report.is_finite():
                            self.__diverged(f"non-finite loss at epoch {epoch}, scene {index}", last_good,
                                            checkpoint_path)
                        epoch_total = epoch_total + report
                    if not all(np.all(np.isfinite(g)) for g in store.grads().values()):
                        self.__diverged(f"non-finite gradient at epoch {epoch}", last_good, checkpoint_path)
                    store.scale_grads(1.0 / len(batch))
                    optimizer.step()
                    last_good = store.state()
                mean = epoch_total.scaled(1.0 / len(scenes))
                history.append(mean)
                writer.writerow(mean.row(epoch))
                f.flush()
                logging.info('Epoch %s: total loss %.6f (rpn %.6f)', epoch, mean.total, mean.l_rpn)

        self.detector.save(checkpoint_path)
        return TrainResult(checkpoint_path, log_path, tuple(history))


def train(cfg: PipelineConfig, scenes: Sequence[SceneSample], out_dir: str, use_tafe: bool = False,
          use_pscl: bool = False) -> TrainResult:
    return Trainer(cfg, use_tafe, use_pscl).train(scenes, out_dir)
