import math

import numpy as np
import pytest

from src.ifgkit.modules.assign import (
    IGNORED, AssignmentConfig, MatchResult, ProposalLabel, anchor_targets, label_proposals,
    match_proposals_to_gt, sample_balanced,
)
from src.ifgkit.modules.geom import Box3D, bev_iou, iou3d


def random_boxes(rng, n, spread):
    return np.column_stack([
        rng.uniform(-spread, spread, n), rng.uniform(-spread, spread, n), rng.uniform(-0.3, 0.3, n),
        rng.uniform(1.5, 4.5, n), rng.uniform(0.8, 2.0, n), rng.uniform(1.2, 1.8, n),
        rng.uniform(-math.pi, math.pi, n),
    ])


class TestMatching:
    def test_identity(self):
        gt = np.array([[5.0, 1.0, 0.0, 3.9, 1.6, 1.5, 0.3]])
        match = match_proposals_to_gt(gt.copy(), gt)
        assert match.ious[0] == pytest.approx(1.0)
        assert match.gt_indices[0] == 0

    def test_no_gts(self):
        match = match_proposals_to_gt(random_boxes(np.random.default_rng(0), 5, 5), np.zeros((0, 7)))
        assert not np.any(match.ious)
        assert np.all(match.gt_indices == -1)

    def test_disjoint_proposal_keeps_its_argmax(self):
        gts = np.array([[0.0, 0.0, 0.0, 2.0, 1.0, 1.5, 0.0], [6.0, 0.0, 0.0, 2.0, 1.0, 1.5, 0.0]])
        match = match_proposals_to_gt(np.array([[30.0, 30.0, 0.0, 2.0, 1.0, 1.5, 0.0]]), gts)
        assert match.ious[0] == 0.0
        assert match.gt_indices[0] == 0

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(1)
        proposals, gts = random_boxes(rng, 50, 4), random_boxes(rng, 10, 4)
        match = match_proposals_to_gt(proposals, gts)
        for i, proposal in enumerate(proposals):
            row = [iou3d(Box3D.from_array(proposal), Box3D.from_array(gt)) for gt in gts]
            assert match.ious[i] == pytest.approx(max(row), abs=1e-12)
            assert row[match.gt_indices[i]] == pytest.approx(max(row), abs=1e-12)


class TestLabeling:
    CFG = AssignmentConfig()

    def _label(self, iou):
        return label_proposals(MatchResult(np.array([iou]), np.array([0])), np.array([1]), self.CFG)[0]

    def test_three_way(self):
        assert self._label(0.8).class_label == 1
        assert self._label(0.10).class_label == 0
        assert self._label(0.5).class_label == IGNORED

    def test_boundaries_are_ignored(self):
        assert self._label(0.75).is_ignored
        assert self._label(0.25).is_ignored

    def test_foreground_takes_matched_class(self):
        labels = label_proposals(MatchResult(np.array([0.9, 0.95]), np.array([1, 0])), np.array([3, 2]), self.CFG)
        assert [label.class_label for label in labels] == [2, 3]
        assert labels[0].matched_gt_index == 1

    def test_invariants_and_rigid_motion(self):
        rng = np.random.default_rng(2)
        proposals, gts = random_boxes(rng, 60, 3), random_boxes(rng, 6, 3)
        classes = rng.integers(1, 4, 6)
        labels = label_proposals(match_proposals_to_gt(proposals, gts), classes, self.CFG)
        for label in labels:
            if label.class_label >= 1:
                assert label.matched_iou > 0.75
            elif label.class_label == 0:
                assert label.matched_iou < 0.25
            else:
                assert 0.25 <= label.matched_iou <= 0.75

        phi = 0.7
        c, s = math.cos(phi), math.sin(phi)

        def move(boxes):
            out = boxes.copy()
            out[:, 0], out[:, 1] = c * boxes[:, 0] - s * boxes[:, 1] + 3, s * boxes[:, 0] + c * boxes[:, 1] - 1
            out[:, 6] = boxes[:, 6] + phi
            return out

        moved = label_proposals(match_proposals_to_gt(move(proposals), move(gts)), classes, self.CFG)
        assert [label.class_label for label in moved] == [label.class_label for label in labels]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AssignmentConfig(fg_threshold=0.2, bg_threshold=0.3)
        with pytest.raises(ValueError):
            AssignmentConfig(anchor_pos={1: 0.4}, anchor_neg={1: 0.5})


class TestAnchorTargets:
    def test_identical_anchor_is_positive_with_zero_target(self):
        gt = np.array([[5.0, 0.0, -0.7, 3.9, 1.6, 1.56, 0.0]])
        anchors = np.vstack([gt, [[20.0, 0.0, -0.7, 3.9, 1.6, 1.56, 0.0]]])
        result = anchor_targets(anchors, np.array([1, 1]), gt, np.array([1]), AssignmentConfig())
        assert list(result.labels) == [1, 0]
        np.testing.assert_allclose(result.targets[0], 0.0, atol=1e-12)
        assert result.num_fg == 1

    def test_other_class_never_matches(self):
        gt = np.array([[5.0, 0.0, 0.0, 3.9, 1.6, 1.56, 0.0]])
        result = anchor_targets(gt.copy(), np.array([2]), gt, np.array([1]), AssignmentConfig())
        assert list(result.labels) == [0]

    def test_threshold_or_best_rule(self):
        rng = np.random.default_rng(3)
        anchors = random_boxes(rng, 300, 6)
        anchor_classes = rng.integers(1, 4, 300)
        gts = random_boxes(rng, 5, 6)
        gt_classes = rng.integers(1, 4, 5)
        cfg = AssignmentConfig()
        result = anchor_targets(anchors, anchor_classes, gts, gt_classes, cfg)

        table = np.array([[bev_iou(Box3D.from_array(a), Box3D.from_array(g)) if ac == gc else 0.0
                           for g, gc in zip(gts, gt_classes)] for a, ac in zip(anchors, anchor_classes)])
        forced = {int(np.argmax(table[:, j])) for j in range(len(gts)) if table[:, j].max() > 0}
        for i, label in enumerate(result.labels):
            best = table[i].max()
            if label >= 1:
                assert label == anchor_classes[i]
                assert best >= cfg.anchor_pos[label] - 1e-12 or i in forced
            elif label == 0:
                assert best < cfg.anchor_neg[anchor_classes[i]] + 1e-12 and i not in forced
            else:
                assert i not in forced


def make_labels(ious):
    return [ProposalLabel(0, None, float(iou)) for iou in ious]


class TestSampleBalanced:
    def test_balanced(self):
        labels = make_labels([0.8] * 200 + [0.1] * 200)
        chosen = sample_balanced(labels, 128, seed=0)
        assert len(chosen) == 128 and len(set(chosen)) == 128
        assert np.sum(chosen < 200) == 64

    def test_scarce_positives(self):
        labels = make_labels([0.8] * 10 + [0.1] * 300)
        chosen = sample_balanced(labels, 128, seed=0)
        assert np.sum(chosen < 10) == 10 and len(chosen) == 128

    def test_scarce_negatives_are_filled_with_positives(self):
        labels = make_labels([0.9] * 100 + [0.0] * 20)
        chosen = sample_balanced(labels, 64, seed=1)
        assert len(chosen) == 64 and np.sum(chosen >= 100) == 20

    def test_small_pool(self):
        chosen = sample_balanced(make_labels([0.9, 0.1, 0.3]), 128, seed=2)
        assert list(chosen) == [0, 1, 2]

    def test_deterministic(self):
        labels = make_labels(np.random.default_rng(4).random(500))
        np.testing.assert_array_equal(sample_balanced(labels, seed=5), sample_balanced(labels, seed=5))
