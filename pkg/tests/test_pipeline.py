import json
import math
import statistics
import time

import numpy as np
import pytest

from src.ifgkit.modules.assign import AssignmentConfig, anchor_targets
from src.ifgkit.modules.eval import read_labels
from src.ifgkit.modules.geom import Box3D, bev_iou, iou3d
from src.ifgkit.modules.losses import (
    AnchorBatch, ConfidenceBatch, ContrastiveBatch, LossReport, RegressionBatch, TemplateLossBatch,
    probability_grad_to_logit, rcnn_loss, rpn_loss,
)
from src.ifgkit.modules.netcore import ParamStore, check_store_gradients, load_checkpoint
from src.ifgkit.modules.pipeline import (
    ConfigError, Detection, Detector, IfgDetector, PipelineConfig, RefineConfig, RefinementHead, RegionProposalNetwork,
    RpnConfig, SceneGenConfig, SceneGenerationError, Trainer, TrainingDivergedError, config_from_dict, detect,
    generate_scene, load_config, pool_points, read_scene_cloud, read_scenes, sample_object_points, write_scene,
)
from src.ifgkit.modules.pipeline.rpn import BevGrid, cell_features, context_features, make_anchors, window_features
from src.ifgkit.modules.pointops import PointCloud, points_in_box
from src.ifgkit.modules.templates import generate_template

SMALL_WORLD = {'x_range': [0.0, 12.0], 'y_range': [-6.0, 6.0], 'max_objects': 3, 'template_k': 256,
               'max_poles': 1}


def small_config(**sections):
    overrides = {'scene': dict(SMALL_WORLD), 'train': {'progress': False, 'epochs': 1}}
    for name, values in sections.items():
        overrides.setdefault(name, {}).update(values)
    return PipelineConfig().replace(**overrides)


def small_scenes(cfg, count, seed=0):
    return [generate_scene(cfg.scene, seed + i) for i in range(count)]


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert cfg.scene.x_range == (0.0, 40.0)
        assert cfg.rpn.cell_size == 0.4
        assert cfg.infer.proposal_nms.iou_threshold == 0.7
        assert cfg.infer.proposal_nms.keep == 100
        assert cfg.assign.train_keep == 128
        assert cfg.refine.proposal_mode == 'mixed'
        assert cfg.rpn.input_dim == 2 * 3 * 3 * 4
        assert RpnConfig(context_block=1).input_dim == 3 * 3 * 4

    def test_waymo_preset(self):
        nms = PipelineConfig().replace(infer={'preset': 'waymo'}).infer.proposal_nms
        assert (nms.iou_threshold, nms.keep) == (0.8, 500)

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match='network'):
            config_from_dict({'network': {}})

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match='cell'):
            config_from_dict({'rpn': {'cell': 0.2}})

    @pytest.mark.parametrize('section, values', [
        ('scene', {'x_range': [5.0, 1.0]}),
        ('refine', {'proposal_mode': 'random'}),
        ('train', {'contrastive_reduction': 'max'}),
        ('scene', {'template_k': 64}),
        ('assign', {'fg_threshold': 0.2}),
        ('rpn', {'context_block': 2}),
        ('rpn', {'prior_probability': 1.0}),
    ])
    def test_invalid_values(self, section, values):
        with pytest.raises(ConfigError):
            config_from_dict({section: values})

    def test_load_from_file(self, tmp_path):
        path = tmp_path / 'config.json'
        path.write_text(json.dumps({'scene': {'y_range': [-5, 5]}, 'eval': {'buckets': [[0, 10], [10, None]]},
                                    'assign': {'anchor_pos': {'1': 0.65, '2': 0.5, '3': 0.5}}}))
        cfg = load_config(str(path))
        assert cfg.scene.y_range == (-5, 5)
        assert cfg.eval.buckets == ((0.0, 10.0), (10.0, math.inf))
        assert cfg.assign.anchor_pos[1] == 0.65

    def test_bad_json(self, tmp_path):
        path = tmp_path / 'config.json'
        path.write_text('{scene')
        with pytest.raises(ConfigError):
            load_config(str(path))


class TestScene:
    CFG = small_config().scene

    def test_deterministic(self):
        a, b = generate_scene(self.CFG, 7), generate_scene(self.CFG, 7)
        np.testing.assert_array_equal(a.cloud.points, b.cloud.points)
        assert a.gt_boxes == b.gt_boxes
        assert a.gt_classes == b.gt_classes

    def test_clutter_only(self):
        cfg = SceneGenConfig(min_objects=0, max_objects=0)
        scene = generate_scene(cfg, 0)
        assert scene.gt_boxes == ()
        assert len(scene.cloud) > 0

    @pytest.mark.parametrize('seed', range(6))
    def test_objects_apart_and_visible(self, seed):
        scene = generate_scene(self.CFG, seed)
        for i, a in enumerate(scene.gt_boxes):
            assert points_in_box(scene.cloud, a).size >= 1
            assert a.z - a.h / 2 == pytest.approx(self.CFG.ground_z)
            for b in scene.gt_boxes[i + 1:]:
                assert bev_iou(a, b) == 0.0

    def test_infeasible(self):
        cfg = SceneGenConfig(x_range=(0.0, 8.0), y_range=(-4.0, 4.0), min_objects=20, max_objects=20,
                             class_weights=(1.0, 0.0, 0.0), max_placement_attempts=20)
        with pytest.raises(SceneGenerationError, match='infeasible'):
            generate_scene(cfg, 0)

    def test_density_falls_with_squared_distance(self):
        cfg = SceneGenConfig(occlusion_probability=0.0, noise_sigma=0.0)
        template = generate_template(1, k=512, seed=0)
        near, far = [], []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            near.append(len(sample_object_points(template, Box3D(15.0, 0.0, -0.72, 3.9, 1.6, 1.56), cfg, rng)))
            far.append(len(sample_object_points(template, Box3D(30.0, 0.0, -0.72, 3.9, 1.6, 1.56), cfg, rng)))
        assert np.mean(far) / np.mean(near) == pytest.approx(0.25, rel=0.2)

    def test_far_side_is_hidden(self):
        cfg = SceneGenConfig(occlusion_probability=0.0, noise_sigma=0.0, reference_distance=100.0)
        points = sample_object_points(generate_template(1, k=512), Box3D(10.0, 0.0, -0.72, 3.9, 1.6, 1.56), cfg,
                                      np.random.default_rng(0))
        assert np.all(points[:, 0] <= 10.0)

    def test_dump_roundtrip(self, tmp_path):
        scene = generate_scene(self.CFG, 3)
        cloud_path, label_path = write_scene(scene, str(tmp_path), 3)
        assert cloud_path.endswith('000003.bin')
        np.testing.assert_allclose(read_scene_cloud(cloud_path).points, scene.cloud.points, atol=1e-5)
        labels = read_labels(label_path)
        assert [label.class_id for label in labels] == list(scene.gt_classes)
        for label, box in zip(labels, scene.gt_boxes):
            np.testing.assert_allclose(label.box.as_array(), box.as_array(), atol=2e-6)

    def test_read_scenes_in_name_order(self, tmp_path):
        scenes = [generate_scene(self.CFG, seed) for seed in (4, 5)]
        for index, scene in enumerate(scenes):
            write_scene(scene, str(tmp_path), index)
        (tmp_path / '000001.txt').unlink()
        loaded = read_scenes(str(tmp_path))
        assert [scene.seed for scene in loaded] == [0, 1]
        assert loaded[0].gt_classes == scenes[0].gt_classes
        assert loaded[1].gt_boxes == ()
        assert len(loaded[1].cloud) == len(scenes[1].cloud)

    def test_read_scenes_missing_directory(self, tmp_path):
        with pytest.raises(SceneGenerationError):
            read_scenes(str(tmp_path / 'nothing'))


class TestRpn:
    def test_cell_features(self):
        grid = BevGrid((0.0, 1.2), (0.0, 1.2), 0.4)
        cloud = PointCloud.from_array([[0.1, 0.1, 1.0], [0.2, 0.3, 3.0], [1.0, 1.0, -1.0], [5.0, 5.0, 0.0]])
        cells = cell_features(cloud, grid)
        np.testing.assert_allclose(cells[0, 0], [math.log1p(2), 2.0, 3.0, 1.0])
        np.testing.assert_allclose(cells[2, 2], [math.log1p(1), -1.0, -1.0, 0.0])
        assert not np.any(cells[1, 1])

    def test_window_features(self):
        cells = np.random.default_rng(0).normal(size=(3, 3, 4))
        rows = window_features(cells, 3)
        assert rows.shape == (9, 36)
        assert not np.any(rows[0, :4])
        np.testing.assert_array_equal(rows[0, 16:20], cells[0, 0])
        np.testing.assert_array_equal(rows[4, :4], cells[0, 0])
        np.testing.assert_array_equal(rows[4, 32:36], cells[2, 2])

    def test_heights_are_measured_from_the_ground(self):
        grid = BevGrid((0.0, 1.2), (0.0, 1.2), 0.4)
        cloud = PointCloud.from_array([[0.1, 0.1, -1.0], [0.2, 0.3, 0.0]])
        np.testing.assert_allclose(cell_features(cloud, grid, ground_z=-1.5)[0, 0],
                                   [math.log1p(2), 1.0, 1.5, 0.25])

    def test_context_features(self):
        grid = BevGrid((0.0, 1.6), (0.0, 1.6), 0.4)
        cloud = PointCloud.from_array([[0.1, 0.1, 1.0], [0.5, 0.5, 3.0]])
        context = context_features(cloud, grid, 3)
        np.testing.assert_allclose(context[1, 1], [math.log1p(2), 2.0, 3.0, 1.0])
        np.testing.assert_allclose(context[0, 0], context[1, 1])
        np.testing.assert_allclose(context[2, 2], [math.log1p(1), 3.0, 3.0, 0.0])
        assert not np.any(context[3, 3])
        np.testing.assert_array_equal(context_features(cloud, grid, 1), cell_features(cloud, grid))

    def test_dilated_window_features(self):
        cells = np.arange(25, dtype=np.float64).reshape(5, 5, 1)
        rows = window_features(cells, 3, dilation=2)
        assert rows.shape == (25, 9)
        np.testing.assert_array_equal(rows[12], [0, 2, 4, 10, 12, 14, 20, 22, 24])
        np.testing.assert_array_equal(rows[0], [0, 0, 0, 0, 0, 2, 0, 10, 12])

    def test_objectness_starts_at_the_prior(self):
        cfg = small_config()
        rpn = RegionProposalNetwork(ParamStore(0), cfg.rpn, cfg.scene)
        out = rpn.forward(PointCloud(np.zeros((0, 3))))
        np.testing.assert_allclose(out.scores, cfg.rpn.prior_probability)
        assert not np.any(out.deltas)

    def test_prior_does_not_overwrite_existing_parameters(self):
        cfg = small_config()
        store = ParamStore(0)
        RegionProposalNetwork(store, cfg.rpn, cfg.scene)
        store['rpn.1.bias'][...] = 0.5
        RegionProposalNetwork(store, cfg.rpn, cfg.scene)
        assert np.all(store['rpn.1.bias'] == 0.5)

    def test_anchors(self):
        grid = BevGrid((0.0, 2.0), (0.0, 1.2), 0.4)
        anchors, classes = make_anchors(grid, -1.5)
        assert anchors.shape == (5 * 3 * 6, 7)
        np.testing.assert_allclose(anchors[:, 2] - anchors[:, 5] / 2, -1.5)
        assert list(classes[:6]) == [1, 1, 2, 2, 3, 3]
        np.testing.assert_allclose(anchors[:2, 6], [0.0, math.pi / 2])

    def test_empty_windows_share_one_output(self):
        cfg = small_config()
        rpn = RegionProposalNetwork(ParamStore(0), cfg.rpn, cfg.scene)
        out = rpn.forward(PointCloud(np.zeros((0, 3))))
        per_cell = out.logits.reshape(rpn.grid.num_cells, -1)
        np.testing.assert_array_equal(per_cell, np.broadcast_to(per_cell[0], per_cell.shape))

    def test_training_proposals_are_capped(self):
        cfg = small_config()
        rpn = RegionProposalNetwork(ParamStore(0), cfg.rpn, cfg.scene)
        proposals = rpn.proposals(rpn.forward(generate_scene(cfg.scene, 0).cloud), 0.8, 128)
        assert 0 < len(proposals) <= 128
        assert np.all(np.isin(proposals.classes, [1, 2, 3]))

    def test_loss_gradient(self):
        cfg = small_config()
        store = ParamStore(1)
        rpn = RegionProposalNetwork(store, RpnConfig(hidden=8), cfg.scene)
        scene = generate_scene(cfg.scene, 1)
        targets = anchor_targets(rpn.anchors, rpn.anchor_classes, scene.gt_array, scene.gt_class_array,
                                 AssignmentConfig())

        def batch(out):
            return AnchorBatch(out.scores, targets.labels, rpn.anchor_classes, out.deltas, targets.targets)

        def loss():
            return rpn_loss(batch(rpn.forward(scene.cloud))).total

        def backward():
            out = rpn.forward(scene.cloud)
            result = rpn_loss(batch(out))
            rpn.backward(probability_grad_to_logit(result.grad_scores, out.scores), result.grad_deltas, out)

        report = check_store_gradients(loss, backward, store, step=1e-6, max_entries=12, skip_kinks=True)
        assert report.passed, report.summary()


def refine_scene():
    rng = np.random.default_rng(0)
    boxes = np.array([[4.0, 0.0, -0.7, 3.9, 1.6, 1.5, 0.2], [8.0, 3.0, -0.6, 0.8, 0.6, 1.7, 1.0],
                      [6.0, -3.0, -0.6, 1.8, 0.6, 1.7, -0.5], [9.0, -1.0, -0.7, 3.9, 1.6, 1.5, 0.0]])
    points = np.vstack([box[:3] + rng.uniform(-0.4, 0.4, size=(40, 3)) * [box[3], box[4], box[5]]
                        for box in boxes])
    return PointCloud(points), boxes


class TestRefine:
    def test_output_dims(self):
        cloud, boxes = refine_scene()
        head = RefinementHead(ParamStore(0), RefineConfig(), 16, use_tafe=True, use_pscl=True)
        out = head.forward(cloud, boxes)
        assert out.scores.shape == (4,)
        assert out.deltas.shape == (4, 7)
        assert out.features.shape == (4, 16)
        assert out.projections.shape == (4, 128)
        np.testing.assert_allclose(np.linalg.norm(out.projections, axis=1), 1.0, atol=1e-9)
        assert np.all((out.scores >= 0) & (out.scores <= 1))

    def test_empty_proposal_is_flagged(self):
        cloud, boxes = refine_scene()
        far = np.vstack([boxes, [[30.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]]])
        head = RefinementHead(ParamStore(0), RefineConfig(), 16, use_pscl=True)
        out = head.forward(cloud, far)
        assert list(out.empty) == [False] * 4 + [True]
        assert not out.projection_valid[4]
        assert not np.any(out.projections[4])
        baseline = head.heads['conf'](np.zeros((1, RefineConfig().feature_dim)))[0, 0]
        assert out.logits[4] == pytest.approx(baseline, abs=1e-12)

    def test_disabled_heads_have_no_parameters(self):
        store = ParamStore(0)
        head = RefinementHead(store, RefineConfig(), 16)
        assert not store.names('refine.feat') and not store.names('refine.proj')
        out = head.forward(*refine_scene())
        assert out.features is None and out.projections is None

    def test_pooling(self):
        cloud = PointCloud(np.random.default_rng(0).uniform(-0.5, 0.5, size=(100, 3)))
        pooled = pool_points(cloud, np.array([[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0], [9.0, 9.0, 0.0, 1.0, 1.0, 1.0, 0.0]]),
                             1.2, 64)
        assert list(pooled.counts) == [64, 0]
        assert not np.any(pooled.points[1])
        assert np.all(np.abs(pooled.points[0]) <= 0.6)

    def test_rcnn_gradient(self):
        cloud, boxes = refine_scene()
        store = ParamStore(2)
        cfg = RefineConfig(encoder_dims=(3, 8, 16), head_hidden=8, projection_hidden=8, projection_dim=8)
        head = RefinementHead(store, cfg, 4, use_tafe=True, use_pscl=True)
        rng = np.random.default_rng(3)
        proposals = boxes + rng.normal(0, 0.1, size=boxes.shape) * [1, 1, 1, 0, 0, 0, 1]
        ious = np.array([0.9, 0.6, 0.3, 0.8])
        reg_targets, feature_targets = rng.normal(size=(4, 7)), rng.normal(size=(4, 4))

        def evaluate(out):
            return rcnn_loss(ConfidenceBatch(out.scores, ious),
                             RegressionBatch(out.deltas, reg_targets, ious >= 0.55),
                             TemplateLossBatch(out.features, feature_targets, ious),
                             ContrastiveBatch(out.projections, [1, 2, 0, 1], 0.5))

        def loss():
            return evaluate(head.forward(cloud, proposals)).total

        def backward():
            out = head.forward(cloud, proposals)
            result = evaluate(out)
            head.backward(out, probability_grad_to_logit(result.grad_scores, out.scores), result.grad_deltas,
                          result.grad_features, result.grad_projections)

        report = check_store_gradients(loss, backward, store, step=1e-6, max_entries=16, skip_kinks=True)
        assert report.passed, report.summary()


class TestTrainer:
    def test_gated_heads_leave_shared_parameters_alone(self):
        cfg = small_config()
        base, full = Detector(cfg), Detector(cfg, use_tafe=True, use_pscl=True)
        assert set(full.store) - set(base.store) == set(full.store.names('refine.feat') + full.store.names('refine.proj'))
        for name in base.store:
            np.testing.assert_array_equal(base.store[name], full.store[name])

    def test_baseline_loss_is_three_terms(self):
        cfg = small_config()
        scene = generate_scene(cfg.scene, 0)
        report = Trainer(cfg).scene_step(scene, 0, 0)
        assert report.l_temp == 0.0 and report.l_contra == 0.0
        assert report.total == report.l_rpn + (report.l_conf + report.l_reg)

    def test_modules_do_not_change_shared_losses(self):
        cfg = small_config()
        scene = generate_scene(cfg.scene, 0)
        base = Trainer(cfg).scene_step(scene, 0, 0)
        full = Trainer(cfg, use_tafe=True, use_pscl=True).scene_step(scene, 0, 0)
        assert (base.l_rpn, base.l_conf, base.l_reg) == (full.l_rpn, full.l_conf, full.l_reg)

    @pytest.mark.parametrize('mode', ['jitter', 'mixed'])
    def test_module_terms_with_jittered_proposals(self, mode):
        cfg = small_config(scene={'min_objects': 2}, refine={'proposal_mode': mode})
        trainer = Trainer(cfg, use_tafe=True, use_pscl=True)
        report = trainer.scene_step(generate_scene(cfg.scene, 4), 0, 0)
        assert report.is_finite()
        assert report.l_temp > 0.0
        assert report.total == pytest.approx(sum(report.values()[:-1]))

    def test_one_epoch_writes_artifacts(self, tmp_path):
        cfg = small_config()
        result = Trainer(cfg, use_tafe=True).train(small_scenes(cfg, 3), str(tmp_path))
        tensors = load_checkpoint(result.checkpoint_path)
        assert 'rpn.0.weight' in tensors and 'refine.feat.0.weight' in tensors
        with open(result.loss_log_path, encoding='utf-8') as f:
            lines = f.read().splitlines()
        assert lines[0] == 'epoch,l_rpn,l_conf,l_reg,l_temp,l_contra,total'
        assert len(lines) == 2 and lines[1].startswith('0,')

    def test_loss_log_is_deterministic(self, tmp_path):
        cfg = small_config(train={'epochs': 2})
        scenes = small_scenes(cfg, 3)
        logs = []
        for name in ('a', 'b'):
            result = Trainer(cfg, use_pscl=True).train(scenes, str(tmp_path / name))
            with open(result.loss_log_path, encoding='utf-8') as f:
                logs.append(f.read())
        assert logs[0] == logs[1]

    def test_divergence_keeps_last_good_checkpoint(self, tmp_path, monkeypatch):
        cfg = small_config()
        trainer = Trainer(cfg)
        initial = trainer.detector.store.state()
        monkeypatch.setattr(trainer, 'scene_step', lambda *args: LossReport(total=float('nan')))
        with pytest.raises(TrainingDivergedError) as info:
            trainer.train(small_scenes(cfg, 2), str(tmp_path))
        saved = load_checkpoint(info.value.checkpoint_path)
        for name, value in initial.items():
            np.testing.assert_array_equal(saved[name], value)

    @pytest.mark.slow
    def test_loss_decreases(self, tmp_path):
        """
        20 epochs over 50 fixed scenes at the default training settings. Scenes
        use the small world so the run stays within a few minutes.
        """
        cfg = small_config(train={'epochs': 20})
        result = Trainer(cfg, use_tafe=True, use_pscl=True).train(small_scenes(cfg, 50), str(tmp_path))
        assert result.history[-1].total < 0.8 * result.history[0].total

    @pytest.mark.slow
    def test_detections_land_on_training_objects(self, tmp_path):
        cfg = small_config(scene={'min_objects': 2}, train={'epochs': 40, 'batch_size': 1, 'learning_rate': 5e-3})
        scenes = small_scenes(cfg, 6)
        result = Trainer(cfg).train(scenes, str(tmp_path))
        detector = Detector.from_checkpoint(cfg, result.checkpoint_path)
        recalled, total = 0, 0
        for scene in scenes:
            detections = detect(detector, scene.cloud, cfg.infer)
            for box, class_id in zip(scene.gt_boxes, scene.gt_classes):
                total += 1
                recalled += any(d.class_id == class_id and iou3d(d.box, box) >= 0.5 for d in detections)
        assert recalled >= total / 3, f'{recalled} of {total} objects found at 3D IoU 0.5'


class TestInference:
    def test_empty_scene(self):
        cfg = small_config()
        assert detect(Detector(cfg), PointCloud(np.zeros((0, 3))), cfg.infer) == []

    def test_final_nms_per_class(self):
        cfg = small_config(scene={'ground_density': 4.0}, infer={'score_threshold': 0.0})
        detections = detect(Detector(cfg), generate_scene(cfg.scene, 2).cloud, cfg.infer)
        assert detections
        assert [d.score for d in detections] == sorted((d.score for d in detections), reverse=True)
        for i, a in enumerate(detections):
            for b in detections[i + 1:]:
                if a.class_id == b.class_id:
                    assert bev_iou(a.box, b.box) <= 0.1 + 1e-12

    def test_training_heads_are_not_evaluated(self, monkeypatch):
        cfg = small_config(scene={'ground_density': 4.0}, infer={'score_threshold': 0.0})
        detector = Detector(cfg, use_tafe=True, use_pscl=True)
        cloud = generate_scene(cfg.scene, 2).cloud
        before = detect(detector, cloud, cfg.infer)
        assert before
        for name in detector.store.names('refine.feat') + detector.store.names('refine.proj'):
            detector.store[name][...] = 0.0
        monkeypatch.setattr(detector.refiner.heads['feat'], 'forward', None)
        assert detect(detector, cloud, cfg.infer) == before

    def test_checkpoint_reload(self, tmp_path):
        cfg = small_config(infer={'score_threshold': 0.0})
        trained = Detector(cfg, use_tafe=True)
        path = trained.save(str(tmp_path / 'model.ifgk'))
        cloud = generate_scene(cfg.scene, 5).cloud
        assert detect(Detector.from_checkpoint(cfg, path), cloud, cfg.infer) == detect(trained, cloud, cfg.infer)

    def test_score_range(self):
        with pytest.raises(ValueError):
            Detection(Box3D(0, 0, 0, 1, 1, 1), 1, 1.5)

    def test_proposals_without_points_are_dropped(self):
        cfg = small_config(infer={'score_threshold': 0.0})
        far_away = PointCloud.from_array([[100.0, 100.0, 0.0], [101.0, 100.0, 0.5]])
        assert detect(Detector(cfg), far_away, cfg.infer) == []

    @pytest.mark.slow
    def test_inference_time_does_not_depend_on_training_heads(self, tmp_path):
        cfg = small_config()
        scenes = small_scenes(cfg, 2)
        detectors = []
        for use_tafe, use_pscl in ((False, False), (True, True)):
            result = Trainer(cfg, use_tafe, use_pscl).train(scenes, str(tmp_path / f'{use_tafe}_{use_pscl}'))
            detectors.append(Detector.from_checkpoint(cfg, result.checkpoint_path))
        cloud = generate_scene(cfg.scene, 7).cloud
        for detector in detectors:
            detect(detector, cloud, cfg.infer)

        timings = ([], [])
        for _ in range(15):
            for detector, runs in zip(detectors, timings):
                start = time.perf_counter()
                detect(detector, cloud, cfg.infer)
                runs.append(time.perf_counter() - start)
        baseline, full = (statistics.median(runs) for runs in timings)
        assert abs(full / baseline - 1.0) < 0.05


class TestAblation:
    @pytest.mark.slow
    def test_modules_improve_mean_ap(self, tmp_path):
        cfg = small_config(scene={'min_objects': 2}, train={'epochs': 10, 'batch_size': 1, 'learning_rate': 5e-3},
                           ablation={'train_scenes': 20, 'eval_scenes': 40})
        rows = {row.method: row.mean_ap for row in IfgDetector(cfg, out_dir=str(tmp_path)).ablate()}
        assert rows['D'] >= max(rows['B'], rows['C']) >= rows['A']
        assert rows['D'] - rows['A'] >= 0.005
