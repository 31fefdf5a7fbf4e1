import math

import numpy as np
import pytest
from shapely.geometry import Polygon

from src.ifgkit.modules.geom import (
    Box3D, RegressionTarget, bev_corners, bev_iou, box_corners, decode_box, decode_boxes,
    encode_box, encode_boxes, iou3d, iou_matrix, nms,
)
from src.ifgkit.modules.geom.oracles import brute_force_nms, grid_bev_iou, grid_iou3d


def random_pair(rng):
    a = Box3D(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5),
              rng.uniform(1.0, 4.0), rng.uniform(0.8, 2.0), rng.uniform(0.8, 2.0), rng.uniform(-math.pi, math.pi))
    b = Box3D(a.x + rng.uniform(-1.5, 1.5), a.y + rng.uniform(-1.5, 1.5), a.z + rng.uniform(-0.8, 0.8),
              rng.uniform(1.0, 4.0), rng.uniform(0.8, 2.0), rng.uniform(0.8, 2.0), rng.uniform(-math.pi, math.pi))
    return a, b


def shapely_bev_iou(a, b):
    pa, pb = Polygon(bev_corners(a)), Polygon(bev_corners(b))
    return pa.intersection(pb).area / pa.union(pb).area


def random_boxes(rng, n, spread=10.0):
    return np.column_stack([
        rng.uniform(-spread, spread, n), rng.uniform(-spread, spread, n), rng.uniform(-1, 1, n),
        rng.uniform(1.0, 4.0, n), rng.uniform(0.5, 2.0, n), rng.uniform(1.0, 2.0, n),
        rng.uniform(-math.pi, math.pi, n),
    ])


class TestBox3D:
    def test_theta_is_wrapped(self):
        assert Box3D(0, 0, 0, 1, 1, 1, math.pi).theta == pytest.approx(-math.pi)
        assert Box3D(0, 0, 0, 1, 1, 1, 3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)

    @pytest.mark.parametrize('dims', [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
    def test_rejects_non_positive_dims(self, dims):
        with pytest.raises(ValueError):
            Box3D(0, 0, 0, *dims)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Box3D(float('nan'), 0, 0, 1, 1, 1)


class TestCorners:
    def test_unit_cube(self):
        corners = box_corners(Box3D(0, 0, 0, 1, 1, 1))
        expected = {(sx * 0.5, sy * 0.5, sz * 0.5) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)}
        assert {tuple(np.round(c, 12)) for c in corners} == expected
        assert np.all(corners[:4, 2] == -0.5) and np.all(corners[4:, 2] == 0.5)

    def test_unit_cube_quarter_turn_is_same_set(self):
        plain = {tuple(np.round(c, 9)) for c in box_corners(Box3D(0, 0, 0, 1, 1, 1))}
        turned = {tuple(np.round(c, 9)) for c in box_corners(Box3D(0, 0, 0, 1, 1, 1, math.pi / 2))}
        assert turned == plain

    def test_rotation_matrix_oracle(self):
        box = Box3D(0, 0, 0, 2, 1, 1, math.pi / 4)
        c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        axis_aligned = box_corners(Box3D(0, 0, 0, 2, 1, 1))
        np.testing.assert_allclose(box_corners(box), axis_aligned @ rot.T, atol=1e-12)


class TestIou:
    def test_identical(self):
        box = Box3D(1, 2, 0.3, 3.9, 1.6, 1.5, 0.7)
        assert bev_iou(box, box) == pytest.approx(1.0)
        assert iou3d(box, box) == pytest.approx(1.0)

    def test_shifted_squares(self):
        assert bev_iou(Box3D(0, 0, 0, 2, 2, 1), Box3D(1, 0, 0, 2, 2, 1)) == pytest.approx(2 / 6)

    def test_disjoint(self):
        assert bev_iou(Box3D(0, 0, 0, 1, 1, 1), Box3D(5, 0, 0, 1, 1, 1)) == 0.0

    def test_stacked_heights_do_not_overlap(self):
        assert iou3d(Box3D(0, 0, 0, 2, 2, 1), Box3D(0, 0, 1, 2, 2, 1)) == 0.0

    def test_rotated_square_against_grid(self):
        a, b = Box3D(0, 0, 0, 1, 1, 1), Box3D(0, 0, 0, 1, 1, 1, math.pi / 4)
        assert abs(bev_iou(a, b) - grid_bev_iou(a, b)) <= 0.01
        assert bev_iou(a, b) == pytest.approx(shapely_bev_iou(a, b), abs=1e-9)

    def test_exact_against_shapely(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            a, b = random_pair(rng)
            assert bev_iou(a, b) == pytest.approx(shapely_bev_iou(a, b), abs=1e-9)

    def test_exact_against_grid_oracles(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a, b = random_pair(rng)
            assert abs(bev_iou(a, b) - grid_bev_iou(a, b)) <= 0.01
            assert abs(iou3d(a, b) - grid_iou3d(a, b)) <= 0.01

    def test_symmetry_and_rigid_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            a, b = random_pair(rng)
            assert bev_iou(a, b) == pytest.approx(bev_iou(b, a), abs=1e-12)
            assert iou3d(a, b) == pytest.approx(iou3d(b, a), abs=1e-12)

            phi, shift = rng.uniform(-math.pi, math.pi), rng.uniform(-5, 5, 3)
            c, s = math.cos(phi), math.sin(phi)

            def moved(box):
                return Box3D(c * box.x - s * box.y + shift[0], s * box.x + c * box.y + shift[1],
                             box.z + shift[2], box.l, box.w, box.h, box.theta + phi)

            assert iou3d(moved(a), moved(b)) == pytest.approx(iou3d(a, b), abs=1e-9)

    def test_matrix_matches_pairwise(self):
        rng = np.random.default_rng(3)
        a, b = random_boxes(rng, 12, 3.0), random_boxes(rng, 9, 3.0)
        table = iou_matrix(a, b, '3d')
        assert table.shape == (12, 9)
        for i in range(12):
            for j in range(9):
                assert table[i, j] == pytest.approx(iou3d(Box3D.from_array(a[i]), Box3D.from_array(b[j])), abs=1e-12)

    def test_matrix_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            iou_matrix(np.zeros((1, 7)) + 1, np.zeros((1, 7)) + 1, 'voxel')


class TestEncoding:
    ANCHOR = Box3D(0, 0, 0, 4, 2, 1.5, 0)

    def test_identity_is_zero(self):
        np.testing.assert_array_equal(encode_box(self.ANCHOR, self.ANCHOR).as_array(), np.zeros(7))

    def test_shift_x(self):
        t = encode_box(Box3D(1, 0, 0, 4, 2, 1.5, 0), self.ANCHOR)
        assert t.tx == pytest.approx(1 / math.sqrt(20))
        np.testing.assert_allclose(t.as_array()[1:], 0.0, atol=1e-15)

    def test_double_length(self):
        assert encode_box(Box3D(0, 0, 0, 8, 2, 1.5, 0), self.ANCHOR).tl == pytest.approx(math.log(2))

    def test_decode(self):
        assert decode_box(RegressionTarget(0, 0, 0, 0, 0, 0, 0), self.ANCHOR) == self.ANCHOR
        assert decode_box(RegressionTarget(1 / math.sqrt(20), 0, 0, 0, 0, 0, 0), self.ANCHOR).x == pytest.approx(1.0)

    def test_roundtrip(self):
        rng = np.random.default_rng(4)
        gt, anchors = random_boxes(rng, 1000), random_boxes(rng, 1000)
        back = decode_boxes(encode_boxes(gt, anchors), anchors)
        np.testing.assert_allclose(back[:, :6], gt[:, :6], atol=1e-9)
        angle_error = np.abs((back[:, 6] - gt[:, 6] + math.pi) % (2 * math.pi) - math.pi)
        assert angle_error.max() < 1e-9

    def test_angle_residual_is_wrapped(self):
        t = encode_box(Box3D(0, 0, 0, 4, 2, 1.5, 3.0), Box3D(0, 0, 0, 4, 2, 1.5, -3.0))
        assert t.ttheta == pytest.approx(6.0 - 2 * math.pi)


class TestNms:
    def test_empty(self):
        assert nms(np.zeros((0, 7)), np.zeros(0), 0.5, 10).size == 0

    def test_single(self):
        assert list(nms(np.array([[0, 0, 0, 1, 1, 1, 0]]), np.array([0.3]), 0.5, 10)) == [0]

    def test_no_overlap_keeps_all_up_to_max(self):
        boxes = np.array([[4.0 * i, 0, 0, 1, 1, 1, 0] for i in range(6)])
        scores = np.array([0.1, 0.9, 0.5, 0.7, 0.3, 0.2])
        assert list(nms(boxes, scores, 0.1, 10)) == [1, 3, 2, 4, 5, 0]
        assert list(nms(boxes, scores, 0.1, 2)) == [1, 3]

    def test_suppresses_overlapping(self):
        boxes = np.array([[0, 0, 0, 2, 2, 1, 0], [0.1, 0, 0, 2, 2, 1, 0], [5, 5, 0, 2, 2, 1, 0]])
        assert list(nms(boxes, np.array([0.9, 0.8, 0.1]), 0.5, 10)) == [0, 2]

    @pytest.mark.parametrize('seed', range(5))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        boxes, scores = random_boxes(rng, 500, 15.0), rng.random(500)
        threshold = rng.uniform(0.05, 0.8)
        fast = nms(boxes, scores, threshold, 200)
        np.testing.assert_array_equal(fast, brute_force_nms(boxes, scores, threshold, 200))
        assert np.all(np.diff(scores[fast]) <= 0)

    def test_brute_force_does_not_use_the_prefilter(self, monkeypatch):
        monkeypatch.setattr('src.ifgkit.modules.geom.iou.overlap_candidates', lambda *args: np.zeros(0, dtype=np.int64))
        boxes = np.array([[0, 0, 0, 2, 2, 1, 0], [0.1, 0, 0, 2, 2, 1, 0], [5, 5, 0, 2, 2, 1, 0]])
        assert list(brute_force_nms(boxes, np.array([0.9, 0.8, 0.1]), 0.5, 10)) == [0, 2]

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            nms(np.zeros((1, 7)) + 1, np.ones(1), 1.5, 1)
