import numpy as np
import pytest

from src.ifgkit.modules.netcore import (
    Adam, CheckpointError, FeatureExtractorConfig, IntrinsicFeatureExtractor, Mlp, ParamStore, ShapeError,
    check_store_gradients, dense_backward, dense_forward, grad_check, intrinsic_feature, l2_normalize,
    l2_normalize_backward, load_checkpoint, max_pool, max_pool_backward, save_checkpoint, set_abstraction,
)
from src.ifgkit.modules.pointops import PointCloud

SMALL_EXTRACTOR = FeatureExtractorConfig(m=16, group_sizes=(4, 8), local_hidden=8, local_dim=8, fc_hidden=(16, 12),
                                         out_dim=16)


def unit_cloud(n, seed):
    return PointCloud(np.random.default_rng(seed).uniform(-0.5, 0.5, size=(n, 3)))


class TestDense:
    def test_identity(self):
        x = np.random.default_rng(0).normal(size=(3, 4))
        np.testing.assert_array_equal(dense_forward(x, np.eye(4), np.zeros(4)), x)

    def test_zero_weights(self):
        bias = np.arange(5.0)
        np.testing.assert_array_equal(dense_forward(np.ones((2, 3)), np.zeros((3, 5)), bias), np.tile(bias, (2, 1)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dense_forward(np.ones((2, 3)), np.zeros((4, 5)), np.zeros(5))

    def test_gradient(self):
        rng = np.random.default_rng(1)
        x, w, b = rng.normal(size=(5, 8)), rng.normal(size=(8, 8)), rng.normal(size=8)
        upstream = rng.normal(size=(5, 8))

        def loss():
            return float(np.sum(dense_forward(x, w, b) * upstream))

        dx, dw, db = dense_backward(upstream, x, w)
        report = grad_check(loss, {'x': x, 'w': w, 'b': b}, {'x': dx, 'w': dw, 'b': db})
        assert report.max_rel_error < 1e-6


class TestL2Normalize:
    def test_values(self):
        unit, norm = l2_normalize(np.array([3.0, 4.0]))
        np.testing.assert_allclose(unit, [0.6, 0.8])
        assert norm == 5.0
        np.testing.assert_allclose(l2_normalize(unit)[0], unit)

    def test_zero_vector(self):
        with pytest.raises(ValueError):
            l2_normalize(np.zeros(3))

    def test_gradient(self):
        rng = np.random.default_rng(2)
        v, upstream = rng.normal(size=128), rng.normal(size=128)

        def loss():
            return float(np.dot(l2_normalize(v)[0], upstream))

        unit, norm = l2_normalize(v)
        report = grad_check(loss, {'v': v}, {'v': l2_normalize_backward(upstream, unit, norm)})
        assert report.max_rel_error < 1e-6


def test_max_pool_routes_to_first_winner():
    features = np.array([[1.0, 5.0], [3.0, 5.0], [2.0, 0.0]])
    pooled, winners = max_pool(features)
    np.testing.assert_array_equal(pooled, [3.0, 5.0])
    np.testing.assert_array_equal(winners, [1, 0])
    np.testing.assert_array_equal(max_pool_backward(np.array([1.0, 2.0]), winners, 3), [[0, 2], [1, 0], [0, 0]])


class TestParamStore:
    def test_initialization_is_keyed_by_name(self):
        a = ParamStore(seed=3)
        a.add('first', (4, 4))
        w = a.add('second', (6, 2)).copy()
        b = ParamStore(seed=3)
        np.testing.assert_array_equal(b.add('second', (6, 2)), w)

    def test_glorot_bounds_and_zero_bias(self):
        store = ParamStore()
        w = store.add('w', (30, 70))
        assert np.abs(w).max() <= np.sqrt(6 / 100)
        assert not np.any(store.add('b', (70,), init='zeros'))

    def test_shape_conflict(self):
        store = ParamStore()
        store.add('w', (2, 2))
        with pytest.raises(ShapeError):
            store.add('w', (3, 2))

    def test_zero_grad(self):
        store = ParamStore()
        store.add('w', (2, 2))
        store.accumulate('w', np.ones((2, 2)))
        store.zero_grad()
        assert not np.any(store.grad('w'))


class TestMlp:
    def test_gradient(self):
        store = ParamStore(seed=4)
        mlp = Mlp(store, 'mlp', (8, 6, 4))
        rng = np.random.default_rng(5)
        x, upstream = rng.normal(size=(5, 8)), rng.normal(size=(5, 4))

        def loss():
            return float(np.sum(mlp(x) * upstream))

        def backward():
            out, cache = mlp.forward(x)
            mlp.backward(upstream, cache)

        report = check_store_gradients(loss, backward, store, step=1e-6, skip_kinks=True)
        assert report.passed, report.summary()
        assert report.checked > 0.9 * sum(store[n].size for n in store)

    def test_corrupted_backward_is_flagged(self):
        store = ParamStore(seed=6)
        mlp = Mlp(store, 'mlp', (4, 3))
        x = np.random.default_rng(7).normal(size=(2, 4))

        def loss():
            return float(np.sum(mlp(x) ** 2))

        def backward():
            out, cache = mlp.forward(x)
            mlp.backward(2 * out, cache)
            store.grad('mlp.0.weight')[...] *= 1.5

        report = check_store_gradients(loss, backward, store)
        assert report.max_rel_error > 1e-2
        assert not report.passed

    def test_linear_function_is_exact(self):
        a = np.random.default_rng(8).normal(size=6)
        x = np.zeros(6)
        report = grad_check(lambda: float(a @ x), {'x': x}, {'x': a.copy()})
        assert report.max_rel_error < 1e-9


class TestSetAbstraction:
    def _mlp(self):
        return Mlp(ParamStore(seed=9), 'sa', (3, 8, 8), final_activation=True)

    def test_singleton_group(self):
        mlp = self._mlp()
        points = np.array([[0.1, 0.2, 0.3], [1.0, 1.0, 1.0]])
        centers = np.array([[0.0, 0.0, 0.0]])
        features, _ = set_abstraction(points, centers, np.array([[0]]), mlp)
        np.testing.assert_allclose(features[0], mlp(points[0]))

    def test_duplicates_and_permutation(self):
        mlp = self._mlp()
        rng = np.random.default_rng(10)
        points = rng.normal(size=(12, 3))
        centers = points[:2]
        groups = np.array([[0, 3, 5, 7], [1, 2, 4, 6]])
        base, _ = set_abstraction(points, centers, groups, mlp)
        duplicated, _ = set_abstraction(points, centers, np.array([[0, 3, 5, 7, 7], [1, 2, 4, 6, 1]]), mlp)
        permuted, _ = set_abstraction(points, centers, groups[:, ::-1], mlp)
        np.testing.assert_array_equal(base, duplicated)
        np.testing.assert_array_equal(base, permuted)


class TestIntrinsicFeature:
    def test_default_shape_and_determinism(self):
        store = ParamStore(seed=11)
        cloud = unit_cloud(256, 12)
        first = intrinsic_feature(cloud, FeatureExtractorConfig(), store)
        assert first.shape == (16,)
        np.testing.assert_array_equal(first, intrinsic_feature(cloud, FeatureExtractorConfig(), store))

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            intrinsic_feature(unit_cloud(100, 13), FeatureExtractorConfig(), ParamStore())

    def test_translation_invariance(self):
        store = ParamStore(seed=14)
        cloud = unit_cloud(64, 15)
        np.testing.assert_allclose(
            intrinsic_feature(cloud.translate((8.0, -4.0, 2.0)), SMALL_EXTRACTOR, store),
            intrinsic_feature(cloud, SMALL_EXTRACTOR, store), atol=1e-9)

    def test_end_to_end_gradient(self):
        store = ParamStore(seed=16)
        extractor = IntrinsicFeatureExtractor(store, SMALL_EXTRACTOR)
        cloud = unit_cloud(64, 17)
        upstream = np.random.default_rng(18).normal(size=16)

        def loss():
            return float(extractor(cloud) @ upstream)

        def backward():
            feature, cache = extractor.forward(cloud)
            extractor.backward(upstream, cache)

        report = check_store_gradients(loss, backward, store, step=1e-6, max_entries=12, skip_kinks=True)
        assert report.passed, report.summary()
        assert report.checked >= 40


class TestAdam:
    def test_minimizes_quadratic(self):
        store = ParamStore()
        x = store.add('x', (3,), init='zeros')
        target = np.array([0.5, -1.0, 2.0])
        optimizer = Adam(store, lr=0.05)
        for _ in range(500):
            store.zero_grad()
            store.accumulate('x', 2 * (x - target))
            optimizer.step()
        np.testing.assert_allclose(x, target, atol=2e-2)

    def test_one_cycle_shape(self):
        optimizer = Adam(ParamStore(), lr=0.01, schedule='one_cycle', total_steps=100)
        rates = [optimizer.learning_rate(s) for s in range(101)]
        assert rates[0] == pytest.approx(0.001)
        assert max(rates) == pytest.approx(0.01)
        assert rates[-1] == pytest.approx(1e-6)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        store = ParamStore(seed=19)
        Mlp(store, 'head', (5, 4, 2))
        path = save_checkpoint(store.state(), str(tmp_path / 'model.ifgk'))
        loaded = load_checkpoint(path)
        assert list(loaded) == list(store)
        for name in store:
            np.testing.assert_array_equal(loaded[name], store[name])

    def test_layout(self, tmp_path):
        path = save_checkpoint({'ab': np.array([[1.0, 2.0]])}, str(tmp_path / 'tiny.ifgk'))
        with open(path, 'rb') as f:
            data = f.read()
        assert data[:4] == b'IFGK'
        assert int.from_bytes(data[4:8], 'little') == 1
        assert int.from_bytes(data[8:12], 'little') == 1
        assert len(data) == 12 + 4 + 2 + 4 + 8 + 16

    def test_truncated(self, tmp_path):
        path = save_checkpoint({'w': np.ones((3, 3))}, str(tmp_path / 'w.ifgk'))
        with open(path, 'rb') as f:
            data = f.read()
        with open(path, 'wb') as f:
            f.write(data[:-5])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / 'bad.ifgk'
        path.write_bytes(b'NOPE' + bytes(8))
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))

    def test_load_state_rejects_shape_change(self):
        store = ParamStore()
        store.add('w', (2, 2))
        with pytest.raises(CheckpointError):
            store.load_state({'w': np.ones((3, 3))})
