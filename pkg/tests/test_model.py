"""Loss/gradient correctness against independent oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlonsim import ConfigurationError, model

LN2 = math.log(2.0)


def make_shard(features, labels, worker_id=1):
    return model.WorkerShard(
        worker_id=worker_id,
        features=np.asarray(features, dtype=float),
        labels=np.asarray(labels, dtype=np.int64),
    )


def finite_difference_gradient(w, shard, step=1e-6):
    """Central differences of local_loss, the independent gradient oracle."""
    g = np.zeros_like(w)
    for i in range(len(w)):
        wp = w.copy()
        wm = w.copy()
        wp[i] += step
        wm[i] -= step
        g[i] = (model.local_loss(wp, shard) - model.local_loss(wm, shard)) / (2 * step)
    return g


def random_shard(rng, d, n, worker_id=1, scale=1.0):
    features = rng.normal(scale=scale, size=(n, d))
    labels = rng.choice([-1, 1], size=n)
    return make_shard(features, labels, worker_id)


class TestLocalLoss:
    def test_zero_weights_give_ln2(self):
        shard = random_shard(np.random.default_rng(0), d=7, n=23)
        assert model.local_loss(np.zeros(7), shard) == pytest.approx(LN2, abs=1e-12)

    def test_single_sample_closed_form(self):
        # z = w.x * y = ln 3, so loss = log(1 + 1/3)
        shard = make_shard([[1.0, 0.0]], [1])
        w = np.array([math.log(3.0), 0.0])
        assert model.local_loss(w, shard) == pytest.approx(math.log(4.0 / 3.0), rel=1e-12)

    def test_large_margin_is_stable(self):
        shard = make_shard([[1.0, 0.0]], [1])
        w = np.array([50.0, 0.0])
        value = model.local_loss(w, shard)
        assert 0.0 <= value <= 2e-22
        assert math.isfinite(value)
        # the naive form would overflow here; the stable one must not
        w = np.array([-800.0, 0.0])
        value = model.local_loss(w, shard)
        assert math.isfinite(value) and value == pytest.approx(800.0, rel=1e-12)

    def test_dimension_mismatch_rejected(self):
        shard = make_shard([[1.0, 0.0]], [1])
        with pytest.raises(ConfigurationError):
            model.local_loss(np.zeros(3), shard)


class TestLocalGradient:
    def test_zero_weights_single_sample(self):
        x = np.array([0.5, -2.0, 1.0])
        shard = make_shard([x], [1])
        grad = model.local_gradient(np.zeros(3), shard)
        np.testing.assert_allclose(grad.values, -x / 2.0, rtol=1e-12)

    def test_symmetric_labels_cancel(self):
        x = [0.3, 1.2]
        shard = make_shard([x, x], [1, -1])
        grad = model.local_gradient(np.zeros(2), shard)
        np.testing.assert_allclose(grad.values, np.zeros(2), atol=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        shard = random_shard(rng, d=5, n=20)
        w = rng.normal(size=5)
        grad = model.local_gradient(w, shard).values
        fd = finite_difference_gradient(w, shard)
        np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 20), st.integers(1, 50))
    def test_gradient_loss_consistency(self, seed, d, n):
        rng = np.random.default_rng(seed)
        shard = random_shard(rng, d=d, n=n)
        w = rng.normal(size=d)
        grad = model.local_gradient(w, shard).values
        fd = finite_difference_gradient(w, shard)
        np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-8)


class TestGlobalLoss:
    def test_zero_weights_any_shards(self):
        rng = np.random.default_rng(3)
        shards = [random_shard(rng, 4, 10, worker_id=j + 1) for j in range(3)]
        assert model.global_loss(np.zeros(4), shards) == pytest.approx(LN2, abs=1e-12)

    def test_single_shard_equals_local(self):
        rng = np.random.default_rng(4)
        shard = random_shard(rng, 4, 10)
        w = rng.normal(size=4)
        assert model.global_loss(w, [shard]) == model.local_loss(w, shard)

    def test_two_shards_average(self):
        rng = np.random.default_rng(5)
        s1 = random_shard(rng, 4, 10, worker_id=1)
        s2 = random_shard(rng, 4, 15, worker_id=2)
        w = rng.normal(size=4)
        a = model.local_loss(w, s1)
        b = model.local_loss(w, s2)
        assert model.global_loss(w, [s1, s2]) == pytest.approx((a + b) / 2, rel=1e-14)

    def test_empty_shards_rejected(self):
        with pytest.raises(ConfigurationError):
            model.global_loss(np.zeros(2), [])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
    def test_convexity_probe(self, seed, lam):
        rng = np.random.default_rng(seed)
        shards = [random_shard(rng, 6, 12, worker_id=j + 1) for j in range(2)]
        w1 = rng.normal(size=6)
        w2 = rng.normal(size=6)
        mix = model.global_loss(lam * w1 + (1 - lam) * w2, shards)
        bound = lam * model.global_loss(w1, shards) + (1 - lam) * model.global_loss(w2, shards)
        assert mix <= bound + 1e-12


class TestDescent:
    def test_full_batch_descent_with_default_step(self):
        rng = np.random.default_rng(11)
        shards = [random_shard(rng, 8, 30, worker_id=j + 1, scale=2.0) for j in range(3)]
        alpha = model.default_step_size(shards)
        w = np.zeros(8)
        prev = model.global_loss(w, shards)
        for _ in range(60):
            w = w - alpha * model.global_gradient(w, shards)
            cur = model.global_loss(w, shards)
            assert cur <= prev
            prev = cur


class TestPartition:
    def test_paper_counts(self):
        rng = np.random.default_rng(0)
        features = rng.normal(size=(12600, 3))
        labels = rng.choice([-1, 1], size=12600)
        for m, size in [(10, 1260), (5, 2520)]:
            shards = model.partition_dataset(features, labels, m, seed=1)
            assert len(shards) == m
            assert all(s.size == size for s in shards)
            assert [s.worker_id for s in shards] == list(range(1, m + 1))

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(1)
        features = rng.normal(size=(40, 2))
        labels = rng.choice([-1, 1], size=40)
        a = model.partition_dataset(features, labels, 4, seed=9)
        b = model.partition_dataset(features, labels, 4, seed=9)
        c = model.partition_dataset(features, labels, 4, seed=10)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.features, sb.features)
            np.testing.assert_array_equal(sa.labels, sb.labels)
        assert any(
            not np.array_equal(sa.features, sc.features) for sa, sc in zip(a, c)
        )

    def test_too_many_workers_rejected(self):
        rng = np.random.default_rng(2)
        features = rng.normal(size=(3, 2))
        labels = np.array([1, -1, 1])
        with pytest.raises(ConfigurationError):
            model.partition_dataset(features, labels, 4, seed=0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 7), st.integers(7, 60))
    def test_union_is_truncated_input_multiset(self, seed, m, n):
        rng = np.random.default_rng(seed)
        features = rng.normal(size=(n, 2))
        labels = rng.choice([-1, 1], size=n)
        shards = model.partition_dataset(features, labels, m, seed=seed)
        kept = m * (n // m)
        rows = np.concatenate([s.features for s in shards])
        assert len(rows) == kept
        # every shard row is an input row, with multiplicity
        pool = {tuple(row) for row in features}
        assert all(tuple(row) in pool for row in rows)
        # disjointness: row ids unique (rows are continuous Gaussians)
        assert len({tuple(row) for row in rows}) == kept
