"""IDX parsing, binarization, and the synthetic generator."""

import gzip
import struct

import numpy as np
import pytest

from mlonsim import data
from mlonsim.config import MnistSpec
from mlonsim.errors import ConfigurationError, DatasetNotFoundError, IdxFormatError


def write_idx_images(path, images, gz=False):
    """Independent byte-level writer: big-endian magic + dims + raw pixels."""
    arr = np.asarray(images, dtype=np.uint8)
    blob = struct.pack(">IIII", 0x00000803, *arr.shape) + arr.tobytes()
    opener = gzip.open if gz else open
    with opener(path, "wb") as f:
        f.write(blob)


def write_idx_labels(path, labels, gz=False):
    arr = np.asarray(labels, dtype=np.uint8)
    blob = struct.pack(">II", 0x00000801, len(arr)) + arr.tobytes()
    opener = gzip.open if gz else open
    with opener(path, "wb") as f:
        f.write(blob)


@pytest.fixture
def mnist_dir(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(30, 28, 28), dtype=np.uint8)
    labels = np.array([0, 1, 2, 3, 4, 5, 6, 7, 8, 9] * 3, dtype=np.uint8)
    write_idx_images(tmp_path / "train-images-idx3-ubyte", images)
    write_idx_labels(tmp_path / "train-labels-idx1-ubyte", labels)
    return tmp_path, images, labels


class TestLoadIdx:
    def test_round_trip(self, mnist_dir):
        path, images, labels = mnist_dir
        raw = data.load_idx(
            str(path / "train-images-idx3-ubyte"), str(path / "train-labels-idx1-ubyte")
        )
        np.testing.assert_array_equal(raw.images, images)
        np.testing.assert_array_equal(raw.labels, labels)

    def test_gzip_variant(self, tmp_path):
        images = np.zeros((2, 28, 28), dtype=np.uint8)
        labels = np.array([0, 1], dtype=np.uint8)
        write_idx_images(tmp_path / "imgs.gz", images, gz=True)
        write_idx_labels(tmp_path / "lbls.gz", labels, gz=True)
        raw = data.load_idx(str(tmp_path / "imgs.gz"), str(tmp_path / "lbls.gz"))
        assert raw.images.shape == (2, 28, 28)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">IIII", 0xDEADBEEF, 1, 28, 28) + b"\x00" * 784)
        with pytest.raises(IdxFormatError, match="magic"):
            data._load_idx_array(str(path), data.IDX_IMAGE_MAGIC, 3)

    def test_truncated_payload_names_expected_and_actual(self, tmp_path):
        path = tmp_path / "short"
        path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 28, 28) + b"\x00" * 100)
        with pytest.raises(IdxFormatError, match="expected 1568 bytes, got 100"):
            data._load_idx_array(str(path), data.IDX_IMAGE_MAGIC, 3)

    def test_count_mismatch(self, tmp_path):
        write_idx_images(tmp_path / "imgs", np.zeros((3, 28, 28), dtype=np.uint8))
        write_idx_labels(tmp_path / "lbls", np.zeros(2, dtype=np.uint8))
        with pytest.raises(IdxFormatError, match="mismatch"):
            data.load_idx(str(tmp_path / "imgs"), str(tmp_path / "lbls"))


class TestBinarize:
    def test_keeps_only_zero_and_one(self, mnist_dir):
        path, images, labels = mnist_dir
        raw = data.load_idx(
            str(path / "train-images-idx3-ubyte"), str(path / "train-labels-idx1-ubyte")
        )
        features, out = data.binarize(raw)
        assert len(out) == int(np.sum((labels == 0) | (labels == 1)))
        assert set(out.tolist()) <= {-1, 1}
        assert features.shape[1] == 784
        assert features.min() >= 0.0 and features.max() <= 1.0

    def test_no_zero_one_digits(self):
        raw = data.RawImageSet(
            images=np.zeros((3, 28, 28), dtype=np.uint8),
            labels=np.array([2, 5, 9], dtype=np.uint8),
        )
        features, labels = data.binarize(raw)
        assert len(labels) == 0

    def test_all_zero_image_maps_to_minus_one(self):
        raw = data.RawImageSet(
            images=np.zeros((1, 28, 28), dtype=np.uint8),
            labels=np.array([0], dtype=np.uint8),
        )
        features, labels = data.binarize(raw)
        np.testing.assert_array_equal(features, np.zeros((1, 784)))
        assert labels[0] == -1

    def test_row_major_flattening_and_scaling(self):
        image = np.zeros((1, 28, 28), dtype=np.uint8)
        image[0, 1, 2] = 255  # row 1, col 2 -> flat index 30
        raw = data.RawImageSet(images=image, labels=np.array([1], dtype=np.uint8))
        features, _ = data.binarize(raw)
        assert features[0, 30] == 1.0
        assert features[0].sum() == 1.0


class TestTruncate:
    def test_seeded_and_exact(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(20, 3))
        y = rng.choice([-1, 1], size=20)
        xa, ya = data.truncate_dataset(X, y, 12, seed=4)
        xb, yb = data.truncate_dataset(X, y, 12, seed=4)
        assert len(ya) == 12
        np.testing.assert_array_equal(xa, xb)
        with pytest.raises(ConfigurationError):
            data.truncate_dataset(X, y, 21, seed=0)


class TestLoadBinaryMnist:
    def test_with_truncation(self, mnist_dir):
        path, _, labels = mnist_dir
        spec = MnistSpec(directory=str(path), count=4)
        features, out = data.load_binary_mnist(spec, seed=0)
        assert len(out) == 4
        assert features.shape == (4, 784)

    def test_missing_files(self, tmp_path):
        with pytest.raises(DatasetNotFoundError):
            data.load_binary_mnist(MnistSpec(directory=str(tmp_path)), seed=0)


class TestSynth:
    def test_separable_at_positive_margin(self):
        from scipy.optimize import linprog

        X, y = data.synth_dataset(dim=3, count=200, margin=2.0, seed=7)
        # independent oracle: hard-margin feasibility LP, y_i (w . x_i) >= 1
        res = linprog(
            c=np.zeros(3),
            A_ub=-(y[:, None] * X),
            b_ub=-np.ones(len(y)),
            bounds=[(None, None)] * 3,
            method="highs",
        )
        assert res.success

    def test_margin_zero_is_balanced_and_symmetric(self):
        X, y = data.synth_dataset(dim=4, count=101, margin=0.0, seed=3)
        assert abs(int(np.sum(y == 1)) - int(np.sum(y == -1))) <= 1
        # nothing separates the classes: same distribution for both
        gap = X[y == 1].mean(axis=0) - X[y == -1].mean(axis=0)
        assert np.linalg.norm(gap) < 1.0

    def test_deterministic(self):
        a = data.synth_dataset(dim=2, count=50, margin=1.0, seed=11)
        b = data.synth_dataset(dim=2, count=50, margin=1.0, seed=11)
        c = data.synth_dataset(dim=2, count=50, margin=1.0, seed=12)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        assert not np.array_equal(a[0], c[0])

    def test_full_gd_reaches_perfect_accuracy(self):
        # d=2 blobs at margin 2 must be fit exactly by the solver
        from mlonsim import model

        X, y = data.synth_dataset(dim=2, count=100, margin=2.0, seed=1)
        shard = model.WorkerShard(worker_id=1, features=X, labels=y)
        alpha = model.default_step_size([shard])
        w = np.zeros(2)
        for _ in range(2000):
            w = w - alpha * model.local_gradient(w, shard).values
        accuracy = np.mean(np.sign(X @ w) == y)
        assert accuracy == 1.0
