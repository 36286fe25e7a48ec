"""Dataset loading: MNIST IDX files (binary 0/1 subset) and synthetic blobs."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .config import MnistSpec, SynthSpec
from .errors import ConfigurationError, DatasetNotFoundError, IdxFormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class RawImageSet:
    images: np.ndarray  # (n, rows, cols) uint8
    labels: np.ndarray  # (n,) uint8, digits 0-9

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise IdxFormatError(
                f"image/label count mismatch: {len(self.images)} images vs "
                f"{len(self.labels)} labels"
            )


def _open_maybe_gzip(path: str):
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_be32(f, path: str, offset: int) -> int:
    data = f.read(4)
    if len(data) != 4:
        raise IdxFormatError(
            f"{path}: truncated header at byte {offset}: expected 4 bytes, got {len(data)}"
        )
    return struct.unpack(">I", data)[0]


def _load_idx_array(path: str, magic: int, ndim: int) -> np.ndarray:
    with _open_maybe_gzip(path) as f:
        got_magic = _read_be32(f, path, 0)
        if got_magic != magic:
            raise IdxFormatError(
                f"{path}: bad magic at byte 0: expected {magic:#010x}, got {got_magic:#010x}"
            )
        dims = [_read_be32(f, path, 4 + 4 * i) for i in range(ndim)]
        payload = f.read()
    expected = int(np.prod(dims))
    if len(payload) != expected:
        raise IdxFormatError(
            f"{path}: truncated payload at byte {4 + 4 * ndim}: "
            f"expected {expected} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path: str, labels_path: str) -> RawImageSet:
    """Parse a big-endian IDX image/label pair (gzip variants accepted)."""
    images = _load_idx_array(images_path, IDX_IMAGE_MAGIC, 3)
    labels = _load_idx_array(labels_path, IDX_LABEL_MAGIC, 1)
    return RawImageSet(images=images, labels=labels)


def binarize(raw: RawImageSet) -> tuple[np.ndarray, np.ndarray]:
    """Keep digits 0 and 1; label them -1 and +1; flatten row-major and
    scale pixels into [0, 1]. Returns (features, labels)."""
    keep = (raw.labels == 0) | (raw.labels == 1)
    images = raw.images[keep]
    digits = raw.labels[keep]
    n = len(digits)
    width = images.shape[1] * images.shape[2]
    features = images.reshape(n, width).astype(np.float64) / 255.0
    labels = np.where(digits == 1, 1, -1).astype(np.int64)
    return features, labels


def truncate_dataset(
    features: np.ndarray, labels: np.ndarray, count: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded uniform subsample to exactly `count` rows, original order kept."""
    n = len(labels)
    if count > n:
        raise ConfigurationError(f"cannot truncate {n} samples to {count}")
    if count == n:
        return features, labels
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=count, replace=False))
    return features[idx], labels[idx]


_IMG_NAMES = ("train-images-idx3-ubyte", "train-images.idx3-ubyte")
_LBL_NAMES = ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte")


def _find_file(directory: str, names: tuple[str, ...]) -> str:
    for name in names:
        for candidate in (name, name + ".gz"):
            path = os.path.join(directory, candidate)
            if os.path.exists(path):
                return path
    raise DatasetNotFoundError(
        f"none of {names} (or .gz variants) found in {directory!r}"
    )


def load_binary_mnist(spec: MnistSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Load the train split, extract the 0/1 subset, optionally truncate."""
    images_path = _find_file(spec.directory, _IMG_NAMES)
    labels_path = _find_file(spec.directory, _LBL_NAMES)
    features, labels = binarize(load_idx(images_path, labels_path))
    if spec.count is not None:
        features, labels = truncate_dataset(features, labels, spec.count, seed)
    return features, labels


def synth_dataset(
    dim: int, count: int, margin: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Two Gaussian blobs centered at +/- margin * u for a random unit u.

    For margin > 0 the component along u is truncated to (-margin, margin),
    so the classes are linearly separable by construction: the signed
    projection of every sample onto u lies strictly on its class's side.
    margin = 0 yields one symmetric blob with balanced labels.
    """
    if dim < 1 or count < 1:
        raise ConfigurationError("dim and count must be >= 1")
    if margin < 0:
        raise ConfigurationError("margin must be nonnegative")
    rng = np.random.default_rng(seed)
    u = rng.normal(size=dim)
    u /= np.linalg.norm(u)
    labels = np.ones(count, dtype=np.int64)
    labels[count // 2 :] = -1
    labels = labels[rng.permutation(count)]
    noise = rng.normal(size=(count, dim))
    along = noise @ u
    if margin > 0:
        # inverse-CDF truncation of the along-u component to (-margin, margin)
        lo, hi = ndtr(-margin), ndtr(margin)
        along_trunc = ndtri(lo + (hi - lo) * rng.uniform(size=count))
        noise = noise + np.outer(along_trunc - along, u)
    features = labels[:, None] * margin * u[None, :] + noise
    return features, labels


def load_dataset(spec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(spec, SynthSpec):
        return synth_dataset(spec.dim, spec.count, spec.margin, seed)
    if isinstance(spec, MnistSpec):
        return load_binary_mnist(spec, seed)
    raise ConfigurationError(f"unknown dataset spec {spec!r}")
