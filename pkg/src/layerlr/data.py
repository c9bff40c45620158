"""Dataset ingestion: IDX image sets, CIFAR-10 binary batches, synthetic blobs.

All loaders produce float32 inputs in [0, 1] and int64 labels. The validation
split is carved from the training pool (10% by default) with a permutation
fixed by the split seed, so every method in a comparison sees identical data.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073

IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    num_classes: int
    input_shape: tuple

    @property
    def train_size(self) -> int:
        return int(self.train_x.shape[0])


def _open_maybe_gzip(path):
    path = Path(path)
    if not path.exists() and path.with_name(path.name + ".gz").exists():
        path = path.with_name(path.name + ".gz")
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_idx(images_path, labels_path):
    """Parse one IDX image/label file pair into (inputs, labels)."""
    with _open_maybe_gzip(images_path) as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise DataError(f"{images_path}: truncated IDX image header")
        magic, count, rows, cols = struct.unpack(">iiii", header)
        if magic != IDX_IMAGE_MAGIC:
            raise DataError(f"{images_path}: bad IDX image magic {magic:#010x}")
        raw = fh.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise DataError(f"{images_path}: expected {count * rows * cols} pixel bytes")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols, 1)
    with _open_maybe_gzip(labels_path) as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise DataError(f"{labels_path}: truncated IDX label header")
        magic, label_count = struct.unpack(">ii", header)
        if magic != IDX_LABEL_MAGIC:
            raise DataError(f"{labels_path}: bad IDX label magic {magic:#010x}")
        raw = fh.read(label_count)
        if len(raw) != label_count:
            raise DataError(f"{labels_path}: expected {label_count} label bytes")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise DataError(
            f"IDX pair mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    return images.astype(np.float32) / 255.0, labels


def write_idx(inputs, labels, images_path, labels_path) -> None:
    """Quantize [0,1] inputs to uint8 and write an IDX image/label pair."""
    x = np.asarray(inputs)
    if x.ndim == 2:
        x = x[:, :, None, None]
    if x.ndim == 4:
        if x.shape[3] != 1:
            raise DataError("IDX writer supports single-channel images only")
        x = x[..., 0]
    count, rows, cols = x.shape
    pixels = np.clip(np.round(x * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, count, rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">ii", IDX_LABEL_MAGIC, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def load_cifar10_binary(paths):
    """Parse CIFAR-10 binary batches (3073-byte records, channel-major pixels)."""
    chunks_x, chunks_y = [], []
    for path in paths:
        with _open_maybe_gzip(path) as fh:
            raw = fh.read()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES:
            raise DataError(
                f"{path}: length {len(raw)} is not a positive multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        chunks_y.append(records[:, 0].astype(np.int64))
        pixels = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
        chunks_x.append(pixels.astype(np.float32) / 255.0)
    return np.concatenate(chunks_x), np.concatenate(chunks_y)


def split_train_val(x, y, fraction, seed):
    """Deterministic permutation split; returns (train_x, train_y, val_x, val_y)."""
    n = x.shape[0]
    n_val = max(1, int(round(n * fraction)))
    perm = np.random.default_rng(seed).permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    return x[train_idx], y[train_idx], x[val_idx], y[val_idx]


def synthetic_blobs(
    num_classes,
    per_class,
    dim,
    seed,
    separation=4.0,
    label_noise=0.0,
    image_shape=None,
    test_per_class=None,
    val_fraction=0.1,
) -> Dataset:
    """Seeded Gaussian clusters, affinely squashed into [0, 1].

    Class centers sit on a radius-`separation` sphere with unit isotropic
    noise, so `separation` is in units of the noise scale. `label_noise`
    uniformly re-draws that fraction of training-pool labels.
    """
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}")
    rng = np.random.default_rng(seed)
    if num_classes <= dim:
        # orthonormal directions: every pair of centers sits separation*sqrt(2) apart
        basis, _ = np.linalg.qr(rng.normal(size=(dim, num_classes)))
        centers = separation * basis.T
    else:
        centers = rng.normal(size=(num_classes, dim))
        centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    if test_per_class is None:
        test_per_class = max(per_class // 5, 1)

    def draw(count_per_class):
        labels = np.repeat(np.arange(num_classes), count_per_class)
        points = centers[labels] + rng.normal(size=(labels.size, dim))
        order = rng.permutation(labels.size)
        return points[order].astype(np.float32), labels[order].astype(np.int64)

    pool_x, pool_y = draw(per_class)
    test_x, test_y = draw(test_per_class)
    if label_noise > 0.0:
        flip = rng.random(pool_y.size) < label_noise
        pool_y = np.where(flip, rng.integers(0, num_classes, size=pool_y.size), pool_y)

    lo, hi = -(separation + 4.0), separation + 4.0
    pool_x = np.clip((pool_x - lo) / (hi - lo), 0.0, 1.0)
    test_x = np.clip((test_x - lo) / (hi - lo), 0.0, 1.0)

    shape = (dim,)
    if image_shape is not None:
        shape = tuple(image_shape)
        if int(np.prod(shape)) != dim:
            raise ConfigError(f"image_shape {shape} does not hold {dim} features")
        pool_x = pool_x.reshape((-1,) + shape)
        test_x = test_x.reshape((-1,) + shape)
    train_x, train_y, val_x, val_y = split_train_val(pool_x, pool_y, val_fraction, seed)
    return Dataset(
        train_x=train_x, train_y=train_y,
        val_x=val_x, val_y=val_y,
        test_x=test_x, test_y=test_y,
        num_classes=num_classes,
        input_shape=shape,
    )


def _limit_train(x, y, limit, seed):
    if limit is None or limit >= x.shape[0]:
        return x, y
    idx = np.random.default_rng(seed).permutation(x.shape[0])[:limit]
    return x[idx], y[idx]


def load_dataset(cfg: dict, data_dir=None, split_seed=0) -> Dataset:
    """Build a Dataset from a config dict (the EnvConfig `dataset` field).

    Supported names: synthetic_blobs, mnist, fashion_mnist, cifar10. File-backed
    sets live under <data_dir>/<name>/ with their standard filenames.
    """
    cfg = dict(cfg)
    name = cfg.pop("name", "synthetic_blobs")
    split_seed = int(cfg.pop("split_seed", split_seed))
    train_limit = cfg.pop("train_limit", None)
    if name == "synthetic_blobs":
        ds = synthetic_blobs(
            num_classes=int(cfg.pop("classes", 10)),
            per_class=int(cfg.pop("per_class", 1000)),
            dim=int(cfg.pop("dim", 32)),
            seed=int(cfg.pop("seed", 0)),
            separation=float(cfg.pop("separation", 4.0)),
            label_noise=float(cfg.pop("label_noise", 0.0)),
            image_shape=cfg.pop("image_shape", None),
            test_per_class=cfg.pop("test_per_class", None),
            val_fraction=float(cfg.pop("val_fraction", 0.1)),
        )
        if cfg:
            raise ConfigError(f"unknown synthetic_blobs options: {sorted(cfg)}")
        if train_limit is not None:
            ds.train_x, ds.train_y = _limit_train(ds.train_x, ds.train_y, int(train_limit), split_seed)
        return ds
    if data_dir is None:
        raise ConfigError(f"dataset {name!r} needs a data directory")
    root = Path(data_dir) / name
    if name in ("mnist", "fashion_mnist"):
        train_x, train_y = load_idx(root / IDX_FILES["train"][0], root / IDX_FILES["train"][1])
        test_x, test_y = load_idx(root / IDX_FILES["test"][0], root / IDX_FILES["test"][1])
        num_classes = 10
    elif name == "cifar10":
        train_x, train_y = load_cifar10_binary(
            [root / f"data_batch_{i}.bin" for i in range(1, 6)]
        )
        test_x, test_y = load_cifar10_binary([root / "test_batch.bin"])
        num_classes = 10
    else:
        raise ConfigError(f"unknown dataset {name!r}")
    if train_limit is not None:
        train_x, train_y = _limit_train(train_x, train_y, int(train_limit), split_seed)
    val_fraction = float(cfg.pop("val_fraction", 0.1))
    train_x, train_y, val_x, val_y = split_train_val(train_x, train_y, val_fraction, split_seed)
    return Dataset(
        train_x=train_x, train_y=train_y,
        val_x=val_x, val_y=val_y,
        test_x=test_x, test_y=test_y,
        num_classes=num_classes,
        input_shape=tuple(train_x.shape[1:]),
    )
