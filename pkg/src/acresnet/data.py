"""CIFAR-10 binary ingestion, normalization, augmentation, batching, and a
synthetic dataset for desk-scale runs without the real corpus."""

import json
import os
from dataclasses import dataclass

import numpy as np

RECORD_BYTES = 3073  # 1 label byte + 3072 pixel bytes
RECORDS_PER_FILE = 10_000
FILE_BYTES = RECORD_BYTES * RECORDS_PER_FILE  # 30,730,000
TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
TEST_FILE = "test_batch.bin"
PAD = 4


class DataError(Exception):
    """Raised for missing, malformed, or degenerate dataset inputs."""


@dataclass
class Dataset:
    images: np.ndarray  # (M,3,32,32) float32 in [0,1]
    labels: np.ndarray  # (M,) int64 in [0,10)
    split: str = "train"

    def __len__(self):
        return len(self.labels)


@dataclass
class ChannelStats:
    mean: np.ndarray  # (3,)
    std: np.ndarray   # (3,)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump({"mean": self.mean.tolist(), "std": self.std.tolist()}, fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls(np.asarray(d["mean"], dtype=np.float32),
                   np.asarray(d["std"], dtype=np.float32))


def _parse_batch_file(path):
    if not os.path.exists(path):
        raise DataError(f"missing CIFAR-10 batch file: {path}")
    size = os.path.getsize(path)
    if size != FILE_BYTES:
        raise DataError(f"{path}: expected exactly {FILE_BYTES} bytes, found {size}")
    raw = np.fromfile(path, dtype=np.uint8).reshape(RECORDS_PER_FILE, RECORD_BYTES)
    labels = raw[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise DataError(f"{path}: label byte {labels.max()} out of range [0, 9]")
    images = raw[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    return images, labels


def load_cifar10(data_dir):
    """Load the binary-format CIFAR-10 corpus from a directory."""
    train_parts = [_parse_batch_file(os.path.join(data_dir, f)) for f in TRAIN_FILES]
    train = Dataset(np.concatenate([p[0] for p in train_parts]),
                    np.concatenate([p[1] for p in train_parts]), split="train")
    ti, tl = _parse_batch_file(os.path.join(data_dir, TEST_FILE))
    return train, Dataset(ti, tl, split="test")


def compute_channel_stats(images):
    mean = images.mean(axis=(0, 2, 3))
    std = images.std(axis=(0, 2, 3))
    if np.any(std == 0):
        raise DataError("zero per-channel std; cannot standardize a constant channel")
    return ChannelStats(mean.astype(np.float32), std.astype(np.float32))


def normalize(images, stats):
    shape = (1, 3, 1, 1) if images.ndim == 4 else (3, 1, 1)
    return (images - stats.mean.reshape(shape)) / stats.std.reshape(shape)


def pad_crop(image, oy, ox, pad=PAD):
    """Zero-pad to (32+2*pad) square and crop a 32x32 window at (oy, ox)."""
    padded = np.pad(image, ((0, 0), (pad, pad), (pad, pad)))
    return padded[:, oy : oy + 32, ox : ox + 32]


def hflip(image):
    return image[:, :, ::-1]


def augment(image, rng):
    """Pad-4 random crop plus random horizontal flip."""
    oy, ox = rng.integers(0, 2 * PAD + 1, size=2)
    out = pad_crop(image, int(oy), int(ox))
    if rng.random() < 0.5:
        out = hflip(out)
    return np.ascontiguousarray(out)


def augment_batch(images, rng):
    return np.stack([augment(img, rng) for img in images])


def epoch_permutation(m, seed, epoch):
    return np.random.default_rng([seed, epoch]).permutation(m)


def iter_batches(m, batch_size, seed, epoch):
    """Shuffled index batches; the final short batch is kept."""
    perm = epoch_permutation(m, seed, epoch)
    for start in range(0, m, batch_size):
        yield perm[start : start + batch_size]


def synthetic_dataset(classes, per_class, seed, split="train"):
    """Separable Gaussian-blob images: each class gets a fixed blob center
    and channel signature, with mild noise on top."""
    rng = np.random.default_rng([seed, 0 if split == "train" else 1])
    centers = 8 + 16 * rng.random(size=(classes, 2))
    signatures = 0.3 + 0.7 * rng.random(size=(classes, 3))
    yy, xx = np.mgrid[0:32, 0:32]
    images = np.empty((classes * per_class, 3, 32, 32), dtype=np.float32)
    labels = np.empty(classes * per_class, dtype=np.int64)
    idx = 0
    for c in range(classes):
        cy, cx = centers[c]
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * 4.0**2))
        base = signatures[c][:, None, None] * bump[None, :, :]
        for _ in range(per_class):
            noise = 0.05 * rng.standard_normal((3, 32, 32))
            images[idx] = np.clip(base + noise, 0.0, 1.0)
            labels[idx] = c
            idx += 1
    return Dataset(images, labels, split=split)
