"""Datasets: IDX (MNIST) ingestion, calibration sampling, synthetic fixtures."""

from __future__ import annotations

import gzip
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, IdxFormatError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
DATA_DIR_ENV = "QUANTSCORE_DATA_DIR"

# IDX type code -> big-endian numpy dtype
_IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (n, channels, height, width) float32 in [0, 1]
    labels: np.ndarray  # (n,) int64
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DomainError(f"images must be 4-D (n, c, h, w), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DomainError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DomainError(f"labels must lie in [0, {self.num_classes})")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DomainError("pixel values must lie in [0, 1]")

    def __len__(self):
        return len(self.labels)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.num_classes, self.split)

    def head(self, n: int) -> "Dataset":
        return self.subset(np.arange(min(n, len(self))))


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    return gzip.decompress(raw) if path.suffix == ".gz" else raw


def _write_bytes(path: Path, data: bytes) -> None:
    # no filename and mtime=0 in the gzip header keep archives byte-stable
    path.write_bytes(gzip.compress(data, mtime=0) if path.suffix == ".gz" else data)


def read_idx(path) -> tuple[int, np.ndarray]:
    """Parse any IDX file; returns ``(magic, array)``."""
    path = Path(path)
    try:
        raw = _read_bytes(path)
    except (gzip.BadGzipFile, EOFError, zlib.error) as exc:
        raise IdxFormatError(path, f"corrupt gzip stream: {exc}") from exc
    if len(raw) < 4:
        raise IdxFormatError(path, "file too short for a magic number", 4, len(raw))
    magic = struct.unpack(">I", raw[:4])[0]
    zero, type_code, ndim = magic >> 16, (magic >> 8) & 0xFF, magic & 0xFF
    if zero != 0 or type_code not in _IDX_DTYPES or ndim == 0:
        raise IdxFormatError(path, "not an IDX magic number", "0x0000TTDD", hex(magic))
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(path, "truncated dimension header", header, len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _IDX_DTYPES[type_code]
    expected = header + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(raw) != expected:
        raise IdxFormatError(path, "payload length does not match header", expected, len(raw))
    array = np.frombuffer(raw, dtype=dtype, offset=header).reshape(dims)
    return magic, array


def write_idx(array: np.ndarray, path) -> None:
    array = np.asarray(array)
    codes = {v.newbyteorder("="): k for k, v in _IDX_DTYPES.items()}
    native = array.dtype.newbyteorder("=")
    if native not in codes:
        raise DomainError(f"dtype {array.dtype} has no IDX encoding")
    code = codes[native]
    path = Path(path)
    header = struct.pack(">I", (code << 8) | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    payload = array.astype(_IDX_DTYPES[code], copy=False).tobytes()
    _write_bytes(path, header + payload)


def load_idx(images_path, labels_path, num_classes: int = 10, split: str = "train") -> Dataset:
    magic, images = read_idx(images_path)
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(images_path, "wrong magic for an image file", IMAGE_MAGIC, magic)
    magic, labels = read_idx(labels_path)
    if magic != LABEL_MAGIC:
        raise IdxFormatError(labels_path, "wrong magic for a label file", LABEL_MAGIC, magic)
    if len(images) != len(labels):
        raise IdxFormatError(labels_path, "label count differs from image count", len(images), len(labels))
    if len(labels) and int(labels.max()) >= num_classes:
        raise IdxFormatError(labels_path, "label out of range", f"< {num_classes}", int(labels.max()))
    pixels = images.astype(np.float32)[:, None, :, :] / np.float32(255.0)
    return Dataset(pixels, labels.astype(np.int64), num_classes, split)


def save_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Write a single-channel dataset back to IDX (pixels re-quantized to bytes)."""
    if dataset.images.shape[1] != 1:
        raise DomainError("IDX export supports single-channel images only")
    pixels = np.rint(dataset.images[:, 0] * 255.0).astype(np.uint8)
    write_idx(pixels, images_path)
    write_idx(dataset.labels.astype(np.uint8), labels_path)


_MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def default_data_dir() -> Path:
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data" / "mnist5k"


def mnist_paths(data_dir=None, split: str = "train") -> tuple[Path, Path]:
    data_dir = Path(data_dir) if data_dir is not None else default_data_dir()
    paths = []
    for stem in _MNIST_FILES[split]:
        for name in (stem, stem + ".gz"):
            if (data_dir / name).exists():
                paths.append(data_dir / name)
                break
        else:
            raise IdxFormatError(data_dir / stem, "MNIST file not found")
    return paths[0], paths[1]


def load_mnist(data_dir=None, split: str = "train") -> Dataset:
    images, labels = mnist_paths(data_dir, split)
    return load_idx(images, labels, 10, split)


def sample_calibration(dataset: Dataset, n: int = 512, seed: int = 0) -> Dataset:
    """Uniform draw of ``n`` samples without replacement, reproducible per seed."""
    if n <= 0:
        raise DomainError("calibration size must be positive")
    if n > len(dataset):
        raise DomainError(f"cannot draw {n} calibration samples from {len(dataset)}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(dataset), size=n, replace=False)
    return dataset.subset(idx)


def synth_gaussian_blobs(
    k: int,
    n: int,
    dims=(1, 8, 8),
    separation: float = 3.0,
    seed: int = 0,
    split: str = "train",
) -> Dataset:
    """K Gaussian clusters squashed into [0, 1] and shaped like images.

    Class centres are unit-norm random directions scaled by ``separation``;
    separation 0 makes every class the same distribution.
    """
    if k < 2:
        raise DomainError("need at least two classes")
    if n < k:
        raise DomainError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    d = int(np.prod(dims))
    centres = rng.standard_normal((k, d))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    labels = np.arange(n) % k
    rng.shuffle(labels)
    x = separation * centres[labels] + rng.standard_normal((n, d))
    images = 1.0 / (1.0 + np.exp(-x))
    return Dataset(images.reshape((n, *dims)).astype(np.float32), labels.astype(np.int64), k, split)


def random_crop_flip(images: np.ndarray, rng: np.random.Generator, pad: int = 4) -> np.ndarray:
    """Per-sample random crop (zero padding ``pad``) and horizontal flip."""
    n, c, h, w = images.shape
    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.empty_like(images)
    dy = rng.integers(0, 2 * pad + 1, size=n)
    dx = rng.integers(0, 2 * pad + 1, size=n)
    flip = rng.random(n) < 0.5
    for i in range(n):
        crop = padded[i, :, dy[i]:dy[i] + h, dx[i]:dx[i] + w]
        out[i] = crop[:, :, ::-1] if flip[i] else crop
    return out
