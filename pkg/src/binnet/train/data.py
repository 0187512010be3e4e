"""Image datasets: an IDX file reader/writer and a synthetic 10-class generator."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ShapeMismatch

# IDX type codes -> numpy dtypes (big-endian payloads)
_IDX_TYPES = {0x08: np.dtype("u1"), 0x09: np.dtype("i1"), 0x0B: np.dtype(">i2"), 0x0C: np.dtype(">i4"),
              0x0D: np.dtype(">f4"), 0x0E: np.dtype(">f8")}
_IDX_CODES = {np.dtype(v).newbyteorder("=") if v.itemsize > 1 else v: k for k, v in _IDX_TYPES.items()}


def _open(path: Path, mode: str):
    return gzip.open(path, mode) if path.suffix == ".gz" else open(path, mode)


def read_idx(path: str | Path) -> np.ndarray:
    path = Path(path)
    with _open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] not in _IDX_TYPES:
        raise ShapeMismatch(f"{path} is not an IDX file")
    dtype, ndim = _IDX_TYPES[raw[2]], raw[3]
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    payload = raw[4 + 4 * ndim:]
    count = int(np.prod(dims)) if dims else 1
    if len(payload) != count * dtype.itemsize:
        raise ShapeMismatch(f"{path}: header says {dims}, payload has {len(payload)} bytes")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    code = _IDX_CODES.get(arr.dtype.newbyteorder("=") if arr.dtype.itemsize > 1 else arr.dtype)
    if code is None:
        raise ValueError(f"IDX cannot store dtype {arr.dtype}")
    big = arr.astype(_IDX_TYPES[code], copy=False)
    with _open(Path(path), "wb") as fh:
        fh.write(bytes([0, 0, code, arr.ndim]))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(big.tobytes())


@dataclass
class Dataset:
    """uint8 images (N, C, H, W) and integer labels."""
    images: np.ndarray
    labels: np.ndarray
    num_classes: int = 10

    def __post_init__(self):
        if self.images.ndim == 3:
            self.images = self.images[:, None]
        if self.images.ndim != 4 or len(self.images) != len(self.labels):
            raise ShapeMismatch(f"images {self.images.shape} vs labels {self.labels.shape}")
        self.labels = self.labels.astype(np.int64)

    def __len__(self):
        return len(self.labels)

    def normalized(self, dtype=np.float32) -> np.ndarray:
        """Pixels mapped to roughly zero mean and unit scale."""
        return ((self.images.astype(dtype) - 127.5) / 127.5).astype(dtype)

    def batches(self, batch_size: int, rng: np.random.Generator | None = None, dtype=np.float32):
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        x = self.normalized(dtype)
        for i in range(0, len(self), batch_size):
            idx = order[i:i + batch_size]
            yield x[idx], self.labels[idx]


def load_idx_dataset(images_path: str | Path, labels_path: str | Path, num_classes: int = 10) -> Dataset:
    return Dataset(read_idx(images_path), read_idx(labels_path), num_classes)


def save_idx_dataset(ds: Dataset, images_path: str | Path, labels_path: str | Path) -> None:
    write_idx(images_path, ds.images[:, 0] if ds.images.shape[1] == 1 else ds.images)
    write_idx(labels_path, ds.labels.astype(np.uint8))


def _prototypes(rng: np.random.Generator, num_classes: int, size: int, blobs: int = 4) -> np.ndarray:
    yy, xx = np.mgrid[:size, :size].astype(np.float64)
    protos = np.zeros((num_classes, size, size))
    for c in range(num_classes):
        for _ in range(blobs):
            cy, cx = rng.uniform(size * 0.2, size * 0.8, 2)
            sy, sx = rng.uniform(1.5, 4.0, 2)
            protos[c] += rng.choice([-1.0, 1.0]) * np.exp(-((yy - cy) ** 2 / (2 * sy ** 2) + (xx - cx) ** 2 / (2 * sx ** 2)))
        protos[c] /= np.abs(protos[c]).max()
    return protos


def synthetic_dataset(n_train: int = 5000, n_test: int = 1000, num_classes: int = 10, size: int = 28,
                      seed: int = 0, max_shift: int = 3, noise: float = 0.35) -> tuple[Dataset, Dataset]:
    """Class prototypes made of signed Gaussian blobs, randomly shifted, rescaled and noised.

    Prototypes depend only on ``seed``, so train and test share them; each
    split has its own stream, so the test set does not depend on ``n_train``.
    """
    protos = _prototypes(np.random.default_rng(seed), num_classes, size)

    def draw(n, stream):
        rng = np.random.default_rng([seed, stream])
        labels = rng.integers(0, num_classes, n)
        imgs = np.empty((n, size, size))
        shifts = rng.integers(-max_shift, max_shift + 1, (n, 2))
        amps = rng.uniform(0.6, 1.2, n)
        for i in range(n):
            imgs[i] = amps[i] * np.roll(protos[labels[i]], tuple(shifts[i]), axis=(0, 1))
        imgs += noise * rng.standard_normal(imgs.shape)
        pix = np.clip(np.rint(127.5 + 127.5 * imgs / 1.5), 0, 255).astype(np.uint8)
        return Dataset(pix, labels, num_classes)

    return draw(n_train, 1), draw(n_test, 2)
