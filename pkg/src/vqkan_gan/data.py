"""Dataset loading and preprocessing.

Readers for MNIST-family IDX files and CIFAR-10 binary batches, a
corner-aligned bilinear resize, and binary PGM image dumps. Pixels are always
floats in [0, 1].
"""
from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
CIFAR_RECORD = 1 + 3 * 32 * 32
LUMA = (0.299, 0.587, 0.114)


class DataFormatError(ValueError):
    """Base class for malformed dataset files."""


class BadMagicError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class CountMismatchError(DataFormatError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (count, height * width)
    labels: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.images.ndim != 2 or self.images.shape[1] != self.width * self.height:
            raise ValueError(f"images must have shape (n, {self.width * self.height}), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixels must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.images)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack(">II", self.width, self.height))
        h.update(np.ascontiguousarray(self.images, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------


def _read_idx(path, magic: int, n_dims: int) -> tuple[tuple[int, ...], bytes]:
    raw = Path(path).read_bytes()
    header = 4 + 4 * n_dims
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file too short for a magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"{path}: magic {found}, expected {magic}")
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: header needs {header} bytes, file has {len(raw)}")
    dims = struct.unpack(">" + "I" * n_dims, raw[4:header])
    payload = raw[header:]
    need = int(np.prod(dims))
    if len(payload) < need:
        raise TruncatedFileError(f"{path}: expected {need} data bytes, found {len(payload)}")
    return dims, payload[:need]


def load_mnist_idx(image_path, label_path) -> Dataset:
    (count, rows, cols), pixels = _read_idx(image_path, IDX_IMAGE_MAGIC, 3)
    (n_labels,), labels = _read_idx(label_path, IDX_LABEL_MAGIC, 1)
    if n_labels != count:
        raise CountMismatchError(f"{count} images but {n_labels} labels")
    images = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows * cols) / 255.0
    return Dataset(images, np.frombuffer(labels, dtype=np.uint8).astype(int), cols, rows)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a (count, rows, cols) uint8 array as an IDX image file."""
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_IMAGE_MAGIC, count, rows, cols) + images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", IDX_LABEL_MAGIC, len(labels)) + labels.tobytes())


# ---------------------------------------------------------------------------
# CIFAR-10
# ---------------------------------------------------------------------------


def load_cifar10_gray(batch_path) -> Dataset:
    """CIFAR-10 binary batch to grayscale via 0.299 R + 0.587 G + 0.114 B."""
    raw = Path(batch_path).read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise DataFormatError(f"{batch_path}: length {len(raw)} is not a multiple of {CIFAR_RECORD}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(int)
    rgb = records[:, 1:].reshape(-1, 3, 32 * 32).astype(float)
    gray = np.tensordot(np.array(LUMA), rgb, axes=([0], [1])) / 255.0
    return Dataset(np.clip(gray, 0.0, 1.0), labels, 32, 32)


# ---------------------------------------------------------------------------
# sklearn's bundled 8x8 digits (no download needed)
# ---------------------------------------------------------------------------


def load_digits8() -> Dataset:
    from sklearn.datasets import load_digits

    digits = load_digits()
    return Dataset(digits.data / 16.0, digits.target, 8, 8)


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def _sample_coords(src: int, dst: int) -> np.ndarray:
    if dst == 1:
        return np.array([(src - 1) / 2.0])
    return np.arange(dst) * ((src - 1) / (dst - 1))


def resize_bilinear(image, src_w: int, src_h: int, dst_w: int, dst_h: int) -> np.ndarray:
    """Bilinear resize with corners of source and target grids aligned.

    A one-pixel target axis samples the source centre.
    """
    if min(src_w, src_h, dst_w, dst_h) < 1:
        raise ValueError("image dimensions must be positive")
    img = np.asarray(image, dtype=float).reshape(src_h, src_w)
    ys, xs = _sample_coords(src_h, dst_h), _sample_coords(src_w, dst_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, src_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bottom = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bottom * wy).reshape(-1)


def resize_dataset(ds: Dataset, width: int, height: int) -> Dataset:
    if (width, height) == (ds.width, ds.height):
        return ds
    images = np.stack([resize_bilinear(im, ds.width, ds.height, width, height) for im in ds.images])
    return Dataset(np.clip(images, 0.0, 1.0), ds.labels, width, height)


def take_prefix(ds: Dataset, n: int, label: int | None = None) -> Dataset:
    """First ``n`` items in index order, optionally only those with ``label``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = np.arange(len(ds)) if label is None else np.nonzero(ds.labels == label)[0]
    if len(idx) < n:
        raise ValueError(f"only {len(idx)} items available, {n} requested")
    idx = idx[:n]
    return Dataset(ds.images[idx], ds.labels[idx], ds.width, ds.height)


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------


def to_bytes(image) -> np.ndarray:
    return np.rint(255.0 * np.clip(np.asarray(image, dtype=float), 0.0, 1.0)).astype(np.uint8)


def write_pgm(path, image, width: int, height: int) -> None:
    pixels = to_bytes(image).reshape(height, width)
    Path(path).write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())


_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def read_pgm(path) -> tuple[np.ndarray, int, int]:
    raw = Path(path).read_bytes()
    match = _PGM_HEADER.match(raw)
    if match is None:
        raise DataFormatError(f"{path}: not a binary PGM")
    width, height, maxval = (int(g) for g in match.groups())
    data = np.frombuffer(raw[match.end() : match.end() + width * height], dtype=np.uint8)
    if len(data) != width * height:
        raise TruncatedFileError(f"{path}: expected {width * height} pixels")
    return data / maxval, width, height


def image_grid(images, width: int, height: int, cols: int | None = None, pad: int = 1) -> tuple[np.ndarray, int, int]:
    """Tile images into one canvas for a single PGM dump."""
    images = np.asarray(images, dtype=float)
    count = len(images)
    cols = cols or count
    rows = -(-count // cols)
    gw, gh = cols * (width + pad) - pad, rows * (height + pad) - pad
    canvas = np.zeros((gh, gw))
    for k, im in enumerate(images):
        r, c = divmod(k, cols)
        y, x = r * (height + pad), c * (width + pad)
        canvas[y : y + height, x : x + width] = im.reshape(height, width)
    return canvas.reshape(-1), gw, gh
