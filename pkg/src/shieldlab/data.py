"""Dataset container, IDX file ingestion, and synthetic shape generation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import struct

import numpy as np

from .errors import IdxFormatError, ShapeError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

SHAPE_KINDS = ("bar", "cross", "blob", "ring")


@dataclass
class Dataset:
    """Labeled image collection: images (n, c, h, w) in [0, 1], integer labels."""

    name: str
    images: np.ndarray
    labels: np.ndarray
    split_role: str = "train"
    num_classes: int = field(default=0)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ShapeError(f"images must be (n, c, h, w), got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ShapeError(f"{self.images.shape[0]} images but {self.labels.shape} labels")
        if not np.all(np.isfinite(self.images)):
            raise ValueError("images contain non-finite values")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        if self.num_classes == 0:
            self.num_classes = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return replace(self, images=self.images[indices], labels=self.labels[indices])


def _read_be_u32(fh, path, what) -> int:
    raw = fh.read(4)
    if len(raw) != 4:
        raise IdxFormatError(f"{path}: truncated while reading {what}")
    return struct.unpack(">I", raw)[0]


def load_idx(images_path, labels_path, name: str | None = None,
             split_role: str = "train") -> Dataset:
    """Load an IDX image/label file pair (big-endian, magic-numbered).

    Pixel bytes are scaled to [0, 1] by dividing by 255.
    """
    with open(images_path, "rb") as fh:
        magic = _read_be_u32(fh, images_path, "magic")
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(f"{images_path}: bad image magic 0x{magic:08x}")
        count = _read_be_u32(fh, images_path, "count")
        rows = _read_be_u32(fh, images_path, "rows")
        cols = _read_be_u32(fh, images_path, "cols")
        raw = fh.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise IdxFormatError(f"{images_path}: truncated pixel data "
                                 f"({len(raw)} of {count * rows * cols} bytes)")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, 1, rows, cols)
    with open(labels_path, "rb") as fh:
        magic = _read_be_u32(fh, labels_path, "magic")
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(f"{labels_path}: bad label magic 0x{magic:08x}")
        label_count = _read_be_u32(fh, labels_path, "count")
        raw = fh.read(label_count)
        if len(raw) != label_count:
            raise IdxFormatError(f"{labels_path}: truncated label data")
        labels = np.frombuffer(raw, dtype=np.uint8)
    if label_count != count:
        raise IdxFormatError(f"image count {count} does not match label count {label_count}")
    return Dataset(name or str(images_path), images / 255.0, labels.astype(np.int64),
                   split_role=split_role)


def _paint_shape(kind: str, size: int, cy: int, cx: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    img = np.zeros((size, size))
    thick = max(1, size // 8)
    if kind == "bar":
        img[np.abs(yy - cy) <= thick] = 1.0
    elif kind == "cross":
        half = max(1, size // 12)
        arm = size * 3 // 8
        horiz = (np.abs(yy - cy) <= half) & (np.abs(xx - cx) <= arm)
        vert = (np.abs(xx - cx) <= half) & (np.abs(yy - cy) <= arm)
        img[horiz | vert] = 1.0
    elif kind == "blob":
        r = size // 4
        img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = 1.0
    elif kind == "ring":
        r_out = size // 3
        r_in = max(1, r_out - thick)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        img[(d2 <= r_out * r_out) & (d2 > r_in * r_in)] = 1.0
    else:
        raise ValueError(f"unknown shape kind {kind!r} (choose from {SHAPE_KINDS})")
    return img


def synth_shapes(num_per_class: int, classes=("bar", "cross", "blob"), size: int = 16,
                 noise: float = 0.05, seed: int = 0, split_role: str = "train") -> Dataset:
    """Grayscale geometric shapes at jittered positions with uniform noise.

    Deterministic for a fixed seed: the same call yields a bit-identical
    dataset.
    """
    if size < 8:
        raise ValueError(f"size must be at least 8, got {size}")
    if noise < 0:
        raise ValueError(f"noise must be nonnegative, got {noise}")
    rng = np.random.default_rng(seed)
    jitter = size // 8
    images, labels = [], []
    for class_idx, kind in enumerate(classes):
        for _ in range(num_per_class):
            cy = size // 2 + int(rng.integers(-jitter, jitter + 1))
            cx = size // 2 + int(rng.integers(-jitter, jitter + 1))
            img = _paint_shape(kind, size, cy, cx)
            if noise:
                img = img + rng.uniform(-noise, noise, size=(size, size))
            images.append(np.clip(img, 0.0, 1.0))
            labels.append(class_idx)
    images = np.asarray(images)[:, None, :, :]
    return Dataset("synth:" + ",".join(classes), images, np.asarray(labels),
                   split_role=split_role, num_classes=len(classes))
