"""Square-segment feature space and the mean-color hiding transformation.

Images are partitioned into a fixed grid of rectangular segments; each
segment is one explainable feature. Hiding a feature replaces its pixels
with a neutral fill color, by default the per-channel mean of the whole
image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class SegmentGrid:
    """Tiling of an image into rows x cols rectangles.

    segment_bounds holds (top, left, height, width) per segment in
    row-major order; segment_map assigns every pixel its segment id.
    """

    image_shape: tuple
    rows: int
    cols: int
    segment_bounds: tuple
    segment_map: np.ndarray

    @property
    def num_segments(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class FeatureMask:
    """Boolean keep/hide flags, one per grid segment (True = visible)."""

    kept: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kept", np.asarray(self.kept, dtype=bool))
        if self.kept.ndim != 1 or self.kept.size == 0:
            raise ShapeError(f"mask must be a nonempty vector, got shape {self.kept.shape}")

    def __len__(self) -> int:
        return self.kept.size

    @property
    def hidden_count(self) -> int:
        return int((~self.kept).sum())


def build_grid(image_shape, rows: int, cols: int) -> SegmentGrid:
    """Tile (c, h, w) into rows x cols segments.

    Segment heights are h // rows except the last row, which absorbs the
    remainder; columns likewise.
    """
    c, h, w = image_shape
    if rows < 1 or cols < 1:
        raise ValueError(f"grid must be at least 1x1, got {rows}x{cols}")
    if rows > h or cols > w:
        raise ShapeError(f"grid {rows}x{cols} exceeds image dims {h}x{w}")
    base_h, base_w = h // rows, w // cols
    tops = [r * base_h for r in range(rows)]
    lefts = [col * base_w for col in range(cols)]
    heights = [base_h] * (rows - 1) + [h - base_h * (rows - 1)]
    widths = [base_w] * (cols - 1) + [w - base_w * (cols - 1)]
    bounds = []
    seg_map = np.empty((h, w), dtype=np.int32)
    for r in range(rows):
        for col in range(cols):
            top, left = tops[r], lefts[col]
            sh, sw = heights[r], widths[col]
            bounds.append((top, left, sh, sw))
            seg_map[top:top + sh, left:left + sw] = r * cols + col
    return SegmentGrid((c, h, w), rows, cols, tuple(bounds), seg_map)


def neutral_value(image: np.ndarray) -> np.ndarray:
    """Per-channel mean over all pixels of a (c, h, w) image."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ShapeError(f"expected (c, h, w) image, got shape {image.shape}")
    return image.mean(axis=(1, 2))


def select_hidden(num_segments: int, lambda_pct: float, rng: np.random.Generator) -> FeatureMask:
    """Hide a uniformly drawn set of round(lambda_pct% of segments) features.

    Rounding is half-up; any positive percentage hides at least one
    segment.
    """
    if not 0.0 <= lambda_pct <= 100.0:
        raise ValueError(f"lambda_pct must be in [0, 100], got {lambda_pct}")
    k = int(np.floor(num_segments * lambda_pct / 100.0 + 0.5))
    if lambda_pct > 0.0 and k == 0:
        k = 1
    kept = np.ones(num_segments, dtype=bool)
    if k:
        kept[rng.choice(num_segments, size=k, replace=False)] = False
    return FeatureMask(kept)


def apply_mask(image: np.ndarray, grid: SegmentGrid, mask: FeatureMask,
               fill: np.ndarray) -> np.ndarray:
    """Replace pixels of hidden segments with the fill color, channel-wise.

    Kept pixels are copied bit-identically; the input is not modified.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape != grid.image_shape:
        raise ShapeError(f"image shape {image.shape} does not match grid {grid.image_shape}")
    if len(mask) != grid.num_segments:
        raise ShapeError(f"mask has {len(mask)} entries for {grid.num_segments} segments")
    fill = np.asarray(fill, dtype=np.float64).reshape(grid.image_shape[0], 1, 1)
    return np.where(mask.kept[grid.segment_map][None, :, :], image, fill)


def apply_masks(image: np.ndarray, grid: SegmentGrid, kept: np.ndarray,
                fill: np.ndarray) -> np.ndarray:
    """Vectorized apply_mask for a (n, num_segments) keep matrix; returns (n, c, h, w)."""
    image = np.asarray(image, dtype=np.float64)
    kept = np.asarray(kept, dtype=bool)
    fill = np.asarray(fill, dtype=np.float64).reshape(1, grid.image_shape[0], 1, 1)
    pixel_keep = kept[:, grid.segment_map]
    return np.where(pixel_keep[:, None, :, :], image[None], fill)


def apply_mask_batch(images: np.ndarray, grid: SegmentGrid, kept: np.ndarray,
                     fills: np.ndarray) -> np.ndarray:
    """Per-image masks and fills: images (n,c,h,w), kept (n,segments), fills (n,c)."""
    pixel_keep = np.asarray(kept, dtype=bool)[:, grid.segment_map]
    fills = np.asarray(fills, dtype=np.float64)[:, :, None, None]
    return np.where(pixel_keep[:, None, :, :], images, fills)
