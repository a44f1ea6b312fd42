"""Symmetric-KL occlusion-consistency regularization.

The regularizer hides a random fraction of grid segments in every image,
fills them with the image mean color, and penalizes the symmetric KL
divergence between the model's predictions on the masked and unmasked
inputs. Gradients flow through both forward passes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .masking import apply_mask_batch, build_grid, select_hidden
from .models import Classifier, cross_entropy
from .tensor import Tensor


@dataclass(frozen=True)
class ShieldConfig:
    """Hiding percentage, segment grid, and objective weight."""

    lambda_pct: float = 10.0
    grid_rows: int = 8
    grid_cols: int = 8
    weight: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lambda_pct <= 100.0:
            raise ValueError(f"lambda_pct must be in [0, 100], got {self.lambda_pct}")
        if self.weight < 0.0:
            raise ValueError(f"weight must be nonnegative, got {self.weight}")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("grid must be at least 1x1")


def kl_div(p: Tensor, q: Tensor) -> Tensor:
    """Mean over the batch of sum_i p_i * ln(p_i / clamp(q_i)).

    Zero entries of p contribute exactly zero; q (and p, symmetrically)
    is clamped into [1e-7, 1] before the log so underflowed classes stay
    finite.
    """
    if p.shape != q.shape or p.data.ndim != 2:
        raise ShapeError(f"kl_div needs equal (batch, classes) shapes, got {p.shape} and {q.shape}")
    for name, t in (("p", p), ("q", q)):
        sums = t.data.sum(axis=1)
        bad = np.abs(sums - 1.0) > 1e-6
        if bad.any():
            row = int(np.argmax(bad))
            raise ValueError(f"{name} row {row} sums to {sums[row]}, not a probability row")
    log_ratio = T.sub(T.log(T.clamp(p)), T.log(T.clamp(q)))
    total = T.sum_all(T.mul(p, log_ratio))
    return T.mul(total, Tensor(1.0 / p.shape[0]))


def draw_masks(config: ShieldConfig, num_examples: int, num_segments: int,
               rng: np.random.Generator) -> np.ndarray:
    """One independent keep-vector per example, as a (n, segments) bool matrix."""
    return np.stack([select_hidden(num_segments, config.lambda_pct, rng).kept
                     for _ in range(num_examples)])


def shield_term(model: Classifier, batch: np.ndarray, config: ShieldConfig,
                rng: Optional[np.random.Generator] = None,
                masks: Optional[np.ndarray] = None,
                probs: Optional[Tensor] = None) -> Tensor:
    """KL(f(x'), f(x)) + KL(f(x), f(x')) with per-example fresh masks.

    ``masks`` overrides the random draw (used to freeze masks in gradient
    checks); ``probs`` may pass in an already-taped forward of the clean
    batch so it is not recomputed.
    """
    batch = np.asarray(batch, dtype=np.float64)
    grid = build_grid(model.input_shape, config.grid_rows, config.grid_cols)
    if masks is None:
        if rng is None:
            raise ValueError("shield_term needs an rng when masks are not given")
        masks = draw_masks(config, batch.shape[0], grid.num_segments, rng)
    fills = batch.mean(axis=(2, 3))
    masked = apply_mask_batch(batch, grid, masks, fills)
    p = model.forward(batch) if probs is None else probs
    p_masked = model.forward(masked)
    return T.add(kl_div(p_masked, p), kl_div(p, p_masked))


def total_objective(model: Classifier, batch: np.ndarray, labels: np.ndarray,
                    config: ShieldConfig, rng: Optional[np.random.Generator] = None,
                    masks: Optional[np.ndarray] = None,
                    stats: Optional[dict] = None) -> Tensor:
    """cross_entropy + weight * shield_term.

    With weight == 0 the masked forward passes are skipped entirely and
    the result is bitwise the plain classification loss. ``stats``, when
    given, receives the component values and the clean-batch
    probabilities.
    """
    probs = model.forward(batch)
    ce = cross_entropy(probs, labels)
    if config.weight == 0.0:
        loss = ce
        term_value = 0.0
    else:
        term = shield_term(model, batch, config, rng=rng, masks=masks, probs=probs)
        loss = T.add(ce, T.mul(Tensor(config.weight), term))
        term_value = term.item()
    if stats is not None:
        stats["cross_entropy"] = ce.item()
        stats["shield_term"] = term_value
        stats["probs"] = probs.data.copy()
    return loss
