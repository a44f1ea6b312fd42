"""Local linear explanations over the segment feature space.

An explanation is a weighted ridge fit of the model's outputs on random
keep/hide masks around one image: g(z) = z @ coef + intercept, where z is
the binary mask in feature space. coef[i, j] is the importance of segment
i for class j.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import ShapeError
from .masking import SegmentGrid, apply_masks, build_grid, neutral_value


@dataclass(frozen=True)
class ExplainParams:
    n_samples: int = 1000
    sigma: float = 8.0
    ridge_alpha: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class NeighborhoodSample:
    """One perturbed point: keep-mask z, model output y, kernel weight w."""

    z: np.ndarray
    y: np.ndarray
    w: float


@dataclass
class Explanation:
    """Importance matrix (features x classes) plus intercept."""

    coef: np.ndarray
    intercept: np.ndarray
    grid: Optional[SegmentGrid] = None
    sample_count: int = 0
    sigma: float = 0.0
    ridge_alpha: float = 0.0
    seed: Optional[int] = None

    @property
    def num_features(self) -> int:
        return self.coef.shape[0]

    @property
    def num_classes(self) -> int:
        return self.coef.shape[1]

    def predict(self, z) -> np.ndarray:
        """Surrogate output for a binary keep vector (or FeatureMask)."""
        kept = np.asarray(getattr(z, "kept", z), dtype=np.float64)
        return kept @ self.coef + self.intercept

    def to_dict(self) -> dict:
        out = {
            "coef": self.coef.tolist(),
            "intercept": self.intercept.tolist(),
            "sample_count": self.sample_count,
            "sigma": self.sigma,
            "ridge_alpha": self.ridge_alpha,
            "seed": self.seed,
        }
        if self.grid is not None:
            out["grid"] = {
                "image_shape": list(self.grid.image_shape),
                "rows": self.grid.rows,
                "cols": self.grid.cols,
            }
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "Explanation":
        grid = None
        if "grid" in raw:
            g = raw["grid"]
            grid = build_grid(tuple(g["image_shape"]), g["rows"], g["cols"])
        return cls(coef=np.asarray(raw["coef"], dtype=np.float64),
                   intercept=np.asarray(raw["intercept"], dtype=np.float64),
                   grid=grid, sample_count=raw.get("sample_count", 0),
                   sigma=raw.get("sigma", 0.0), ridge_alpha=raw.get("ridge_alpha", 0.0),
                   seed=raw.get("seed"))


def as_predict_fn(model) -> Callable[[np.ndarray], np.ndarray]:
    """Accept a raw callable or anything with predict_proba (batch in, rows out)."""
    if callable(model) and not hasattr(model, "predict_proba"):
        return model
    return model.predict_proba


def sample_neighborhood(model, image: np.ndarray, grid: SegmentGrid, n: int,
                        sigma: float, rng: np.random.Generator) -> list[NeighborhoodSample]:
    """Draw n keep-masks (each feature kept with probability 0.5), query the model.

    The kernel weight is exp(-d^2 / sigma^2) with d the number of hidden
    features, so the unperturbed mask carries weight 1.
    """
    predict = as_predict_fn(model)
    f = grid.num_segments
    if n < f + 2:
        raise ValueError(f"need at least num_features + 2 = {f + 2} samples for the "
                         f"regression, got {n}")
    kept = rng.random((n, f)) < 0.5
    masked = apply_masks(image, grid, kept, neutral_value(image))
    outputs = np.asarray(predict(masked), dtype=np.float64)
    hidden = (~kept).sum(axis=1).astype(np.float64)
    weights = np.exp(-(hidden ** 2) / (sigma ** 2))
    return [NeighborhoodSample(z=kept[i], y=outputs[i], w=float(weights[i]))
            for i in range(n)]


def fit_lle(samples: list[NeighborhoodSample], ridge_alpha: float,
            grid: Optional[SegmentGrid] = None, sigma: float = 0.0,
            seed: Optional[int] = None) -> Explanation:
    """Weighted ridge regression via the normal equations; intercept unpenalized."""
    if not samples:
        raise ValueError("no samples to fit")
    z_mat = np.stack([np.asarray(s.z, dtype=np.float64) for s in samples])
    y_mat = np.stack([s.y for s in samples])
    w = np.asarray([s.w for s in samples], dtype=np.float64)
    n, f = z_mat.shape
    if n < f + 2:
        raise ValueError(f"regression underdetermined: {n} samples for {f} features")
    if w.sum() <= 0.0:
        raise ValueError("total sample weight is zero")
    design = np.hstack([z_mat, np.ones((n, 1))])
    normal = design.T @ (w[:, None] * design)
    normal[np.arange(f), np.arange(f)] += ridge_alpha
    rhs = design.T @ (w[:, None] * y_mat)
    try:
        beta = np.linalg.solve(normal, rhs)
    except np.linalg.LinAlgError as err:
        raise ValueError("singular normal matrix; use ridge_alpha > 0") from err
    return Explanation(coef=beta[:f], intercept=beta[f], grid=grid,
                       sample_count=n, sigma=sigma, ridge_alpha=ridge_alpha, seed=seed)


def explain(model, image: np.ndarray, grid: SegmentGrid,
            params: ExplainParams = ExplainParams()) -> Explanation:
    """Sample a neighborhood and fit the local linear surrogate; seeded."""
    if image.shape != grid.image_shape:
        raise ShapeError(f"image shape {image.shape} does not match grid {grid.image_shape}")
    rng = np.random.default_rng(params.seed)
    samples = sample_neighborhood(model, image, grid, params.n_samples, params.sigma, rng)
    return fit_lle(samples, params.ridge_alpha, grid=grid, sigma=params.sigma,
                   seed=params.seed)


def repeat_explanations(model, image: np.ndarray, grid: SegmentGrid,
                        params: ExplainParams, k: int) -> list[Explanation]:
    """k explanations of one image with independent streams spawned from the seed."""
    if k < 2:
        raise ValueError(f"need k >= 2 repeated explanations, got {k}")
    children = np.random.SeedSequence(params.seed).spawn(k)
    return [explain(model, image, grid, replace(params, seed=int(c.generate_state(1)[0])))
            for c in children]
