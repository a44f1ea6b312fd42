"""Bayesian signed test with a quantile ROPE for paired metric differences.

Differences d_i = metric(candidate) - metric(baseline) over matched
examples are trichotomized against a region of practical equivalence
(ROPE): below -rope, inside [-rope, rope], above rope. The posterior over
the three region probabilities is a Dirichlet with a weak symmetric prior
(total strength 1), sampled by normalized Gamma draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VERDICTS = ("left", "rope", "right", "inconclusive")


@dataclass
class PairedDifferences:
    """Positionally paired metric differences for one comparison."""

    values: np.ndarray
    metric: str = ""
    dataset_id: str = ""
    model_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 2:
            raise ValueError(f"need a vector of at least 2 paired differences, "
                             f"got shape {self.values.shape}")


@dataclass
class PosteriorTriple:
    """Monte Carlo samples of (p_left, p_rope, p_right) on the simplex."""

    samples: np.ndarray
    rope: float
    counts: tuple[int, int, int]

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def summary(self) -> dict:
        mean = self.mean
        return {
            "rope": self.rope,
            "counts": {"left": self.counts[0], "rope": self.counts[1],
                       "right": self.counts[2]},
            "mean": {"left": float(mean[0]), "rope": float(mean[1]),
                     "right": float(mean[2])},
            "mc_samples": int(self.samples.shape[0]),
        }


def rope_from_quantile(diffs, q: float = 0.25) -> float:
    """The q empirical quantile (linear interpolation) of |differences|."""
    values = np.abs(np.asarray(getattr(diffs, "values", diffs), dtype=np.float64))
    if values.size == 0:
        raise ValueError("no differences to take a quantile of")
    return float(np.quantile(values, q))


def signed_test(diffs, rope: float, mc_samples: int = 100_000,
                rng: np.random.Generator | None = None) -> PosteriorTriple:
    """Dirichlet posterior over the three ROPE regions of the differences.

    Prior strength 1 is split evenly (1/3 per region). Samples are Gamma
    draws normalized onto the simplex.
    """
    if mc_samples < 1000:
        raise ValueError(f"mc_samples must be at least 1000, got {mc_samples}")
    if rope < 0:
        raise ValueError(f"rope must be nonnegative, got {rope}")
    rng = rng if rng is not None else np.random.default_rng(0)
    d = np.asarray(getattr(diffs, "values", diffs), dtype=np.float64)
    counts = (int((d < -rope).sum()), int((np.abs(d) <= rope).sum()),
              int((d > rope).sum()))
    alpha = np.asarray(counts, dtype=np.float64) + 1.0 / 3.0
    gammas = rng.gamma(shape=alpha, size=(mc_samples, 3))
    samples = gammas / gammas.sum(axis=1, keepdims=True)
    return PosteriorTriple(samples=samples, rope=float(rope), counts=counts)


def verdict(posterior: PosteriorTriple, threshold: float = 0.95) -> str:
    """The region whose posterior mean exceeds the threshold, else inconclusive."""
    if not 0.5 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0.5, 1], got {threshold}")
    mean = posterior.mean
    for name, value in zip(("left", "rope", "right"), mean):
        if value > threshold:
            return name
    return "inconclusive"
