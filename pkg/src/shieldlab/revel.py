"""Explanation-quality metrics for local linear explanations.

Five scores in [0, 1] per (model, image) pair. Agreement between two
output vectors is 1 - ||u - v||_2 / sqrt(2), clamped to [0, 1]; sqrt(2)
bounds the L2 distance between probability vectors, so identical outputs
score 1 and maximally distant ones score 0.

- local_concordance: surrogate vs model at the original example.
- local_fidelity: mean agreement over a random mask neighborhood.
- prescriptivity: agreement at the closest surrogate-predicted class flip.
- conciseness: how concentrated the importance mass is on few features.
- robustness: similarity among repeated stochastic explanations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .explain import (ExplainParams, Explanation, as_predict_fn,
                      repeat_explanations)
from .masking import SegmentGrid, apply_mask, apply_masks, neutral_value

METRIC_NAMES = ("local_concordance", "local_fidelity", "prescriptivity",
                "conciseness", "robustness")

METRICS_CSV_HEADER = ["example_id", *METRIC_NAMES, "prescriptivity_flipped"]

# Importance matrices whose largest row norm falls below this are treated as
# all-zero: fitting a constant model leaves solver noise around 1e-16.
ZERO_NORM_FLOOR = 1e-12


@dataclass
class MetricReport:
    """The five metric values for one example, plus generation metadata."""

    example_id: int
    local_concordance: float
    local_fidelity: float
    prescriptivity: float
    conciseness: float
    robustness: float
    metadata: dict = field(default_factory=dict)

    def value(self, metric: str) -> float:
        if metric not in METRIC_NAMES:
            raise KeyError(f"unknown metric {metric!r}")
        return getattr(self, metric)


@dataclass(frozen=True)
class PrescriptivityResult:
    value: float
    flipped: bool
    mask: Optional[np.ndarray]


def agreement(u: np.ndarray, v: np.ndarray) -> float:
    dist = float(np.linalg.norm(np.asarray(u, dtype=np.float64)
                                - np.asarray(v, dtype=np.float64)))
    return float(np.clip(1.0 - dist / np.sqrt(2.0), 0.0, 1.0))


def local_concordance(expl: Explanation, model, image: np.ndarray) -> float:
    """Agreement between surrogate and model at the unmasked example."""
    predict = as_predict_fn(model)
    g = expl.predict(np.ones(expl.num_features))
    f = np.asarray(predict(image[None]))[0]
    return agreement(g, f)


def local_fidelity(expl: Explanation, model, image: np.ndarray, grid: SegmentGrid,
                   m: int = 100, rng: Optional[np.random.Generator] = None) -> float:
    """Mean agreement over m fresh random masks (each feature kept w.p. 0.5)."""
    if m < 1:
        raise ValueError(f"need m >= 1 neighborhood points, got {m}")
    rng = rng if rng is not None else np.random.default_rng(0)
    predict = as_predict_fn(model)
    kept = rng.random((m, grid.num_segments)) < 0.5
    outputs = np.asarray(predict(apply_masks(image, grid, kept, neutral_value(image))))
    return float(np.mean([agreement(expl.predict(kept[i]), outputs[i])
                          for i in range(m)]))


def prescriptivity(expl: Explanation, model, image: np.ndarray,
                   grid: SegmentGrid) -> PrescriptivityResult:
    """Agreement at the closest surrogate class flip.

    Features are hidden greedily in decreasing order of their surrogate
    margin between the predicted class and the runner-up until the
    surrogate's argmax changes; if it never changes the score is 0 and
    the result is flagged unflipped.
    """
    predict = as_predict_fn(model)
    if np.linalg.norm(expl.coef, axis=1).max() < ZERO_NORM_FLOOR:
        return PrescriptivityResult(0.0, False, None)
    g_full = expl.predict(np.ones(expl.num_features))
    ranked = np.argsort(-g_full, kind="stable")
    c, c2 = int(ranked[0]), int(ranked[1])
    margin = expl.coef[:, c] - expl.coef[:, c2]
    order = np.argsort(-margin, kind="stable")
    kept = np.ones(expl.num_features, dtype=bool)
    for idx in order:
        kept[idx] = False
        if int(np.argmax(expl.predict(kept))) != c:
            masked = apply_mask(image, grid, _as_mask(kept), neutral_value(image))
            f = np.asarray(predict(masked[None]))[0]
            return PrescriptivityResult(agreement(expl.predict(kept), f), True, kept.copy())
    return PrescriptivityResult(0.0, False, None)


def _as_mask(kept: np.ndarray):
    from .masking import FeatureMask

    return FeatureMask(kept)


def conciseness(expl: Explanation) -> float:
    """1 when a single feature carries all importance, 0 when all carry equal."""
    n = expl.num_features
    if n < 2:
        raise ValueError(f"conciseness needs at least 2 features, got {n}")
    norms = np.linalg.norm(expl.coef, axis=1)
    top = norms.max()
    if top < ZERO_NORM_FLOOR:
        return 0.0
    scaled = norms / top
    return float((n - scaled.sum()) / (n - 1))


def robustness(expls: list[Explanation]) -> float:
    """Mean pairwise cosine similarity of flattened importance matrices.

    Negative cosines are clamped to 0; a pair containing an all-zero
    matrix contributes 0.
    """
    if len(expls) < 2:
        raise ValueError(f"robustness needs at least 2 explanations, got {len(expls)}")
    flats = [e.coef.ravel() for e in expls]
    norms = [float(np.linalg.norm(v)) for v in flats]
    scores = []
    for i, j in combinations(range(len(flats)), 2):
        if norms[i] < ZERO_NORM_FLOOR or norms[j] < ZERO_NORM_FLOOR:
            scores.append(0.0)
        elif np.array_equal(flats[i], flats[j]):
            scores.append(1.0)
        else:
            cos = float(flats[i] @ flats[j]) / (norms[i] * norms[j])
            scores.append(max(0.0, min(1.0, cos)))
    return float(np.mean(scores))


def report(model, image: np.ndarray, grid: SegmentGrid, params: ExplainParams,
           example_id: int = 0, repeats: int = 10,
           fidelity_samples: int = 100) -> MetricReport:
    """All five metrics for one example; deterministic per seed.

    Robustness uses `repeats` independently seeded explanations; the other
    four metrics are computed on the first one. The fidelity neighborhood
    uses a stream disjoint from the explanation streams.
    """
    expls = repeat_explanations(model, image, grid, params, k=repeats)
    first = expls[0]
    fid_rng = np.random.default_rng(
        np.random.SeedSequence(params.seed).spawn(repeats + 1)[-1])
    presc = prescriptivity(first, model, image, grid)
    return MetricReport(
        example_id=example_id,
        local_concordance=local_concordance(first, model, image),
        local_fidelity=local_fidelity(first, model, image, grid,
                                      m=fidelity_samples, rng=fid_rng),
        prescriptivity=presc.value,
        conciseness=conciseness(first),
        robustness=robustness(expls),
        metadata={
            "seed": params.seed,
            "n_samples": params.n_samples,
            "sigma": params.sigma,
            "ridge_alpha": params.ridge_alpha,
            "repeats": repeats,
            "fidelity_samples": fidelity_samples,
            "prescriptivity_flipped": presc.flipped,
        },
    )


def write_metric_reports(path, reports: list[MetricReport]) -> None:
    """One CSV row per example: id, the five metrics, and the flip flag."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_CSV_HEADER)
        for r in reports:
            writer.writerow([r.example_id,
                             *[repr(r.value(m)) for m in METRIC_NAMES],
                             int(r.metadata.get("prescriptivity_flipped", True))])


def read_metric_reports(path) -> list[MetricReport]:
    reports = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            reports.append(MetricReport(
                example_id=int(row["example_id"]),
                **{m: float(row[m]) for m in METRIC_NAMES},
                metadata={"prescriptivity_flipped": bool(int(row["prescriptivity_flipped"]))},
            ))
    return reports
