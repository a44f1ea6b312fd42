"""Experiment orchestration: lambda sweep, metric reports, Bayesian comparison.

One experiment trains a model per lambda value (0 is the unregularized
baseline), evaluates each on the held-out test set, computes explanation
quality metrics for the baseline and the best regularized model on a
shared example subset, and runs one pooled Bayesian signed test per
metric on the paired differences. Everything is seeded; rerunning a
config reproduces the artifact tree bit for bit apart from wallclock
columns.
"""

from __future__ import annotations

import csv
import json
import traceback
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import Dataset, load_idx, synth_shapes
from .explain import ExplainParams
from .masking import build_grid
from .models import save_checkpoint
from .revel import METRIC_NAMES, report, write_metric_reports
from .shield import ShieldConfig
from .stats import PairedDifferences, rope_from_quantile, signed_test, verdict
from .training import OptimizerConfig, RunManifest, evaluate, train

SUMMARY_HEADER = ["model", "lambda", "test_acc", "test_loss"]
CONVERGENCE_HEADER = ["lambda", "epoch", "train_loss", "train_acc", "val_loss",
                      "val_acc", "shield_term_mean"]
VIOLIN_HEADER = ["metric", "lambda", "example_id", "value"]
SIMPLEX_HEADER = ["p_left", "p_rope", "p_right"]

# Distinguishes experiment-level streams from the per-run streams that
# train() derives from the bare seed.
_EXPERIMENT_STREAM_TAG = 101


def _default_dataset() -> dict:
    return {"kind": "synthetic", "classes": ["bar", "cross", "blob"],
            "train_per_class": 67, "test_per_class": 67, "size": 16, "noise": 0.1}


@dataclass
class ExperimentConfig:
    """Resolved settings for one full pipeline run."""

    dataset: dict = field(default_factory=_default_dataset)
    model_id: str = "mlp"
    seed: int = 0
    epochs: int = 30
    batch_size: int = 32
    lambdas: tuple = (0.0, 2.0, 5.0, 10.0, 15.0, 20.0)
    shield_weight: float = 1.0
    lr: float = 1e-3
    weight_decay: float = 1e-4
    grid_rows: int = 8
    grid_cols: int = 8
    explain_samples: int = 1000
    explain_sigma: float = 8.0
    explain_ridge_alpha: float = 1e-3
    explain_repeats: int = 10
    metric_examples: int = 50
    fidelity_samples: int = 100
    mc_samples: int = 100_000
    verdict_threshold: float = 0.95
    simplex_plot_rows: int = 2000

    def __post_init__(self):
        self.lambdas = tuple(float(v) for v in self.lambdas)
        if any(not 0.0 <= v <= 100.0 for v in self.lambdas):
            raise ValueError(f"lambda values must lie in [0, 100], got {self.lambdas}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path) -> None:
        raw = asdict(self)
        raw["lambdas"] = list(self.lambdas)
        with open(path, "w") as fh:
            json.dump(raw, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _experiment_streams(config: ExperimentConfig) -> list:
    """Five fixed substreams: train-data, test-data, example-select, explain-seeds, bayes."""
    return np.random.SeedSequence([config.seed, _EXPERIMENT_STREAM_TAG]).spawn(5)


def metric_example_selection(config: ExperimentConfig, n_test: int):
    """Deterministic test-subset indices and per-example explanation seeds."""
    streams = _experiment_streams(config)
    select_rng = np.random.default_rng(streams[2])
    n = min(config.metric_examples, n_test)
    indices = np.sort(select_rng.choice(n_test, size=n, replace=False))
    return indices, streams[3].generate_state(n)


def load_datasets(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Materialize the train/test pair named by the config's dataset spec."""
    spec = dict(config.dataset)
    kind = spec.pop("kind", "synthetic")
    if kind == "synthetic":
        gen = _experiment_streams(config)[:2]
        common = dict(classes=tuple(spec.get("classes", ["bar", "cross", "blob"])),
                      size=int(spec.get("size", 16)), noise=float(spec.get("noise", 0.1)))
        train_ds = synth_shapes(int(spec.get("train_per_class", 67)),
                                seed=int(gen[0].generate_state(1)[0]),
                                split_role="train", **common)
        test_ds = synth_shapes(int(spec.get("test_per_class", 67)),
                               seed=int(gen[1].generate_state(1)[0]),
                               split_role="test", **common)
        return train_ds, test_ds
    if kind == "idx":
        train_ds = load_idx(spec["train_images"], spec["train_labels"],
                            name=spec.get("name", "idx"), split_role="train")
        test_ds = load_idx(spec["test_images"], spec["test_labels"],
                           name=spec.get("name", "idx"), split_role="test")
        if spec.get("limit_train"):
            train_ds = train_ds.subset(np.arange(int(spec["limit_train"])))
        if spec.get("limit_test"):
            test_ds = test_ds.subset(np.arange(int(spec["limit_test"])))
        return train_ds, test_ds
    raise ValueError(f"unknown dataset kind {kind!r} (expected 'synthetic' or 'idx')")


def manifest_for_lambda(config: ExperimentConfig, dataset_id: str,
                        lambda_pct: float) -> RunManifest:
    """Lambda 0 denotes the baseline: the regularizer is skipped entirely."""
    weight = config.shield_weight if lambda_pct > 0 else 0.0
    return RunManifest(
        dataset_id=dataset_id, model_id=config.model_id, seed=config.seed,
        shield=ShieldConfig(lambda_pct=lambda_pct, grid_rows=config.grid_rows,
                            grid_cols=config.grid_cols, weight=weight),
        optimizer=OptimizerConfig(lr=config.lr, weight_decay=config.weight_decay),
        epochs=config.epochs, batch_size=config.batch_size)


def _lambda_tag(value: float) -> str:
    return f"{value:g}"


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    return repr(float(value))


def compare_metric_reports(baseline_reports, candidate_reports, mc_samples: int,
                           threshold: float, rng_seed: int,
                           dataset_id: str = "", model_id: str = "") -> dict:
    """Pooled Bayesian signed test per metric on paired per-example differences.

    Returns {metric: {"posterior": PosteriorTriple, "verdict": str, ...}}.
    """
    base_ids = [r.example_id for r in baseline_reports]
    cand_ids = [r.example_id for r in candidate_reports]
    if base_ids != cand_ids:
        raise ValueError("metric reports are not paired: example ids differ")
    streams = np.random.SeedSequence(rng_seed).spawn(len(METRIC_NAMES))
    out = {}
    for metric, stream in zip(METRIC_NAMES, streams):
        d = np.asarray([c.value(metric) - b.value(metric)
                        for b, c in zip(baseline_reports, candidate_reports)])
        diffs = PairedDifferences(d, metric=metric, dataset_id=dataset_id,
                                  model_id=model_id)
        rope = rope_from_quantile(diffs)
        posterior = signed_test(diffs, rope, mc_samples=mc_samples,
                                rng=np.random.default_rng(stream))
        out[metric] = {"posterior": posterior,
                       "verdict": verdict(posterior, threshold),
                       "rope": rope}
    return out


def write_bayes_artifacts(out_dir: Path, comparisons: dict, plot_rows: int,
                          extra: dict | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for metric, result in comparisons.items():
        posterior = result["posterior"]
        payload = posterior.summary()
        payload.update({"metric": metric, "verdict": result["verdict"]})
        payload.update(extra or {})
        with open(out_dir / f"{metric}_posterior.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        rows = [[_fmt(a), _fmt(b), _fmt(c)]
                for a, b, c in posterior.samples[:plot_rows]]
        _write_csv(out_dir / f"{metric}_simplex.csv", SIMPLEX_HEADER, rows)


def metric_reports_for_model(model, dataset: Dataset, example_indices, seeds,
                             config: ExperimentConfig) -> list:
    grid = build_grid(dataset.image_shape, config.grid_rows, config.grid_cols)
    reports = []
    for idx, seed in zip(example_indices, seeds):
        params = ExplainParams(n_samples=config.explain_samples,
                               sigma=config.explain_sigma,
                               ridge_alpha=config.explain_ridge_alpha,
                               seed=int(seed))
        reports.append(report(model, dataset.images[idx], grid, params,
                              example_id=int(idx), repeats=config.explain_repeats,
                              fidelity_samples=config.fidelity_samples))
    return reports


def run_experiment(config: ExperimentConfig, out_dir) -> bool:
    """Run every stage, writing artifacts under out_dir; True iff all completed.

    On failure the partial artifact tree is kept and the traceback goes to
    errors.log.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.to_json(out / "config.json")
    summary: dict = {"ok": False, "stages": {}, "notices": []}
    stage = "load-data"
    try:
        train_ds, test_ds = load_datasets(config)
        summary["stages"][stage] = "ok"

        stage = "train-sweep"
        trained = {}
        summary_rows = []
        convergence_rows = []
        for lam in config.lambdas:
            manifest = manifest_for_lambda(config, train_ds.name, lam)
            run_dir = out / "runs" / f"lambda_{_lambda_tag(lam)}"
            run_dir.mkdir(parents=True, exist_ok=True)
            model, log = train(manifest, train_ds)
            best_epoch = int(np.argmin(log.val_losses)) + 1
            manifest.checkpoint_path = "checkpoint.bin"  # relative to the run dir
            save_checkpoint(run_dir / "checkpoint.bin", model,
                            meta={"seed": manifest.seed, "epoch": best_epoch,
                                  "val_loss": min(log.val_losses),
                                  "dataset_id": manifest.dataset_id})
            manifest.to_json(run_dir / "manifest.json")
            log.to_csv(run_dir / "trainlog.csv")
            test_loss, test_acc = evaluate(model, test_ds)
            trained[lam] = model
            summary_rows.append([config.model_id, _lambda_tag(lam),
                                 _fmt(test_acc), _fmt(test_loss)])
            convergence_rows.extend(
                [_lambda_tag(lam), r.epoch, _fmt(r.train_loss), _fmt(r.train_acc),
                 _fmt(r.val_loss), _fmt(r.val_acc), _fmt(r.shield_term_mean)]
                for r in log.records)
        _write_csv(out / "summary.csv", SUMMARY_HEADER, summary_rows)
        _write_csv(out / "convergence.csv", CONVERGENCE_HEADER, convergence_rows)
        summary["test_results"] = {
            _lambda_tag(lam): {"acc": float(row[2]), "loss": float(row[3])}
            for lam, row in zip(config.lambdas, summary_rows)}
        summary["stages"][stage] = "ok"

        nonzero = [lam for lam in config.lambdas if lam > 0]
        if not nonzero or 0.0 not in config.lambdas:
            notice = ("Bayesian comparison skipped: it needs both a baseline "
                      "(lambda 0) and at least one nonzero lambda")
            summary["notices"].append(notice)
            print(f"notice: {notice}")
            summary["stages"]["metrics"] = "skipped"
            summary["stages"]["bayes"] = "skipped"
        else:
            best_lambda = max(nonzero,
                              key=lambda lam: (summary["test_results"][_lambda_tag(lam)]["acc"], -lam))
            summary["best_lambda"] = best_lambda

            stage = "metrics"
            example_indices, example_seeds = metric_example_selection(config, len(test_ds))
            reports = {}
            for lam in (0.0, best_lambda):
                reports[lam] = metric_reports_for_model(
                    trained[lam].predict_proba, test_ds, example_indices,
                    example_seeds, config)
            metrics_dir = out / "metrics"
            metrics_dir.mkdir(exist_ok=True)
            violin_rows = []
            for lam in (0.0, best_lambda):
                write_metric_reports(
                    metrics_dir / f"metrics_lambda_{_lambda_tag(lam)}.csv", reports[lam])
                violin_rows.extend(
                    [metric, _lambda_tag(lam), r.example_id, _fmt(r.value(metric))]
                    for metric in METRIC_NAMES for r in reports[lam])
            _write_csv(metrics_dir / "violin.csv", VIOLIN_HEADER, violin_rows)
            summary["stages"][stage] = "ok"

            stage = "bayes"
            comparisons = compare_metric_reports(
                reports[0.0], reports[best_lambda], config.mc_samples,
                config.verdict_threshold,
                rng_seed=int(_experiment_streams(config)[4].generate_state(1)[0]),
                dataset_id=train_ds.name, model_id=config.model_id)
            write_bayes_artifacts(out / "bayes", comparisons, config.simplex_plot_rows,
                                  extra={"baseline_lambda": 0.0,
                                         "candidate_lambda": best_lambda})
            summary["verdicts"] = {m: r["verdict"] for m, r in comparisons.items()}
            summary["stages"][stage] = "ok"

        summary["ok"] = True
    except Exception:
        summary["stages"][stage] = "failed"
        with open(out / "errors.log", "a") as fh:
            fh.write(f"stage {stage} failed\n")
            fh.write(traceback.format_exc())
            fh.write("\n")
        print(f"error: stage {stage} failed; see {out / 'errors.log'}")
    with open(out / "run_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary["ok"]
