"""Command line surface: train, explain, metrics, compare, run-all.

Each verb reads an optional JSON config file (the same schema as
ExperimentConfig) plus flag overrides. Artifacts land under --out, which
defaults to $SHIELDLAB_ARTIFACTS or ./artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .experiment import (ExperimentConfig, compare_metric_reports, load_datasets,
                         manifest_for_lambda, metric_example_selection,
                         metric_reports_for_model, run_experiment,
                         write_bayes_artifacts)
from .explain import ExplainParams, explain
from .masking import build_grid
from .models import load_checkpoint, save_checkpoint
from .revel import read_metric_reports, write_metric_reports
from .training import evaluate, train


def _default_out() -> str:
    return os.environ.get("SHIELDLAB_ARTIFACTS", "artifacts")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (ExperimentConfig schema)")
    parser.add_argument("--out", default=None, help="artifact directory "
                        "(default: $SHIELDLAB_ARTIFACTS or ./artifacts)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--model", default=None, choices=["mlp", "conv"])
    parser.add_argument("--lambdas", default=None,
                        help="comma-separated hiding percentages, e.g. 0,2,5,10")
    parser.add_argument("--metric-examples", type=int, default=None)
    parser.add_argument("--mc-samples", type=int, default=None)


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {
        "seed": args.seed,
        "epochs": args.epochs,
        "batch_size": getattr(args, "batch_size", None),
        "model_id": args.model,
        "metric_examples": getattr(args, "metric_examples", None),
        "mc_samples": getattr(args, "mc_samples", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    if getattr(args, "lambdas", None):
        config.lambdas = tuple(float(v) for v in args.lambdas.split(","))
    return config


def _out_dir(args) -> Path:
    out = Path(args.out if args.out is not None else _default_out())
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    train_ds, test_ds = load_datasets(config)
    manifest = manifest_for_lambda(config, train_ds.name, args.lambda_pct)
    model, log = train(manifest, train_ds)
    best_epoch = int(np.argmin(log.val_losses)) + 1
    manifest.checkpoint_path = "checkpoint.bin"  # relative to the artifact dir
    save_checkpoint(out / "checkpoint.bin", model,
                    meta={"seed": manifest.seed, "epoch": best_epoch,
                          "val_loss": min(log.val_losses),
                          "dataset_id": manifest.dataset_id})
    manifest.to_json(out / "manifest.json")
    log.to_csv(out / "trainlog.csv")
    test_loss, test_acc = evaluate(model, test_ds)
    print(f"lambda={args.lambda_pct:g} test_acc={test_acc:.4f} test_loss={test_loss:.6f}")
    print(f"artifacts in {out}")
    return 0


def cmd_explain(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    model, _ = load_checkpoint(args.checkpoint)
    _, test_ds = load_datasets(config)
    if not 0 <= args.index < len(test_ds):
        print(f"error: --index {args.index} out of range for {len(test_ds)} test examples",
              file=sys.stderr)
        return 1
    grid = build_grid(test_ds.image_shape, config.grid_rows, config.grid_cols)
    params = ExplainParams(n_samples=config.explain_samples, sigma=config.explain_sigma,
                           ridge_alpha=config.explain_ridge_alpha, seed=config.seed)
    result = explain(model.predict_proba, test_ds.images[args.index], grid, params)
    payload = result.to_dict()
    payload["example_id"] = args.index
    path = out / f"explanation_{args.index}.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")
    return 0


def cmd_metrics(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    model, _ = load_checkpoint(args.checkpoint)
    _, test_ds = load_datasets(config)
    indices, seeds = metric_example_selection(config, len(test_ds))
    reports = metric_reports_for_model(model.predict_proba, test_ds, indices,
                                       seeds, config)
    path = out / args.out_name
    write_metric_reports(path, reports)
    print(f"wrote {path} ({len(reports)} examples)")
    return 0


def cmd_compare(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    baseline = read_metric_reports(args.baseline)
    candidate = read_metric_reports(args.candidate)
    comparisons = compare_metric_reports(baseline, candidate, config.mc_samples,
                                         config.verdict_threshold, rng_seed=config.seed)
    write_bayes_artifacts(out, comparisons, config.simplex_plot_rows)
    for metric, result in comparisons.items():
        mean = result["posterior"].mean
        print(f"{metric}: verdict={result['verdict']} rope={result['rope']:.6g} "
              f"mean=({mean[0]:.4f}, {mean[1]:.4f}, {mean[2]:.4f})")
    return 0


def cmd_run_all(args) -> int:
    config = _load_config(args)
    ok = run_experiment(config, _out_dir(args))
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shieldlab",
        description="Occlusion-consistency regularization lab: training, "
                    "explanations, metrics, and Bayesian comparison.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model at a single lambda")
    _add_common(p_train)
    p_train.add_argument("--lambda-pct", type=float, default=10.0)
    p_train.set_defaults(func=cmd_train)

    p_explain = sub.add_parser("explain", help="explain one test example")
    _add_common(p_explain)
    p_explain.add_argument("--checkpoint", required=True)
    p_explain.add_argument("--index", type=int, default=0)
    p_explain.set_defaults(func=cmd_explain)

    p_metrics = sub.add_parser("metrics", help="explanation-quality metrics "
                               "for a checkpoint over a test subset")
    _add_common(p_metrics)
    p_metrics.add_argument("--checkpoint", required=True)
    p_metrics.add_argument("--out-name", default="metrics.csv")
    p_metrics.set_defaults(func=cmd_metrics)

    p_compare = sub.add_parser("compare", help="Bayesian signed tests on two "
                               "metric report CSVs")
    _add_common(p_compare)
    p_compare.add_argument("--baseline", required=True)
    p_compare.add_argument("--candidate", required=True)
    p_compare.set_defaults(func=cmd_compare)

    p_all = sub.add_parser("run-all", help="full pipeline: sweep, metrics, tests")
    _add_common(p_all)
    p_all.set_defaults(func=cmd_run_all)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
