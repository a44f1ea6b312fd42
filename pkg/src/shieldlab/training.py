"""Training loop: seeded 90/10 split, fixed epoch budget, best-epoch selection.

Each run is fully determined by its manifest plus the dataset bytes. The
run seed is fanned out into independent streams for the split shuffle,
parameter init, batch order, and mask draws, so disabling the regularizer
does not perturb the remaining streams.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import NonFiniteError, TrainingDiverged
from .models import Adam, Classifier, build_classifier
from .shield import ShieldConfig, total_objective
from .tensor import EPS_CLAMP, GradientTape, backward
from .version import __version__

TRAINLOG_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc",
                   "shield_term_mean", "wallclock_ms"]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    shield_term_mean: float
    wallclock_ms: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch != self.records[-1].epoch + 1:
            raise ValueError(f"epoch {record.epoch} does not follow {self.records[-1].epoch}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRAINLOG_HEADER)
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc),
                                 repr(r.val_loss), repr(r.val_acc),
                                 repr(r.shield_term_mean), repr(r.wallclock_ms)])


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4


@dataclass
class RunManifest:
    """Everything that pins down one training run, serializable to JSON."""

    dataset_id: str
    model_id: str
    seed: int
    shield: ShieldConfig = field(default_factory=ShieldConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    epochs: int = 80
    batch_size: int = 32
    train_fraction: float = 0.9
    checkpoint_path: Optional[str] = None
    version: str = __version__

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "RunManifest":
        with open(path) as fh:
            raw = json.load(fh)
        raw["shield"] = ShieldConfig(**raw["shield"])
        raw["optimizer"] = OptimizerConfig(**raw["optimizer"])
        return cls(**raw)


def split(dataset: Dataset, seed: int, train_fraction: float = 0.9) -> tuple[Dataset, Dataset]:
    """Seeded shuffle then partition; the two parts are disjoint and exhaustive."""
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(dataset))
    n_train = int(round(len(dataset) * train_fraction))
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])


def evaluate(model: Classifier, dataset: Dataset, batch_size: int = 256) -> tuple[float, float]:
    """Mean clamped negative log-likelihood and argmax accuracy; no gradients."""
    probs = model.predict_proba(dataset.images, batch_size=batch_size)
    picked = probs[np.arange(len(dataset)), dataset.labels]
    loss = float(-np.log(np.clip(picked, EPS_CLAMP, 1.0)).sum() / len(dataset))
    acc = float((probs.argmax(axis=1) == dataset.labels).mean())
    return loss, acc


def train(manifest: RunManifest, dataset: Dataset) -> tuple[Classifier, TrainLog]:
    """Run the configured epoch budget and return the best-validation model.

    Selection is by validation loss; on ties the earliest epoch wins.
    Aborts with a diagnostic if any batch produces a non-finite loss.
    """
    root = np.random.SeedSequence(manifest.seed)
    split_ss, init_ss, order_ss, mask_ss = root.spawn(4)
    train_ds, val_ds = split(dataset, int(split_ss.generate_state(1)[0]),
                             manifest.train_fraction)
    model = build_classifier(manifest.model_id, dataset.image_shape, dataset.num_classes,
                             seed=int(init_ss.generate_state(1)[0]))
    optimizer = Adam(model.parameters(), **asdict(manifest.optimizer))
    order_rng = np.random.default_rng(order_ss)
    mask_rng = np.random.default_rng(mask_ss)

    log = TrainLog()
    best_loss = np.inf
    best_params: Optional[list[np.ndarray]] = None
    n = len(train_ds)
    for epoch in range(1, manifest.epochs + 1):
        tick = time.perf_counter()
        order = order_rng.permutation(n)
        ce_sum = 0.0
        correct = 0
        term_sum = 0.0
        batches = 0
        for start in range(0, n, manifest.batch_size):
            idx = order[start:start + manifest.batch_size]
            xb, yb = train_ds.images[idx], train_ds.labels[idx]
            stats: dict = {}
            model.zero_grad()
            try:
                with GradientTape() as tape:
                    loss = total_objective(model, xb, yb, manifest.shield,
                                           rng=mask_rng, stats=stats)
                backward(loss, tape)
            except NonFiniteError as err:
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batches}: {err}") from err
            optimizer.step()
            ce_sum += stats["cross_entropy"] * len(idx)
            correct += int((stats["probs"].argmax(axis=1) == yb).sum())
            term_sum += stats["shield_term"]
            batches += 1
        val_loss, val_acc = evaluate(model, val_ds)
        log.append(EpochRecord(
            epoch=epoch,
            train_loss=ce_sum / n,
            train_acc=correct / n,
            val_loss=val_loss,
            val_acc=val_acc,
            shield_term_mean=term_sum / batches,
            wallclock_ms=(time.perf_counter() - tick) * 1000.0,
        ))
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = [p.data.copy() for p in model.parameters()]

    best_model = model.copy()
    for p, snapshot in zip(best_model.parameters(), best_params):
        p.data[...] = snapshot
    return best_model, log
