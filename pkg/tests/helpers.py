"""Shared test oracles: finite differences and an independent training loop."""

from __future__ import annotations

import numpy as np

from shieldlab import GradientTape, backward
from shieldlab.models import Adam, build_classifier, cross_entropy
from shieldlab.training import EpochRecord, TrainLog, evaluate, split


def finite_difference_grads(f, params, eps=1e-5):
    """Central finite differences of the scalar f() w.r.t. each parameter entry.

    f must depend on params only through their .data buffers.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f()
            flat[i] = orig - eps
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    """max |a - n| / max(|a|, |n|, floor) over all parameter entries."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def autodiff_grads(make_loss, params):
    """Fresh-tape gradient of make_loss() for each parameter, as arrays."""
    for p in params:
        p.zero_grad()
    with GradientTape() as tape:
        loss = make_loss()
    backward(loss, tape)
    return [p.grad.copy() for p in params]


def plain_training_loop(manifest, dataset):
    """Independent re-implementation of the unregularized training loop.

    Mirrors the seeded stream layout of training.train but computes the
    objective as bare cross-entropy, with no reference to the regularizer
    code path. Wallclock fields are zeroed.
    """
    root = np.random.SeedSequence(manifest.seed)
    split_ss, init_ss, order_ss, _mask_ss = root.spawn(4)
    train_ds, val_ds = split(dataset, int(split_ss.generate_state(1)[0]),
                             manifest.train_fraction)
    model = build_classifier(manifest.model_id, dataset.image_shape,
                             dataset.num_classes,
                             seed=int(init_ss.generate_state(1)[0]))
    optimizer = Adam(model.parameters(), lr=manifest.optimizer.lr,
                     beta1=manifest.optimizer.beta1, beta2=manifest.optimizer.beta2,
                     eps=manifest.optimizer.eps,
                     weight_decay=manifest.optimizer.weight_decay)
    order_rng = np.random.default_rng(order_ss)

    log = TrainLog()
    n = len(train_ds)
    for epoch in range(1, manifest.epochs + 1):
        order = order_rng.permutation(n)
        ce_sum = 0.0
        correct = 0
        for start in range(0, n, manifest.batch_size):
            idx = order[start:start + manifest.batch_size]
            xb, yb = train_ds.images[idx], train_ds.labels[idx]
            model.zero_grad()
            with GradientTape() as tape:
                probs = model.forward(xb)
                loss = cross_entropy(probs, yb)
            backward(loss, tape)
            optimizer.step()
            ce_sum += loss.item() * len(idx)
            correct += int((probs.data.argmax(axis=1) == yb).sum())
        val_loss, val_acc = evaluate(model, val_ds)
        log.append(EpochRecord(epoch=epoch, train_loss=ce_sum / n,
                               train_acc=correct / n, val_loss=val_loss,
                               val_acc=val_acc, shield_term_mean=0.0,
                               wallclock_ms=0.0))
    return model, log


def artifact_tree_digest(root):
    """Relative path -> file bytes, with wallclock columns stripped from trainlogs."""
    from pathlib import Path

    root = Path(root)
    digest = {}
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        data = path.read_bytes()
        if path.name == "trainlog.csv":
            lines = data.decode().splitlines()
            header = lines[0].split(",")
            drop = header.index("wallclock_ms")
            kept_lines = []
            for line in lines:
                cells = line.split(",")
                kept_lines.append(",".join(cells[:drop] + cells[drop + 1:]))
            data = "\n".join(kept_lines).encode()
        digest[str(path.relative_to(root))] = data
    return digest


def logs_equal_ignoring_wallclock(a: TrainLog, b: TrainLog) -> bool:
    if len(a) != len(b):
        return False
    for ra, rb in zip(a.records, b.records):
        if (ra.epoch, ra.train_loss, ra.train_acc, ra.val_loss, ra.val_acc,
                ra.shield_term_mean) != (rb.epoch, rb.train_loss, rb.train_acc,
                                         rb.val_loss, rb.val_acc, rb.shield_term_mean):
            return False
    return True
