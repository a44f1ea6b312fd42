"""Small image classifiers (MLP and a two-conv net) with an Adam optimizer.

Architectures are deliberately tiny: inputs are (channels, height, width)
images, the head is always softmax, and every forward pass yields valid
probability rows. Parameters are float64 tensors from :mod:`.tensor` so
the whole model differentiates on a gradient tape.
"""

from __future__ import annotations

import json
import struct
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor

CHECKPOINT_MAGIC = b"SHCP"
CHECKPOINT_VERSION = 1


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    def __init__(self, w: Tensor, b: Tensor):
        self.w = w
        self.b = b

    @property
    def parameters(self):
        return [self.w, self.b]

    def __call__(self, x: Tensor) -> Tensor:
        return T.add_bias(T.matmul(x, self.w), self.b)


class Conv2d:
    """3x3 convolution, stride 1, zero 'same' padding, via im2col."""

    def __init__(self, w: Tensor, b: Tensor):
        self.w = w  # (out_c, in_c, kh, kw)
        self.b = b

    @property
    def parameters(self):
        return [self.w, self.b]

    def __call__(self, x: Tensor) -> Tensor:
        nb, c, h, wd = x.shape
        oc, ic, kh, kw = self.w.shape
        if ic != c:
            raise ShapeError(f"conv expects {ic} input channels, got {c}")
        pad = kh // 2
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        offsets = [(dy, dx) for dy in range(kh) for dx in range(kw)]
        cols = np.stack([xp[:, :, dy:dy + h, dx:dx + wd] for dy, dx in offsets], axis=2)
        cols = cols.transpose(0, 3, 4, 1, 2).reshape(nb * h * wd, c * kh * kw)
        wmat = self.w.data.reshape(oc, ic * kh * kw).T
        out = (cols @ wmat + self.b.data).reshape(nb, h, wd, oc).transpose(0, 3, 1, 2)

        def grad_fn(g):
            gmat = g.transpose(0, 2, 3, 1).reshape(nb * h * wd, oc)
            dw = (cols.T @ gmat).T.reshape(oc, ic, kh, kw)
            db = gmat.sum(axis=0)
            dcols = (gmat @ wmat.T).reshape(nb, h, wd, c, kh * kw).transpose(0, 3, 4, 1, 2)
            dxp = np.zeros_like(xp)
            for k, (dy, dx) in enumerate(offsets):
                dxp[:, :, dy:dy + h, dx:dx + wd] += dcols[:, :, k]
            dx = dxp[:, :, pad:pad + h, pad:pad + wd]
            return (dx, dw, db)

        return T.custom_op(out, (x, self.w, self.b), grad_fn, name="conv2d")


class Relu:
    parameters: list = []

    def __call__(self, x: Tensor) -> Tensor:
        return T.relu(x)


class MeanPool2x2:
    parameters: list = []

    def __call__(self, x: Tensor) -> Tensor:
        nb, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"2x2 mean pool needs even spatial dims, got {h}x{w}")
        out = x.data.reshape(nb, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

        def grad_fn(g):
            up = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0
            return (up,)

        return T.custom_op(out, (x,), grad_fn, name="meanpool2x2")


class GlobalMeanPool:
    parameters: list = []

    def __call__(self, x: Tensor) -> Tensor:
        nb, c, h, w = x.shape
        out = x.data.mean(axis=(2, 3))

        def grad_fn(g):
            return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),)

        return T.custom_op(out, (x,), grad_fn, name="globalmeanpool")


class Flatten:
    parameters: list = []

    def __call__(self, x: Tensor) -> Tensor:
        nb = x.shape[0]
        return T.reshape(x, (nb, int(np.prod(x.shape[1:]))))


class Classifier:
    """Layer stack ending in a softmax head; forward yields probability rows."""

    def __init__(self, arch: str, input_shape, num_classes: int, layers, hidden: int = 128):
        self.arch = arch
        self.input_shape = tuple(input_shape)  # (c, h, w)
        self.num_classes = num_classes
        self.layers = layers
        self.hidden = hidden

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters)
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def logits(self, batch) -> Tensor:
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        if x.data.ndim != 4 or tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(
                f"batch shape {x.shape} does not match input shape "
                f"(n, {', '.join(map(str, self.input_shape))})")
        for layer in self.layers:
            x = layer(x)
        return x

    def forward(self, batch) -> Tensor:
        return T.softmax(self.logits(batch))

    def predict_proba(self, images: np.ndarray, batch_size: int = 512) -> np.ndarray:
        """Plain numpy forward over (n, c, h, w) images, never taped."""
        images = np.asarray(images, dtype=np.float64)
        chunks = [self.forward(images[i:i + batch_size]).data
                  for i in range(0, len(images), batch_size)]
        return np.concatenate(chunks, axis=0)

    def copy(self) -> "Classifier":
        clone = build_classifier(self.arch, self.input_shape, self.num_classes,
                                 seed=0, hidden=self.hidden)
        for dst, src in zip(clone.parameters(), self.parameters()):
            dst.data[...] = src.data
        return clone


def build_classifier(arch: str, input_shape, num_classes: int, seed: int,
                     hidden: int = 128) -> Classifier:
    """Seeded construction; the same seed yields bit-identical parameters."""
    c, h, w = input_shape
    rng = np.random.default_rng(seed)
    if arch == "mlp":
        n_in = c * h * w
        layers = [
            Flatten(),
            Dense(Tensor(_kaiming_uniform(rng, (n_in, hidden), n_in)),
                  Tensor(np.zeros(hidden))),
            Relu(),
            Dense(Tensor(_kaiming_uniform(rng, (hidden, num_classes), hidden)),
                  Tensor(np.zeros(num_classes))),
        ]
    elif arch == "conv":
        layers = [
            Conv2d(Tensor(_kaiming_uniform(rng, (16, c, 3, 3), c * 9)),
                   Tensor(np.zeros(16))),
            Relu(),
            MeanPool2x2(),
            Conv2d(Tensor(_kaiming_uniform(rng, (32, 16, 3, 3), 16 * 9)),
                   Tensor(np.zeros(32))),
            Relu(),
            GlobalMeanPool(),
            Dense(Tensor(_kaiming_uniform(rng, (32, num_classes), 32)),
                  Tensor(np.zeros(num_classes))),
        ]
    else:
        raise ValueError(f"unknown architecture {arch!r} (expected 'mlp' or 'conv')")
    return Classifier(arch, input_shape, num_classes, layers, hidden=hidden)


class Adam:
    """Adam with bias correction and an additive L2 term on the gradient.

    The decay term weight_decay * w joins the raw gradient before the
    moment updates, so it shapes both m and v.
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 1e-4):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise ValueError(f"parameter {i} has no gradient; run backward first")
            g = p.grad + self.weight_decay * p.data if self.weight_decay else p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1 ** t)
            v_hat = self.v[i] / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def cross_entropy(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of the true classes, log-clamped."""
    labels = np.asarray(labels)
    nb, k = probs.shape
    if labels.shape != (nb,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {nb}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    onehot = np.zeros((nb, k))
    onehot[np.arange(nb), labels] = 1.0
    picked = T.mul(Tensor(onehot), T.log(T.clamp(probs)))
    return T.mul(T.sum_all(picked), Tensor(-1.0 / nb))


def save_checkpoint(path, model: Classifier, meta: Optional[dict] = None) -> None:
    """Versioned container: magic, JSON header, then little-endian f64 blocks."""
    params = model.parameters()
    header = {
        "format_version": CHECKPOINT_VERSION,
        "arch": model.arch,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "hidden": model.hidden,
        "param_shapes": [list(p.shape) for p in params],
    }
    header.update(meta or {})
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[Classifier, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
        model = build_classifier(header["arch"], header["input_shape"],
                                 header["num_classes"], seed=0,
                                 hidden=header.get("hidden", 128))
        for p, shape in zip(model.parameters(), header["param_shapes"]):
            if list(p.shape) != shape:
                raise ValueError(f"checkpoint shape {shape} does not match model {p.shape}")
            raw = fh.read(p.data.size * 8)
            if len(raw) != p.data.size * 8:
                raise ValueError("checkpoint truncated")
            p.data[...] = np.frombuffer(raw, dtype="<f8").reshape(p.shape)
    return model, header
