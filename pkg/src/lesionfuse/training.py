"""Losses, the Adam optimizer, and the training loop with best-epoch snapshots.

Hyperparameter defaults are fixed: batch size 32, 50 epochs, Adam at
learning rate 1e-4 with beta1 0.9, beta2 0.999, eps 1e-8.  The default loss
is binary cross-entropy over the single sigmoid score; a two-unit softmax
with categorical cross-entropy is available as ``loss="softmax"``.

Precision policy: model parameters stay float32, but Adam keeps its moment
estimates in float64 and applies each update in float64 with a single final
rounding to float32.  Loss reductions accumulate in float64.  Together with
seeded shuffling (a fresh generator per epoch derived from [seed, epoch]),
a (dataset, config, seed) triple fully determines the training trajectory.

Training keeps the parameter snapshot of the epoch with the lowest
validation loss (first occurrence on ties) rather than the final epoch.
"""

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor, _result
from .checkpoint import CHECKPOINT_VERSION, Checkpoint

__all__ = [
    "TrainingError",
    "LOSS_KINDS",
    "binary_cross_entropy",
    "categorical_cross_entropy",
    "Adam",
    "TrainConfig",
    "TrainHistory",
    "evaluate",
    "train",
]

LOG_CLAMP = 1e-7
LOSS_KINDS = ("bce", "softmax")


class TrainingError(Exception):
    """Invalid training inputs or a diverged optimization."""


def _check_labels(labels, n):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise TrainingError(f"labels shape {labels.shape} does not match batch of {n}")
    bad = np.nonzero((labels != 0) & (labels != 1))[0]
    if bad.size:
        raise TrainingError(
            f"label at index {bad[0]} is {labels[bad[0]]!r}, expected 0 or 1"
        )
    return labels.astype(np.int64)


def binary_cross_entropy(scores, labels):
    """Mean of -[y ln s + (1-y) ln(1-s)] with s clamped to [1e-7, 1-1e-7]."""
    if scores.data.ndim != 1:
        raise TrainingError(f"scores must be 1-D, got shape {scores.data.shape}")
    n = scores.data.size
    if n == 0:
        raise TrainingError("empty batch")
    labels = _check_labels(labels, n)
    y = labels.astype(np.float64)
    s = np.clip(scores.data.astype(np.float64), LOG_CLAMP, 1.0 - LOG_CLAMP)
    per_sample = -(y * np.log(s) + (1.0 - y) * np.log1p(-s))
    out = np.float32(per_sample.mean())

    def grad_fn(g):
        inside = (scores.data > LOG_CLAMP) & (scores.data < 1.0 - LOG_CLAMP)
        d = np.where(inside, (s - y) / (s * (1.0 - s)) / n, 0.0)
        scores.grad += g * d.astype(np.float32)

    return _result("binary_cross_entropy", out, (scores,), grad_fn)


def categorical_cross_entropy(probs, labels):
    """Mean of -ln p[i, y_i] over softmax rows, clamped at 1e-7."""
    if probs.data.ndim != 2:
        raise TrainingError(f"probabilities must be 2-D, got shape {probs.data.shape}")
    n, k = probs.data.shape
    if n == 0:
        raise TrainingError("empty batch")
    labels = _check_labels(labels, n)
    if k != 2:
        raise TrainingError(f"two-class loss wants 2 columns, got {k}")
    picked = probs.data[np.arange(n), labels].astype(np.float64)
    clamped = np.maximum(picked, LOG_CLAMP)
    out = np.float32(-np.log(clamped).mean())

    def grad_fn(g):
        d = np.zeros_like(probs.data, dtype=np.float64)
        inside = picked > LOG_CLAMP
        d[np.arange(n), labels] = np.where(inside, -1.0 / clamped / n, 0.0)
        probs.grad += g * d.astype(np.float32)

    return _result("categorical_cross_entropy", out, (probs,), grad_fn)


class Adam:
    """Bias-corrected Adam over a named parameter map."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros(p.data.shape, dtype=np.float64) for name, p in self.params.items()}
        self.v = {name: np.zeros(p.data.shape, dtype=np.float64) for name, p in self.params.items()}

    def step(self):
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad.astype(np.float64)
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.data -= update  # float64 update rounded once into float32


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    loss: str = "bce"
    val_fraction: float = 0.10

    def validate(self):
        if self.batch_size < 1:
            raise TrainingError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.loss not in LOSS_KINDS:
            raise TrainingError(f"unknown loss {self.loss!r}, expected one of {list(LOSS_KINDS)}")
        if not 0.0 < self.val_fraction < 1.0:
            raise TrainingError(
                f"validation fraction must be in (0,1), got {self.val_fraction}"
            )


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)

    @property
    def best_epoch(self):
        """Index of the lowest validation loss, first occurrence on ties."""
        if not self.val_loss:
            raise TrainingError("history is empty")
        return int(np.argmin(self.val_loss))

    def __len__(self):
        return len(self.train_loss)


def _compute_loss(model, output, labels, loss_kind):
    if loss_kind == "bce":
        if model.spec.output_units != 1:
            raise TrainingError("loss 'bce' needs a single sigmoid output unit")
        return binary_cross_entropy(output, labels)
    if model.spec.output_units != 2:
        raise TrainingError("loss 'softmax' needs a two-unit softmax output")
    return categorical_cross_entropy(output, labels)


def _class_scores(model, output):
    return output.data if model.spec.output_units == 1 else output.data[:, 1]


def evaluate(model, images, labels, batch_size=32, loss_kind="bce"):
    """Mean loss and accuracy over a set, batched in input order."""
    n = images.shape[0]
    if n == 0:
        raise TrainingError("cannot evaluate an empty set")
    loss_sum = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        output = model.forward(Tensor(images[start:stop]))
        loss = _compute_loss(model, output, labels[start:stop], loss_kind)
        loss_sum += loss.data.item() * (stop - start)
        predictions = (_class_scores(model, output) >= 0.5).astype(np.int64)
        correct += int(np.sum(predictions == labels[start:stop]))
    return loss_sum / n, correct / n


def train(model, train_set, val_set, config):
    """Run the full loop; returns (history, best-epoch checkpoint).

    ``train_set`` / ``val_set`` are (images, labels) pairs of float32
    (N,C,H,W) arrays in [0,1] and int {0,1} labels.  The model is left at
    its final-epoch parameters; the checkpoint holds the best epoch's.
    """
    config.validate()
    train_images, train_labels = train_set
    val_images, val_labels = val_set
    if train_images.shape[0] == 0:
        raise TrainingError("empty training set")
    if val_images.shape[0] == 0:
        raise TrainingError("empty validation set")
    train_labels = _check_labels(train_labels, train_images.shape[0])
    val_labels = _check_labels(val_labels, val_images.shape[0])

    optimizer = Adam(model.parameters())
    history = TrainHistory()
    best_loss = None
    best_params = None
    best_epoch = 0
    n = train_images.shape[0]

    for epoch in range(config.epochs):
        perm = np.random.default_rng([config.seed, epoch]).permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            batch_idx = perm[start : start + config.batch_size]
            batch = Tensor(train_images[batch_idx])
            labels = train_labels[batch_idx]
            model.zero_grad()
            output = model.forward(batch)
            loss = _compute_loss(model, output, labels, config.loss)
            loss.backward()
            optimizer.step()
            loss_sum += loss.data.item() * batch_idx.size
            predictions = (_class_scores(model, output) >= 0.5).astype(np.int64)
            correct += int(np.sum(predictions == labels))
        history.train_loss.append(loss_sum / n)
        history.train_acc.append(correct / n)

        val_loss, val_acc = evaluate(
            model, val_images, val_labels, batch_size=config.batch_size, loss_kind=config.loss
        )
        history.val_loss.append(val_loss)
        history.val_acc.append(val_acc)

        if best_loss is None or val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_params = {name: p.data.copy() for name, p in model.parameters().items()}

    checkpoint = Checkpoint(
        version=CHECKPOINT_VERSION,
        spec_text=model.spec.to_text(),
        params=best_params,
        seed=config.seed,
        best_epoch=best_epoch,
        best_val_loss=best_loss,
    )
    return history, checkpoint
