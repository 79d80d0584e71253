"""SGD-with-momentum training loop with per-epoch history and checkpoints.

Defaults follow the reference recipe: learning rate 0.001, momentum 0.9,
batch size 32, 30 epochs. The loop is deterministic per seed: batch order,
parameter updates, and checkpoints are bit-reproducible on one machine.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .data import batch_indices
from .layers import softmax_xent, softmax_xent_backward
from .model import Model
from .weights import WeightArchive, apply_weights, load_archive, save_archive


class DivergedTrainingError(RuntimeError):
    """Loss became non-finite; reports the epoch and batch."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    freeze_backbone: bool = False

    def validate(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def sgd_step(params: dict, grads: dict, velocity: dict, lr: float,
             momentum: float) -> None:
    """Heavy-ball update, in place: v <- momentum*v - lr*g; w <- w + v."""
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ValueError(
                f"gradient shape {grad.shape} does not match parameter "
                f"{name!r} shape {param.shape}"
            )
        v = velocity[name]
        v *= momentum
        v -= lr * grad
        param += v


class SGDMomentum:
    """Velocity state for every trainable parameter of a model."""

    def __init__(self, model: Model, lr: float, momentum: float):
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p) for name, p in model.named_params()}

    def step(self, model: Model) -> None:
        params = dict(model.named_params())
        grads = dict(model.param_grads())
        sgd_step(params, grads, self.velocity, self.lr, self.momentum)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float | None
    test_acc: float | None
    seconds: float


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)

    def append(self, stats: EpochStats):
        self.rows.append(stats)

    def final(self) -> EpochStats:
        return self.rows[-1]

    def to_csv(self, include_timing: bool = False) -> str:
        """Render history as CSV.

        Timing is excluded by default so identical runs produce
        byte-identical files; pass include_timing=True for profiling.
        """
        header = "epoch,train_loss,train_acc,test_loss,test_acc"
        if include_timing:
            header += ",seconds"
        lines = [header]
        for r in self.rows:
            cells = [str(r.epoch), repr(r.train_loss), repr(r.train_acc),
                     "" if r.test_loss is None else repr(r.test_loss),
                     "" if r.test_acc is None else repr(r.test_acc)]
            if include_timing:
                cells.append(f"{r.seconds:.3f}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def evaluate_dataset(model: Model, dataset, batch_size: int = 32):
    """Full-dataset loss/accuracy in inference mode, sequential order."""
    total_loss = 0.0
    correct = 0
    n = len(dataset)
    for start in range(0, n, batch_size):
        x, y = dataset.fetch(np.arange(start, min(start + batch_size, n)))
        logits = model.forward_logits(x, train=False)
        loss, probs = softmax_xent(logits, y)
        total_loss += loss * len(y)
        correct += int((probs.argmax(axis=1) == y).sum())
    return total_loss / n, correct / n


def train(model: Model, train_data, test_data, cfg: TrainConfig,
          log=None) -> TrainHistory:
    """Run the epoch loop; returns per-epoch history.

    Batch norm runs in train mode during updates and inference mode for the
    test-set pass. Frozen parameters are never touched.
    """
    cfg.validate()
    if cfg.freeze_backbone:
        model.freeze_backbone()
    optimizer = SGDMomentum(model, cfg.learning_rate, cfg.momentum)
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        running_loss = 0.0
        correct = 0
        for batch_num, chunk in enumerate(
            batch_indices(len(train_data), cfg.batch_size, cfg.seed, epoch)
        ):
            x, y = train_data.fetch(chunk)
            logits = model.forward_logits(x, train=True)
            loss, probs = softmax_xent(logits, y)
            if not np.isfinite(loss):
                raise DivergedTrainingError(
                    f"training diverged: non-finite loss at epoch {epoch + 1}, "
                    f"batch {batch_num + 1}"
                )
            model.backward(softmax_xent_backward(probs, y))
            optimizer.step(model)
            running_loss += loss * len(y)
            correct += int((probs.argmax(axis=1) == y).sum())
        train_loss = running_loss / len(train_data)
        train_acc = correct / len(train_data)
        test_loss = test_acc = None
        if test_data is not None and len(test_data) > 0:
            test_loss, test_acc = evaluate_dataset(model, test_data, cfg.batch_size)
        stats = EpochStats(epoch + 1, train_loss, train_acc, test_loss, test_acc,
                           time.perf_counter() - started)
        history.append(stats)
        if log is not None:
            log(f"epoch {stats.epoch}/{cfg.epochs} "
                f"train_loss={stats.train_loss:.4f} train_acc={stats.train_acc:.4f}"
                + (f" test_loss={stats.test_loss:.4f} test_acc={stats.test_acc:.4f}"
                   if stats.test_loss is not None else ""))
    return history


def checkpoint(model: Model, path) -> None:
    """Write every persistent array (parameters + batch-norm running stats)
    as a strict CCW archive."""
    archive = WeightArchive()
    for name, arr in model.all_slots():
        archive.add(name, arr)
    save_archive(archive, path)


def resume(model: Model, path):
    """Restore a checkpoint bit-exactly; shape drift raises a strict
    import error."""
    return apply_weights(model, load_archive(path), strictness="strict")
