"""SGD training loop with momentum, weight decay, and a step LR schedule,
plus evaluation and the per-epoch metrics surface (CSV)."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import data as dp
from .tensor import ShapeError

CSV_HEADER = "epoch,train_loss,train_acc,val_loss,val_acc,val_top1_err,wall_seconds"


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    milestones: tuple = (25, 40)
    lr_decay: float = 0.1
    seed: int = 0
    augment: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.base_lr <= 0:
            raise ValueError("epochs must be >= 0, batch_size >= 1, base_lr > 0")
        if not (0 <= self.momentum < 1) or self.weight_decay < 0:
            raise ValueError("momentum must be in [0,1), weight_decay >= 0")
        ms = tuple(self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError("milestones must be strictly increasing")
        if any(m < 1 or m > self.epochs for m in ms):
            raise ValueError(f"milestones must lie within [1, {self.epochs}]")

    def lr_at_epoch(self, epoch):
        drops = sum(1 for m in self.milestones if epoch >= m)
        return self.base_lr * self.lr_decay**drops


@dataclass
class MetricsRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    val_top1_error: float
    wall_seconds: float


def sgd_step(params, state, lr, momentum, weight_decay):
    """v <- momentum*v + (g + wd*w); w <- w - lr*v.

    Parameters tagged ``no_decay`` (BN scale/shift) skip weight decay.
    ``state`` maps parameter id to its velocity buffer.
    """
    for p in params:
        if p.grad is None:
            continue
        if p.grad.shape != p.value.shape:
            raise ShapeError(
                f"sgd_step: grad shape {p.grad.shape} vs param shape {p.value.shape}")
        g = p.grad
        if weight_decay and not p.no_decay:
            g = g + weight_decay * p.value
        v = state.get(id(p))
        if v is None:
            v = np.zeros_like(p.value)
        v = momentum * v + g
        state[id(p)] = v
        p.value = p.value - lr * v
    return state


def evaluate(model, dataset, stats=None, batch_size=256):
    """Inference-mode loss and top-1 error (argmax, lowest index wins ties)."""
    total_loss = 0.0
    correct = 0
    m = len(dataset)
    with ad.no_grad():
        for start in range(0, m, batch_size):
            x = dataset.images[start : start + batch_size]
            y = dataset.labels[start : start + batch_size]
            if stats is not None:
                x = dp.normalize(x, stats)
            logits = model.forward(ad.Variable(x.astype(np.float32)), training=False)
            loss = ad.softmax_cross_entropy(logits, y)
            total_loss += float(loss.value) * len(y)
            correct += int((logits.value.argmax(axis=1) == y).sum())
    top1_error = 100.0 * (1.0 - correct / m)
    return total_loss / m, top1_error


def train(model, train_ds, val_ds, config, stats=None, log=None):
    """Run the full loop; returns (model, one MetricsRecord per epoch)."""
    if stats is None:
        stats = dp.compute_channel_stats(train_ds.images)
    params = model.parameters()
    state = {}
    metrics = []
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        lr = config.lr_at_epoch(epoch)
        aug_rng = np.random.default_rng([config.seed, epoch, 1])
        epoch_loss = 0.0
        epoch_correct = 0
        seen = 0
        for idx in dp.iter_batches(len(train_ds), config.batch_size, config.seed, epoch):
            x = train_ds.images[idx]
            y = train_ds.labels[idx]
            if config.augment:
                x = dp.augment_batch(x, aug_rng)
            x = dp.normalize(x, stats).astype(np.float32)
            logits = model.forward(ad.Variable(x), training=True)
            loss = ad.softmax_cross_entropy(logits, y)
            model.zero_grad()
            ad.backward(loss)
            sgd_step(params, state, lr, config.momentum, config.weight_decay)
            epoch_loss += float(loss.value) * len(y)
            epoch_correct += int((logits.value.argmax(axis=1) == y).sum())
            seen += len(y)
        val_loss, val_top1 = evaluate(model, val_ds, stats)
        rec = MetricsRecord(
            epoch=epoch,
            train_loss=epoch_loss / seen,
            train_accuracy=100.0 * epoch_correct / seen,
            val_loss=val_loss,
            val_accuracy=100.0 - val_top1,
            val_top1_error=val_top1,
            wall_seconds=time.perf_counter() - t0,
        )
        metrics.append(rec)
        if log is not None:
            log(f"epoch={rec.epoch} train_loss={rec.train_loss:.4f} "
                f"train_acc={rec.train_accuracy:.2f} val_top1_err={rec.val_top1_error:.2f}")
    return model, metrics


def summarize(metrics):
    """(min, mean) of per-epoch validation top-1 error."""
    if not metrics:
        raise ValueError("summarize: metrics list is empty")
    errs = [m.val_top1_error for m in metrics]
    return min(errs), sum(errs) / len(errs)


def write_metrics_csv(path, metrics):
    lines = [CSV_HEADER]
    for m in metrics:
        lines.append(
            f"{m.epoch},{m.train_loss:.6f},{m.train_accuracy:.6f},{m.val_loss:.6f},"
            f"{m.val_accuracy:.6f},{m.val_top1_error:.6f},{m.wall_seconds:.6f}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
