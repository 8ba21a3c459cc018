"""SGD with momentum, weight decay (weights only), and step learning-rate
drops, with per-epoch logit-norm telemetry."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import LabeledDataset, OodDataset
from .errors import ConfigError, ContractError, DataError, DivergedError
from .losses import LossConfig, apply_loss
from .model import MlpModel, forward, forward_traced
from .tensor import Matrix2D, row_l2_norm


@dataclass(frozen=True)
class OptimConfig:
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 200
    batch_size: int = 128
    lr_drops: tuple[tuple[int, float], ...] = ((80, 0.1), (140, 0.1))
    seed: int = 0

    def __post_init__(self):
        if self.lr0 < 0:
            raise ConfigError(f"lr0 must be nonnegative, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        drops = tuple((int(e), float(f)) for e, f in self.lr_drops)
        epochs_seen = [e for e, _ in drops]
        if epochs_seen != sorted(set(epochs_seen)) or any(
                e < 0 or e >= self.epochs for e in epochs_seen):
            raise ConfigError(f"lr_drop epochs must be strictly increasing and < epochs, got {drops}")
        object.__setattr__(self, "lr_drops", drops)


@dataclass(frozen=True)
class EpochTelemetry:
    epoch: int
    train_loss: float
    train_acc: float
    mean_logit_norm_id: float
    mean_logit_norm_ood: Optional[float] = None


def lr_at(cfg: OptimConfig, epoch: int) -> float:
    """Learning rate in effect at a given epoch (drops applied at their epoch)."""
    if epoch < 0 or epoch >= cfg.epochs:
        raise ContractError(f"epoch {epoch} outside [0, {cfg.epochs})")
    lr = cfg.lr0
    for drop_epoch, factor in cfg.lr_drops:
        if epoch >= drop_epoch:
            lr *= factor
    return lr


def _mean_norm(model: MlpModel, features: Matrix2D) -> float:
    return float(row_l2_norm(forward(model, features)).mean())


def train(model: MlpModel, dataset: LabeledDataset, loss_cfg: LossConfig,
          optim_cfg: OptimConfig, probe_ood: Optional[OodDataset] = None
          ) -> tuple[MlpModel, list[EpochTelemetry]]:
    """Train and return (new model, one telemetry record per epoch).

    Deterministic in optim_cfg.seed; raises DivergedError on a non-finite
    loss. Weight decay is applied to weights only, never biases.
    """
    if dataset.dim != model.input_dim or dataset.k != model.num_classes:
        raise ConfigError(
            f"dataset (d={dataset.dim}, k={dataset.k}) does not match model "
            f"(d={model.input_dim}, k={model.num_classes})")
    rng = np.random.default_rng(optim_cfg.seed)
    weights = [w.data.copy() for w in model.weights]
    biases = [b.data.copy() for b in model.biases]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    x_all = dataset.features.data
    y_all = dataset.labels
    n = dataset.n
    telemetry: list[EpochTelemetry] = []

    for epoch in range(optim_cfg.epochs):
        lr = lr_at(optim_cfg, epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        loss_batches = 0
        for start in range(0, n, optim_cfg.batch_size):
            batch = order[start:start + optim_cfg.batch_size]
            current = MlpModel(model.layer_dims,
                               tuple(Matrix2D(w) for w in weights),
                               tuple(Matrix2D(b) for b in biases),
                               model.activation)
            trace = forward_traced(current, Matrix2D(x_all[batch]))
            loss = apply_loss(trace.tape, trace.logits, y_all[batch], loss_cfg)
            loss_val = loss.value.item()
            if not np.isfinite(loss_val):
                raise DivergedError(epoch, start // optim_cfg.batch_size)
            loss_sum += loss_val
            loss_batches += 1
            trace.tape.backward(loss)
            if lr == 0.0:
                continue
            for i in range(len(weights)):
                gw = trace.tape.grad(trace.weights[i]) + optim_cfg.weight_decay * weights[i]
                gb = trace.tape.grad(trace.biases[i])
                vel_w[i] = optim_cfg.momentum * vel_w[i] + gw
                vel_b[i] = optim_cfg.momentum * vel_b[i] + gb
                weights[i] = weights[i] - lr * vel_w[i]
                biases[i] = biases[i] - lr * vel_b[i]
                if not (np.isfinite(weights[i]).all() and np.isfinite(biases[i]).all()):
                    raise DivergedError(epoch, start // optim_cfg.batch_size)

        snapshot = MlpModel(model.layer_dims,
                            tuple(Matrix2D(w) for w in weights),
                            tuple(Matrix2D(b) for b in biases),
                            model.activation)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                logits = forward(snapshot, dataset.features)
                ood_norm = (_mean_norm(snapshot, probe_ood.features)
                            if probe_ood is not None else None)
        except DataError:
            # Finite weights can still overflow the forward pass once the
            # parameters are large enough; that is divergence, not bad data.
            raise DivergedError(epoch, loss_batches - 1) from None
        acc = float((np.argmax(logits.data, axis=1) == y_all).mean())
        telemetry.append(EpochTelemetry(
            epoch=epoch + 1,
            train_loss=loss_sum / loss_batches,
            train_acc=acc,
            mean_logit_norm_id=float(row_l2_norm(logits).mean()),
            mean_logit_norm_ood=ood_norm,
        ))

    final = MlpModel(model.layer_dims,
                     tuple(Matrix2D(w) for w in weights),
                     tuple(Matrix2D(b) for b in biases),
                     model.activation)
    return final, telemetry


def telemetry_csv(telemetry: list[EpochTelemetry]) -> str:
    buf = io.StringIO()
    buf.write("epoch,train_loss,train_acc,mean_logit_norm_id,mean_logit_norm_ood\n")
    for t in telemetry:
        ood = f"{t.mean_logit_norm_ood:.17g}" if t.mean_logit_norm_ood is not None else ""
        buf.write(f"{t.epoch},{t.train_loss:.17g},{t.train_acc:.17g},"
                  f"{t.mean_logit_norm_id:.17g},{ood}\n")
    return buf.getvalue()
