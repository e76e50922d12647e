"""Model optimization: stable binary cross-entropy on logits plus Adam.

The whole run is deterministic for a fixed seed on a fixed platform: weight
init and shuffling flow from the run seed, the optimizer is stateful but
exact, and evaluation never mutates parameters.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import torch

from . import models
from .errors import ConfigError, DivergenceError, ShapeError
from .metrics import ConfusionCounts, pixel_accuracy


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 8
    max_epochs: int = 100
    target_pixel_accuracy: float = 0.97
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 < self.target_pixel_accuracy <= 1:
            raise ConfigError(
                f"target_pixel_accuracy must be in (0, 1], got {self.target_pixel_accuracy}"
            )
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_pixel_accuracy: float
    wall_time: float


EPOCH_LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "val_pixel_accuracy", "wall_time")


def bce_logits_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy evaluated directly on logits.

    Uses the stable form max(x, 0) - x*y + log(1 + exp(-|x|)), finite for all
    finite logits. Targets must be binary.
    """
    if logits.shape != targets.shape:
        raise ShapeError(f"logits {tuple(logits.shape)} and targets {tuple(targets.shape)} differ")
    if not ((targets == 0) | (targets == 1)).all():
        raise ValueError("targets must contain only 0 and 1")
    y = targets.to(logits.dtype)
    per_pixel = logits.clamp(min=0) - logits * y + torch.log1p(torch.exp(-logits.abs()))
    return per_pixel.mean()


def threshold_logit(threshold: float = 0.5) -> float:
    """Logit value matching a probability threshold (0.5 -> 0.0)."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return math.log(threshold / (1.0 - threshold))


def predict_mask(logits: torch.Tensor, threshold: float = 0.5) -> torch.Tensor:
    """Road iff sigmoid(logit) is STRICTLY above the threshold; ties go to background."""
    return logits > threshold_logit(threshold)


@dataclass
class AdamState:
    """First/second moment buffers plus the shared step counter."""

    m: list
    v: list
    step: int = 0


def init_adam_state(params: Iterable[torch.Tensor]) -> AdamState:
    params = list(params)
    return AdamState(
        m=[torch.zeros_like(p) for p in params],
        v=[torch.zeros_like(p) for p in params],
        step=0,
    )


def adam_step(params, grads, state: AdamState, config: TrainConfig) -> None:
    """One bias-corrected Adam update, in place."""
    params = list(params)
    grads = list(grads)
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValueError("params, grads, and state buffers must have equal lengths")
    beta1, beta2 = config.adam_betas
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            denom = (v / bc2).sqrt_().add_(config.adam_eps)
            p.addcdiv_(m / bc1, denom, value=-config.learning_rate)


def evaluate_epoch(model, stream, threshold: float = 0.5, device: str = "cpu"):
    """One inference pass: returns (mean loss, pixel accuracy, ConfusionCounts).

    The loss is averaged over all pixels of the stream; counts accumulate
    globally (micro-average). No parameter is mutated.
    """
    if len(stream) == 0:
        raise ConfigError("cannot evaluate an empty stream")
    device = torch.device(device)
    model.eval()
    loss_sum = 0.0
    pixels = 0
    tp = fp = fn = tn = 0
    with torch.no_grad():
        for batch in stream.epoch(0):
            images = batch.images.to(device)
            targets = batch.masks.to(device)
            logits = model(images)
            loss = bce_logits_loss(logits, targets)
            n = targets.numel()
            loss_sum += loss.item() * n
            pixels += n
            pred = predict_mask(logits, threshold)
            gt = targets > 0.5
            tp += int((pred & gt).sum())
            fp += int((pred & ~gt).sum())
            fn += int((~pred & gt).sum())
            tn += int((~pred & ~gt).sum())
    counts = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)
    return loss_sum / pixels, pixel_accuracy(counts), counts


def train(
    model,
    train_stream,
    val_stream,
    config: TrainConfig,
    *,
    device: str = "cpu",
    checkpoint_dir: Optional[Path] = None,
):
    """Optimize until validation pixel accuracy reaches the target or the
    epoch cap is hit.

    Returns the trained model and one EpochLog per completed epoch. When
    ``checkpoint_dir`` is given, ``best.pt`` tracks the best validation
    accuracy and ``final.pt`` is written at the end.
    """
    if len(train_stream) == 0 or len(val_stream) == 0:
        raise ConfigError("training requires non-empty train and val streams")
    device = torch.device(device)
    model.to(device)
    torch.manual_seed(config.seed)
    params = [p for p in model.parameters() if p.requires_grad]
    state = init_adam_state(params)
    logs = []
    best_accuracy = -1.0
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        model.train()
        loss_sum = 0.0
        pixels = 0
        for step, batch in enumerate(train_stream.epoch(epoch), start=1):
            images = batch.images.to(device)
            targets = batch.masks.to(device)
            logits = model(images)
            loss = bce_logits_loss(logits, targets)
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, step {step}")
            for p in params:
                p.grad = None
            loss.backward()
            grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in params]
            adam_step(params, grads, state, config)
            n = targets.numel()
            loss_sum += loss.item() * n
            pixels += n
        val_loss, val_accuracy, _ = evaluate_epoch(model, val_stream, device=device)
        logs.append(
            EpochLog(
                epoch=epoch,
                train_loss=loss_sum / pixels,
                val_loss=val_loss,
                val_pixel_accuracy=val_accuracy,
                wall_time=time.perf_counter() - started,
            )
        )
        if checkpoint_dir is not None and val_accuracy > best_accuracy:
            models.save_weights(model, checkpoint_dir / "best.pt")
        best_accuracy = max(best_accuracy, val_accuracy)
        if val_accuracy >= config.target_pixel_accuracy:
            break
    if checkpoint_dir is not None:
        models.save_weights(model, checkpoint_dir / "final.pt")
    return model, logs


def write_epoch_logs_csv(logs, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPOCH_LOG_COLUMNS)
        for log in logs:
            writer.writerow([log.epoch, log.train_loss, log.val_loss, log.val_pixel_accuracy, log.wall_time])
    return path


def read_epoch_logs_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        EpochLog(
            epoch=int(r["epoch"]),
            train_loss=float(r["train_loss"]),
            val_loss=float(r["val_loss"]),
            val_pixel_accuracy=float(r["val_pixel_accuracy"]),
            wall_time=float(r["wall_time"]),
        )
        for r in rows
    ]
