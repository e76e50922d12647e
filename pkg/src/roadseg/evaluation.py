"""Cross-dataset evaluation: one inference pass over a foreign dataset,
micro-aggregated metrics, tables, training curves, and failure galleries."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from . import mask_ops, metrics
from .errors import ConfigError
from .mask_ops import ColorSpec
from .metrics import ConfusionCounts, MetricsReport
from .training import predict_mask

TABLE_COLUMNS = (
    "model_tag",
    "trained_on",
    "evaluated_on",
    "same_dataset",
    *MetricsReport.FIELDS,
    "tp",
    "fp",
    "fn",
    "tn",
)

GT_TINT = ColorSpec(40, 200, 60)
PRED_TINT = ColorSpec(230, 50, 40)


@dataclass(frozen=True)
class CrossEvalResult:
    """Outcome of evaluating one model on one dataset it may never have seen."""

    model_tag: str
    trained_on: str
    evaluated_on: str
    report: MetricsReport
    per_sample_iou: tuple  # ((sample_id, road IoU), ...)

    @property
    def same_dataset(self) -> bool:
        return self.trained_on == self.evaluated_on

    def as_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "trained_on": self.trained_on,
            "evaluated_on": self.evaluated_on,
            "same_dataset": self.same_dataset,
            "report": self.report.as_dict(),
            "per_sample_iou": [[sid, value] for sid, value in self.per_sample_iou],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CrossEvalResult":
        rep = payload["report"]
        counts = ConfusionCounts(tp=rep["tp"], fp=rep["fp"], fn=rep["fn"], tn=rep["tn"])
        report = MetricsReport(counts=counts, **{k: rep[k] for k in MetricsReport.FIELDS})
        return cls(
            model_tag=payload["model_tag"],
            trained_on=payload["trained_on"],
            evaluated_on=payload["evaluated_on"],
            report=report,
            per_sample_iou=tuple((sid, value) for sid, value in payload["per_sample_iou"]),
        )


def _per_sample_pass(model, stream, threshold: float, device: str):
    """Inference over the stream, yielding (sample_id, ConfusionCounts) per sample."""
    if len(stream) == 0:
        raise ConfigError("cannot evaluate an empty stream")
    config = getattr(model, "config", None)
    if config is not None and stream.sample_size is not None and stream.sample_size != config.input_size:
        raise ConfigError(
            f"model expects {config.input_size}px inputs but the stream "
            f"delivers {stream.sample_size}px samples"
        )
    device = torch.device(device)
    model.eval()
    with torch.no_grad():
        for batch in stream.epoch(0):
            logits = model(batch.images.to(device))
            pred = predict_mask(logits, threshold)
            gt = batch.masks.to(device) > 0.5
            for i, sample_id in enumerate(batch.sample_ids):
                p = pred[i]
                g = gt[i]
                yield sample_id, ConfusionCounts(
                    tp=int((p & g).sum()),
                    fp=int((p & ~g).sum()),
                    fn=int((~p & g).sum()),
                    tn=int((~p & ~g).sum()),
                )


def cross_evaluate(
    model,
    stream,
    threshold: float = 0.5,
    *,
    model_tag: str = "model",
    trained_on: str = "",
    evaluated_on: str = None,
    device: str = "cpu",
) -> CrossEvalResult:
    """Evaluate a trained model on a dataset stream: inference only, every
    sample visited exactly once, metrics micro-aggregated over all pixels.

    Per-sample road IoU is recorded as the failure-gallery ranking key.
    """
    evaluated_on = stream.dataset_id if evaluated_on is None else evaluated_on
    total = ConfusionCounts(0, 0, 0, 0)
    per_sample = []
    for sample_id, counts in _per_sample_pass(model, stream, threshold, device):
        total = total + counts
        per_sample.append((sample_id, metrics.iou(counts, "road")))
    return CrossEvalResult(
        model_tag=model_tag,
        trained_on=trained_on,
        evaluated_on=evaluated_on,
        report=metrics.report(total),
        per_sample_iou=tuple(per_sample),
    )


def tabulate(results, out_csv, out_json=None) -> Path:
    """Write one table row per result; floats use shortest round-trip repr."""
    results = list(results)
    if not results:
        raise ValueError("tabulate requires at least one result")
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABLE_COLUMNS)
        for result in results:
            row = {**result.as_dict(), **result.report.as_dict()}
            writer.writerow([row[col] for col in TABLE_COLUMNS])
    if out_json is not None:
        out_json = Path(out_json)
        out_json.parent.mkdir(parents=True, exist_ok=True)
        out_json.write_text(json.dumps({"results": [r.as_dict() for r in results]}, indent=2) + "\n")
    return out_csv


def curves_figure(logs):
    """Loss and accuracy curves vs. epoch; callers own closing the figure."""
    if not logs:
        raise ValueError("curves require at least one epoch log")
    epochs = [log.epoch for log in logs]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, [log.train_loss for log in logs], label="train loss")
    ax_loss.plot(epochs, [log.val_loss for log in logs], label="val loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_acc.plot(epochs, [log.val_pixel_accuracy for log in logs], color="tab:green")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("val pixel accuracy")
    ax_acc.set_ylim(0.0, 1.05)
    lo, hi = min(epochs), max(epochs)
    pad = 0.5 if lo == hi else 0.0
    for ax in (ax_loss, ax_acc):
        ax.set_xlim(lo - pad, hi + pad)
    fig.tight_layout()
    return fig


def plot_curves(logs, out_dir) -> dict:
    """Render curves.png plus the underlying curves.csv under ``out_dir``."""
    from .training import write_epoch_logs_csv

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig = curves_figure(logs)
    png = out_dir / "curves.png"
    fig.savefig(png, dpi=110)
    plt.close(fig)
    csv_path = write_epoch_logs_csv(logs, out_dir / "curves.csv")
    return {"png": png, "csv": csv_path}


def _to_uint8_image(image: torch.Tensor, mean_std) -> np.ndarray:
    arr = image.detach().cpu().numpy().astype(np.float64)
    if mean_std is not None:
        mean, std = mean_std
        arr = arr * np.asarray(std, dtype=np.float64).reshape(3, 1, 1) + np.asarray(
            mean, dtype=np.float64
        ).reshape(3, 1, 1)
    return np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)


def error_gallery(
    model,
    stream,
    k: int,
    out_dir,
    *,
    threshold: float = 0.5,
    alpha: float = 0.45,
    device: str = "cpu",
) -> list:
    """Write the k worst samples by road IoU as input / ground-truth overlay /
    prediction overlay triplets, rank- and IoU-prefixed. Ties break on
    sample id; k is clamped to the dataset size. Returns [(sample_id, iou)]
    in rank order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    ranked = sorted(
        ((sid, metrics.iou(counts, "road")) for sid, counts in _per_sample_pass(model, stream, threshold, device)),
        key=lambda item: (item[1], item[0]),
    )
    selected = dict(ranked[: min(k, len(ranked))])
    rank_of = {sid: rank for rank, (sid, _) in enumerate(ranked[: len(selected)])}

    device = torch.device(device)
    model.eval()
    with torch.no_grad():
        for batch in stream.epoch(0):
            wanted = [i for i, sid in enumerate(batch.sample_ids) if sid in selected]
            if not wanted:
                continue
            logits = model(batch.images.to(device))
            pred = predict_mask(logits, threshold)
            for i in wanted:
                sid = batch.sample_ids[i]
                image = _to_uint8_image(batch.images[i], stream.mean_std)
                gt_mask = (batch.masks[i, 0] > 0.5).cpu().numpy().astype(np.uint8)
                pred_mask = pred[i, 0].cpu().numpy().astype(np.uint8)
                prefix = f"{rank_of[sid]:03d}_iou{selected[sid]:.3f}_{sid}"
                mask_ops.save_rgb_image(image, out_dir / f"{prefix}_input.png")
                mask_ops.save_rgb_image(
                    mask_ops.overlay(image, gt_mask, GT_TINT, alpha), out_dir / f"{prefix}_gt.png"
                )
                mask_ops.save_rgb_image(
                    mask_ops.overlay(image, pred_mask, PRED_TINT, alpha), out_dir / f"{prefix}_pred.png"
                )
    return ranked[: len(selected)]
