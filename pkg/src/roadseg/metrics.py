"""Pixel-level segmentation metrics derived from confusion counts.

Every metric is computed with exact integer/rational arithmetic and converted
to float only at the end, so results are identical to per-pixel enumeration.
Degenerate denominators follow documented conventions: an absent, never
predicted class has IoU 1, an empty prediction has precision 1, and F1 is 0
when precision + recall is 0. Dataset-level metrics are micro-averaged:
confusion counts are summed over all pixels first, then metrics are taken.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, MaskFormatError, ShapeError

IOU_CLASSES = ("road", "background")


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel tallies with road as the positive class. Additive across disjoint pixel sets."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"ConfusionCounts.{name} must be a nonnegative integer, got {value!r}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def confusion(pred, gt) -> ConfusionCounts:
    """Tally TP/FP/FN/TN between two same-shaped {0,1} arrays."""
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape:
        raise ShapeError(f"pred {p.shape} and gt {g.shape} shapes differ")
    for name, arr in (("pred", p), ("gt", g)):
        if not np.isin(arr, (0, 1)).all():
            raise MaskFormatError(f"{name} must contain only 0 and 1")
    p = p.astype(bool)
    g = g.astype(bool)
    return ConfusionCounts(
        tp=int((p & g).sum()),
        fp=int((p & ~g).sum()),
        fn=int((~p & g).sum()),
        tn=int((~p & ~g).sum()),
    )


def _require_total(c: ConfusionCounts) -> None:
    if c.total == 0:
        raise DegenerateInputError("metrics are undefined over zero pixels")


def _ratio(num: int, den: int, empty: int) -> Fraction:
    # `empty` is the documented value when the denominator vanishes.
    return Fraction(num, den) if den else Fraction(empty)


def _pixel_accuracy(c: ConfusionCounts) -> Fraction:
    return Fraction(c.tp + c.tn, c.total)


def _iou(c: ConfusionCounts, cls: str) -> Fraction:
    if cls == "road":
        return _ratio(c.tp, c.tp + c.fp + c.fn, empty=1)
    if cls == "background":
        return _ratio(c.tn, c.tn + c.fn + c.fp, empty=1)
    raise ValueError(f"class must be one of {IOU_CLASSES}, got {cls!r}")


def _precision(c: ConfusionCounts) -> Fraction:
    return _ratio(c.tp, c.tp + c.fp, empty=1)


def _recall(c: ConfusionCounts) -> Fraction:
    return _ratio(c.tp, c.tp + c.fn, empty=1)


def _f1(c: ConfusionCounts) -> Fraction:
    p = _precision(c)
    r = _recall(c)
    if p + r == 0:
        return Fraction(0)
    return 2 * p * r / (p + r)


def pixel_accuracy(c: ConfusionCounts) -> float:
    """Fraction of all pixels classified correctly."""
    _require_total(c)
    return float(_pixel_accuracy(c))


def iou(c: ConfusionCounts, cls: str = "road") -> float:
    """Intersection over union for one class; 1.0 when the class is absent and never predicted."""
    _require_total(c)
    return float(_iou(c, cls))


def precision(c: ConfusionCounts) -> float:
    """TP / (TP + FP); 1.0 for an empty prediction."""
    _require_total(c)
    return float(_precision(c))


def recall(c: ConfusionCounts) -> float:
    """TP / (TP + FN); 1.0 when there are no positive pixels."""
    _require_total(c)
    return float(_recall(c))


def f1(c: ConfusionCounts) -> float:
    """Harmonic mean of precision and recall; 0.0 when both are 0."""
    _require_total(c)
    return float(_f1(c))


@dataclass(frozen=True)
class MetricsReport:
    """All metrics for one evaluation, plus the counts they came from."""

    pixel_accuracy: float
    precision: float
    recall: float
    f1: float
    iou_road: float
    iou_background: float
    miou: float
    counts: ConfusionCounts

    FIELDS = ("pixel_accuracy", "precision", "recall", "f1", "iou_road", "iou_background", "miou")

    def as_dict(self) -> dict:
        row = {name: getattr(self, name) for name in self.FIELDS}
        row.update(self.counts.as_dict())
        return row

    def to_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.as_dict(), indent=2) + "\n")
        return path

    def to_csv(self, path) -> Path:
        """One-row CSV with named columns."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        row = self.as_dict()
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(row))
            writer.writeheader()
            writer.writerow(row)
        return path


def report(c: ConfusionCounts) -> MetricsReport:
    """Assemble every metric from one set of counts (micro-average)."""
    _require_total(c)
    iou_road = _iou(c, "road")
    iou_background = _iou(c, "background")
    return MetricsReport(
        pixel_accuracy=float(_pixel_accuracy(c)),
        precision=float(_precision(c)),
        recall=float(_recall(c)),
        f1=float(_f1(c)),
        iou_road=float(iou_road),
        iou_background=float(iou_background),
        miou=float((iou_road + iou_background) / 2),
        counts=c,
    )
