"""Shared test utilities: metric oracles, in-memory batch streams, tiny models."""
from fractions import Fraction

import numpy as np
import torch

from roadseg.datasets import BatchStream, LabeledSample, ManifestEntry
from roadseg.metrics import ConfusionCounts


def enumerate_counts(pred, gt):
    """Per-pixel tally oracle."""
    tp = fp = fn = tn = 0
    for p, g in zip(np.asarray(pred).flat, np.asarray(gt).flat):
        if p and g:
            tp += 1
        elif p and not g:
            fp += 1
        elif not p and g:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def oracle_metrics(c):
    """Defining formulas in exact rational arithmetic, degenerate rules included."""
    out = {"pixel_accuracy": Fraction(c.tp + c.tn, c.total)}
    out["iou_road"] = Fraction(c.tp, c.tp + c.fp + c.fn) if c.tp + c.fp + c.fn else Fraction(1)
    out["iou_background"] = Fraction(c.tn, c.tn + c.fn + c.fp) if c.tn + c.fn + c.fp else Fraction(1)
    out["miou"] = (out["iou_road"] + out["iou_background"]) / 2
    out["precision"] = Fraction(c.tp, c.tp + c.fp) if c.tp + c.fp else Fraction(1)
    out["recall"] = Fraction(c.tp, c.tp + c.fn) if c.tp + c.fn else Fraction(1)
    p, r = out["precision"], out["recall"]
    out["f1"] = Fraction(0) if p + r == 0 else 2 * p * r / (p + r)
    return out


def array_stream(images, masks, batch_size, *, shuffle=False, shuffle_seed=0, dataset_id="mem"):
    """BatchStream over in-memory arrays (image: (3,S,S) float32, mask: (1,S,S) uint8)."""
    ids = [f"s{i:03d}" for i in range(len(images))]
    table = {sid: (img, mask) for sid, img, mask in zip(ids, images, masks)}
    entries = [ManifestEntry(sid, "/unused", "/unused") for sid in ids]

    def load(entry):
        image, mask = table[entry.sample_id]
        return LabeledSample(image=image, mask=mask, sample_id=entry.sample_id)

    return BatchStream(
        entries,
        load,
        batch_size,
        shuffle=shuffle,
        shuffle_seed=shuffle_seed,
        dataset_id=dataset_id,
        sample_size=int(images[0].shape[-1]) if images else None,
    )


def random_stream(rng, n, size, batch_size, road_fraction=0.4, **kwargs):
    """Stream of random images with random binary masks."""
    images = [rng.random((3, size, size)).astype(np.float32) for _ in range(n)]
    masks = [(rng.random((1, size, size)) < road_fraction).astype(np.uint8) for _ in range(n)]
    return array_stream(images, masks, batch_size, **kwargs)


class ConstantLogitModel(torch.nn.Module):
    """Emits a constant logit everywhere; has one (unused) parameter."""

    def __init__(self, value):
        super().__init__()
        self.value = value
        self.dummy = torch.nn.Parameter(torch.zeros(1))

    def forward(self, x):
        b, _, h, w = x.shape
        return torch.full((b, 1, h, w), float(self.value)) + self.dummy * 0


class ChannelOracleModel(torch.nn.Module):
    """Reads the mask smuggled into image channel 0: logit = (c0 - 0.5) * 100."""

    def __init__(self):
        super().__init__()
        self.dummy = torch.nn.Parameter(torch.zeros(1))

    def forward(self, x):
        return (x[:, :1] - 0.5) * 100.0 + self.dummy * 0


def oracle_stream(rng, n, size, batch_size, road_fraction=0.4, **kwargs):
    """Stream whose images carry their own mask in channel 0, for oracle models."""
    masks = [(rng.random((1, size, size)) < road_fraction).astype(np.uint8) for _ in range(n)]
    images = []
    for mask in masks:
        image = rng.random((3, size, size)).astype(np.float32)
        image[0] = mask[0]
        images.append(image)
    return array_stream(images, masks, batch_size, **kwargs)
