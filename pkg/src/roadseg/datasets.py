"""Dataset discovery, deterministic 70/15/15 splits, and sample streams.

Supported layouts:

* ``kitti_road`` -- ``<root>[/training]/image_2/*.png`` paired with
  ``gt_image_2/<prefix>_road_<num>.png``
* ``comma10k`` -- ``<root>/imgs/*`` paired with ``<root>/masks/<stem>.png``
* ``synthetic`` -- comma10k-style layout written by :func:`generate_synthetic`

Manifest order is lexicographic by sample id so every downstream artifact is
stable across platforms.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
import torch
from PIL import Image

from . import mask_ops
from .errors import (
    ConfigError,
    EmptyDatasetError,
    ManifestError,
    SampleError,
    SplitError,
)
from .mask_ops import ColorSpec, StructuringElement

PARTS = ("train", "val", "test")
DEFAULT_SPLIT_RATIOS = (0.70, 0.15, 0.15)
DATASET_KINDS = ("kitti_road", "comma10k", "synthetic")
_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

_RESIZE_RULES = {"bilinear": Image.BILINEAR, "nearest": Image.NEAREST, "bicubic": Image.BICUBIC}


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    image_path: Path
    label_path: Path


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    entries: tuple[ManifestEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def sample_ids(self) -> list[str]:
        return [e.sample_id for e in self.entries]

    def entry(self, sample_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.sample_id == sample_id:
                return e
        raise KeyError(sample_id)


def _paired_dir_entries(img_dir: Path, label_dir: Path) -> list[ManifestEntry]:
    entries = []
    for image_path in sorted(img_dir.iterdir()):
        if image_path.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        label_path = label_dir / f"{image_path.stem}.png"
        if not label_path.exists():
            raise ManifestError(
                f"sample {image_path.stem!r}: image {image_path} has no label at {label_path}"
            )
        entries.append(ManifestEntry(image_path.stem, image_path, label_path))
    return entries


def _kitti_entries(root: Path) -> list[ManifestEntry]:
    base = root / "training" if (root / "training").is_dir() else root
    img_dir = base / "image_2"
    label_dir = base / "gt_image_2"
    if not img_dir.is_dir():
        raise ManifestError(f"kitti_road layout expects {img_dir}, which does not exist")
    entries = []
    for image_path in sorted(img_dir.iterdir()):
        if image_path.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        stem = image_path.stem
        prefix, _, number = stem.partition("_")
        label_path = label_dir / f"{prefix}_road_{number}{image_path.suffix}"
        if not number or not label_path.exists():
            raise ManifestError(f"sample {stem!r}: image {image_path} has no label at {label_path}")
        entries.append(ManifestEntry(stem, image_path, label_path))
    return entries


def load_manifest(root, kind: str, dataset_id: Optional[str] = None) -> DatasetManifest:
    """Discover every image/label pair under ``root`` for the given layout."""
    root = Path(root)
    if kind not in DATASET_KINDS:
        raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}, got {kind!r}")
    if not root.is_dir():
        raise ManifestError(f"dataset root {root} does not exist")
    if kind == "kitti_road":
        entries = _kitti_entries(root)
    else:
        img_dir = root / "imgs"
        label_dir = root / "masks"
        if not img_dir.is_dir():
            raise ManifestError(f"{kind} layout expects {img_dir}, which does not exist")
        entries = _paired_dir_entries(img_dir, label_dir)
    if not entries:
        raise EmptyDatasetError(f"no samples found under {root}")
    entries.sort(key=lambda e: e.sample_id)
    ids = [e.sample_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ManifestError(f"duplicate sample ids under {root}")
    return DatasetManifest(dataset_id=dataset_id or root.name, entries=tuple(entries))


@dataclass(frozen=True)
class SplitAssignment:
    """Total, disjoint train/val/test assignment, a pure function of (sorted ids, seed)."""

    assignment: dict
    seed: int
    ratios: tuple = DEFAULT_SPLIT_RATIOS

    def part_ids(self, part: str) -> list[str]:
        if part not in PARTS:
            raise ValueError(f"part must be one of {PARTS}, got {part!r}")
        return sorted(sid for sid, p in self.assignment.items() if p == part)

    def counts(self) -> tuple[int, int, int]:
        return tuple(len(self.part_ids(part)) for part in PARTS)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "assignment": {sid: self.assignment[sid] for sid in sorted(self.assignment)},
        }
        path.write_text(json.dumps(payload, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "SplitAssignment":
        payload = json.loads(Path(path).read_text())
        return cls(
            assignment=dict(payload["assignment"]),
            seed=int(payload["seed"]),
            ratios=tuple(payload["ratios"]),
        )


def split(manifest: DatasetManifest, seed: int, ratios=DEFAULT_SPLIT_RATIOS) -> SplitAssignment:
    """Assign every sample to train/val/test by seeded shuffle of the sorted ids.

    Sizes follow round(train_ratio * N) and round(val_ratio * N) computed in
    exact rational arithmetic (ties round half-to-even); test takes the
    remainder.
    """
    n = len(manifest)
    if n < 3:
        raise SplitError(f"need at least 3 samples to populate all three parts, got {n}")
    fractions = [Fraction(str(r)) for r in ratios]
    if len(fractions) != 3 or sum(fractions) != 1:
        raise SplitError(f"ratios must be three values summing to 1.0, got {ratios!r}")
    n_train = round(fractions[0] * n)
    n_val = round(fractions[1] * n)
    ids = sorted(manifest.sample_ids)
    random.Random(seed).shuffle(ids)
    assignment = {}
    for index, sid in enumerate(ids):
        if index < n_train:
            assignment[sid] = "train"
        elif index < n_train + n_val:
            assignment[sid] = "val"
        else:
            assignment[sid] = "test"
    return SplitAssignment(assignment=assignment, seed=seed, ratios=tuple(ratios))


@dataclass(frozen=True)
class LabeledSample:
    """Normalized image (3, S, S) float32 in [0,1] paired with a (1, S, S) binary mask."""

    image: np.ndarray
    mask: np.ndarray
    sample_id: str


def _resize_mask_nearest(mask: np.ndarray, size: int) -> np.ndarray:
    # Explicit index mapping keeps the result binary and platform-independent.
    h, w = mask.shape
    rows = np.minimum((np.floor((np.arange(size) + 0.5) * h / size)).astype(np.int64), h - 1)
    cols = np.minimum((np.floor((np.arange(size) + 0.5) * w / size)).astype(np.int64), w - 1)
    return mask[rows[:, None], cols[None, :]]


def load_sample(
    entry: ManifestEntry,
    size: int,
    road_spec: ColorSpec,
    resize_rule: str = "bilinear",
    *,
    lane_spec: Optional[ColorSpec] = None,
    lane_element: StructuringElement = StructuringElement(),
    mean_std=None,
) -> LabeledSample:
    """Load one image/label pair at the model input resolution.

    The label is binarized at native resolution (optionally lane-repaired via
    ``lane_spec``), then resized with nearest-neighbor so it stays binary. The
    image is resized with ``resize_rule`` and scaled to [0, 1]; ``mean_std``
    optionally standardizes per channel afterwards (for pretrained encoders).
    """
    if resize_rule not in _RESIZE_RULES:
        raise ConfigError(f"resize_rule must be one of {sorted(_RESIZE_RULES)}, got {resize_rule!r}")
    try:
        with Image.open(entry.image_path) as img:
            image = img.convert("RGB")
            image_size = image.size
            image = image.resize((size, size), _RESIZE_RULES[resize_rule])
        label = mask_ops.load_rgb_image(entry.label_path)
    except OSError as exc:
        raise SampleError(f"sample {entry.sample_id!r}: cannot read files: {exc}") from exc
    if (label.shape[2], label.shape[1]) != image_size:
        raise SampleError(
            f"sample {entry.sample_id!r}: label dims {label.shape[1:]} do not match "
            f"image dims {image_size[::-1]}"
        )
    mask = mask_ops.binarize(label, road_spec)
    if lane_spec is not None:
        lane = mask_ops.binarize(label, lane_spec)
        mask = mask_ops.repair_lane_artifacts(mask, lane, lane_element)
    mask = _resize_mask_nearest(mask, size)
    arr = np.transpose(np.asarray(image, dtype=np.float32), (2, 0, 1)) / 255.0
    if mean_std is not None:
        mean, std = mean_std
        arr = (arr - np.asarray(mean, dtype=np.float32).reshape(3, 1, 1)) / np.asarray(
            std, dtype=np.float32
        ).reshape(3, 1, 1)
    return LabeledSample(image=arr, mask=mask[None, :, :], sample_id=entry.sample_id)


@dataclass
class Batch:
    images: torch.Tensor  # (B, 3, S, S) float32
    masks: torch.Tensor  # (B, 1, S, S) float32 over {0, 1}
    sample_ids: list

    def __len__(self) -> int:
        return len(self.sample_ids)


class BatchStream:
    """Deterministic batch iterator over a fixed set of manifest entries.

    Each epoch visits every sample exactly once. With ``shuffle=True`` the
    order is reshuffled per epoch from ``shuffle_seed + epoch``; otherwise the
    order is fixed. Samples are loaded once and cached in memory by default.
    """

    def __init__(
        self,
        entries: Sequence[ManifestEntry],
        load: Callable[[ManifestEntry], LabeledSample],
        batch_size: int,
        *,
        shuffle: bool = False,
        shuffle_seed: int = 0,
        dataset_id: str = "",
        sample_size: Optional[int] = None,
        mean_std=None,
        cache: bool = True,
    ):
        if batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
        self.entries = list(entries)
        self.load = load
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.shuffle_seed = shuffle_seed
        self.dataset_id = dataset_id
        self.sample_size = sample_size
        self.mean_std = mean_std
        self._cache = {} if cache else None

    @property
    def n_samples(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return (len(self.entries) + self.batch_size - 1) // self.batch_size

    def _sample(self, index: int) -> LabeledSample:
        if self._cache is not None:
            if index not in self._cache:
                self._cache[index] = self.load(self.entries[index])
            return self._cache[index]
        return self.load(self.entries[index])

    def epoch(self, epoch: int = 0) -> Iterator[Batch]:
        order = list(range(len(self.entries)))
        if self.shuffle:
            random.Random(self.shuffle_seed + epoch).shuffle(order)
        for start in range(0, len(order), self.batch_size):
            chunk = [self._sample(i) for i in order[start : start + self.batch_size]]
            images = torch.from_numpy(np.stack([s.image for s in chunk]))
            masks = torch.from_numpy(np.stack([s.mask for s in chunk]).astype(np.float32))
            yield Batch(images=images, masks=masks, sample_ids=[s.sample_id for s in chunk])

    def __iter__(self) -> Iterator[Batch]:
        return self.epoch(0)


def iterate_batches(
    manifest: DatasetManifest,
    assignment: Optional[SplitAssignment],
    part: str,
    batch_size: int,
    shuffle_seed: int = 0,
    *,
    size: int,
    road_spec: ColorSpec,
    resize_rule: str = "bilinear",
    lane_spec: Optional[ColorSpec] = None,
    lane_element: StructuringElement = StructuringElement(),
    mean_std=None,
    cache: bool = True,
) -> BatchStream:
    """Build the batch stream for one split part, or ``part="all"`` for the
    entire dataset (the cross-evaluation protocol). Only the train part is
    shuffled."""
    if part == "all":
        ids = manifest.sample_ids
    elif part in PARTS:
        if assignment is None:
            raise ConfigError(f"part {part!r} requires a split assignment")
        ids = assignment.part_ids(part)
    else:
        raise ConfigError(f"part must be one of {PARTS + ('all',)}, got {part!r}")
    by_id = {e.sample_id: e for e in manifest.entries}
    entries = [by_id[sid] for sid in ids]

    def load(entry: ManifestEntry) -> LabeledSample:
        return load_sample(
            entry,
            size,
            road_spec,
            resize_rule,
            lane_spec=lane_spec,
            lane_element=lane_element,
            mean_std=mean_std,
        )

    return BatchStream(
        entries,
        load,
        batch_size,
        shuffle=(part == "train"),
        shuffle_seed=shuffle_seed,
        dataset_id=manifest.dataset_id,
        sample_size=size,
        mean_std=mean_std,
        cache=cache,
    )


# Label colors shared by every synthetic dataset (the rendering style varies,
# the annotation scheme does not).
SYNTHETIC_ROAD_COLOR = ColorSpec(64, 32, 32)
SYNTHETIC_LANE_COLOR = ColorSpec(255, 0, 0)
SYNTHETIC_BACKGROUND_COLOR = (128, 128, 96)


@dataclass(frozen=True)
class SyntheticStyle:
    """Rendering knobs for one synthetic domain.

    Geometry ranges are fractions of the image size; defaults keep the road
    between roughly 15% and 45% of the pixels.
    """

    road_fill: tuple = (98, 98, 106)
    road_noise: float = 9.0
    ground_top: tuple = (96, 142, 92)
    ground_bottom: tuple = (64, 98, 56)
    ground_noise: float = 16.0
    lane_dashes: bool = True
    bottom_width: tuple = (0.55, 0.90)
    top_width: tuple = (0.12, 0.30)
    horizon: tuple = (0.30, 0.50)


def _render_scene(rng: np.random.Generator, size: int, style: SyntheticStyle):
    # Background: vertical gradient plus per-pixel noise.
    t = np.linspace(0.0, 1.0, size, dtype=np.float64)[:, None, None]
    top = np.array(style.ground_top, dtype=np.float64)
    bottom = np.array(style.ground_bottom, dtype=np.float64)
    image = (1 - t) * top + t * bottom
    image = np.repeat(image, size, axis=1)
    image += rng.normal(0.0, style.ground_noise, size=(size, size, 3))

    # Road: a trapezoid widening from a horizon line to the bottom edge.
    y0 = int(rng.uniform(*style.horizon) * size)
    bottom_w = rng.uniform(*style.bottom_width) * size
    top_w = rng.uniform(*style.top_width) * size
    cx_bottom = size / 2 + rng.uniform(-0.08, 0.08) * size
    cx_top = cx_bottom + rng.uniform(-0.15, 0.15) * size
    road = np.zeros((size, size), dtype=np.uint8)
    span = max(size - 1 - y0, 1)
    for y in range(y0, size):
        frac = (y - y0) / span
        half = (top_w + (bottom_w - top_w) * frac) / 2
        cx = cx_top + (cx_bottom - cx_top) * frac
        lo = max(int(round(cx - half)), 0)
        hi = min(int(round(cx + half)), size)
        if hi > lo:
            road[y, lo:hi] = 1

    road_pixels = road.astype(bool)
    fill = np.array(style.road_fill, dtype=np.float64)
    image[road_pixels] = fill + rng.normal(0.0, style.road_noise, size=(int(road_pixels.sum()), 3))

    # Lane dashes down the road center, painted near-white and annotated as a
    # separate class (the artifact that lane repair later absorbs).
    lane = np.zeros_like(road)
    if style.lane_dashes:
        dash = max(size // 16, 2)
        for y in range(y0, size):
            if (y // dash) % 2 == 0:
                frac = (y - y0) / span
                cx = int(round(cx_top + (cx_bottom - cx_top) * frac))
                lo = max(cx - 1, 0)
                hi = min(cx + 1, size)
                lane[y, lo:hi] = road[y, lo:hi]
        lane_pixels = lane.astype(bool)
        image[lane_pixels] = np.array([234.0, 228.0, 210.0]) + rng.normal(
            0.0, 4.0, size=(int(lane_pixels.sum()), 3)
        )

    label = np.empty((size, size, 3), dtype=np.uint8)
    label[:, :] = SYNTHETIC_BACKGROUND_COLOR
    label[road_pixels] = SYNTHETIC_ROAD_COLOR.rgb
    label[lane.astype(bool)] = SYNTHETIC_LANE_COLOR.rgb

    image = np.clip(np.floor(image + 0.5), 0, 255).astype(np.uint8)
    return image, label


def generate_synthetic(
    root, count: int, size: int, seed: int, style: SyntheticStyle = SyntheticStyle()
) -> DatasetManifest:
    """Write ``count`` rendered image/label pairs under ``root`` (comma10k-style
    layout) and return their manifest. Byte-identical for identical seeds."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    root = Path(root)
    img_dir = root / "imgs"
    label_dir = root / "masks"
    try:
        img_dir.mkdir(parents=True, exist_ok=True)
        label_dir.mkdir(parents=True, exist_ok=True)
        for index in range(count):
            rng = np.random.default_rng([seed, index])
            image, label = _render_scene(rng, size, style)
            Image.fromarray(image, mode="RGB").save(img_dir / f"{index:05d}.png")
            Image.fromarray(label, mode="RGB").save(label_dir / f"{index:05d}.png")
    except OSError as exc:
        raise SampleError(f"cannot write synthetic dataset under {root}: {exc}") from exc
    return load_manifest(root, "synthetic")
