"""Binary road-mask operations.

Color-coded label images are turned into {0,1} masks by filtering the color
that represents the road class. Lane-marking annotation artifacts are repaired
by dilating the lane mask and merging it into the road mask. Overlays render
masks onto images for visual inspection.

Conventions: images are channel-first ``(3, H, W)`` uint8 arrays, masks are
``(H, W)`` uint8 arrays over {0, 1}. All functions are pure.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MaskFormatError, ShapeError

ELEMENT_SHAPES = ("square", "cross", "disk")


@dataclass(frozen=True)
class ColorSpec:
    """An RGB color plus a per-channel absolute tolerance.

    A pixel matches iff |pixel_c - spec_c| <= tolerance for every channel.
    Tolerance defaults to 0 (exact match): color-coded labels are synthetic,
    so exact equality is expected and neighbor classes are never absorbed.
    """

    r: int
    g: int
    b: int
    tolerance: int = 0

    def __post_init__(self):
        for name in ("r", "g", "b", "tolerance"):
            value = getattr(self, name)
            if not isinstance(value, int) or not 0 <= value <= 255:
                raise ValueError(f"ColorSpec.{name} must be an integer in [0, 255], got {value!r}")

    @property
    def rgb(self) -> tuple[int, int, int]:
        return (self.r, self.g, self.b)


@dataclass(frozen=True)
class StructuringElement:
    """Neighborhood used by morphological dilation; always contains its center."""

    shape: str = "square"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ELEMENT_SHAPES:
            raise ValueError(f"element shape must be one of {ELEMENT_SHAPES}, got {self.shape!r}")
        if not isinstance(self.radius, int) or self.radius < 1:
            raise ValueError(f"element radius must be an integer >= 1, got {self.radius!r}")

    def footprint(self) -> np.ndarray:
        """Boolean footprint of size (2r+1, 2r+1)."""
        r = self.radius
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
        if self.shape == "cross":
            return (xx == 0) | (yy == 0)
        return xx * xx + yy * yy <= r * r  # disk


def _as_mask(mask, name: str = "mask") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise MaskFormatError(f"{name} must be 2-D (H, W), got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise MaskFormatError(f"{name} must contain only 0 and 1")
    return arr.astype(np.uint8, copy=False)


def _as_image(image, name: str = "image") -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise MaskFormatError(f"{name} must have shape (3, H, W), got {arr.shape}")
    return arr


def binarize(label_image, spec: ColorSpec) -> np.ndarray:
    """Filter one class color out of a color-coded label image.

    Pixels within ``spec``'s tolerance on all three channels become 1, all
    others 0, collapsing the (3, H, W) label to an (H, W) binary mask.
    """
    arr = _as_image(label_image, "label_image").astype(np.int16)
    color = np.array(spec.rgb, dtype=np.int16).reshape(3, 1, 1)
    match = (np.abs(arr - color) <= spec.tolerance).all(axis=0)
    return match.astype(np.uint8)


def dilate(mask, elem: StructuringElement = StructuringElement()) -> np.ndarray:
    """Morphological dilation: output pixel is 1 iff any 1-pixel of the input
    lies under the element's footprint centered there. Out-of-bounds counts
    as 0 (no wraparound)."""
    m = _as_mask(mask)
    h, w = m.shape
    r = elem.radius
    padded = np.zeros((h + 2 * r, w + 2 * r), dtype=np.uint8)
    padded[r : r + h, r : r + w] = m
    out = np.zeros_like(m)
    fp = elem.footprint()
    for dy, dx in zip(*np.nonzero(fp)):
        out |= padded[dy : dy + h, dx : dx + w]
    return out


def merge_masks(road, lane_dilated) -> np.ndarray:
    """Elementwise OR of two masks of identical dimensions."""
    a = _as_mask(road, "road")
    b = _as_mask(lane_dilated, "lane_dilated")
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a | b


def repair_lane_artifacts(road, lane, elem: StructuringElement = StructuringElement()) -> np.ndarray:
    """Absorb misannotated lane markings into the road class.

    The lane mask is dilated so the grown markings, including their boundary
    halo, merge with the road mask. Road pixels are never removed.
    """
    a = _as_mask(road, "road")
    b = _as_mask(lane, "lane")
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return merge_masks(a, dilate(b, elem))


def overlay(image, mask, tint: ColorSpec, alpha: float) -> np.ndarray:
    """Alpha-blend ``tint`` over the pixels where ``mask`` is 1.

    Channel values are rounded half-up so the result is bit-exact
    reproducible. ``alpha=0`` returns the image unchanged; ``alpha=1`` paints
    masked pixels with the plain tint color.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    img = _as_image(image)
    m = _as_mask(mask)
    if img.shape[1:] != m.shape:
        raise ShapeError(f"image {img.shape[1:]} and mask {m.shape} dimensions disagree")
    tint_arr = np.array(tint.rgb, dtype=np.float64).reshape(3, 1, 1)
    blended = (1.0 - alpha) * img.astype(np.float64) + alpha * tint_arr
    blended = np.clip(np.floor(blended + 0.5), 0, 255).astype(np.uint8)
    keep = m.astype(bool)[None, :, :]
    return np.where(keep, blended, img.astype(np.uint8))


def save_mask(mask, path) -> Path:
    """Persist a mask as a single-channel 8-bit image with values {0, 255}."""
    m = _as_mask(mask)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(m * np.uint8(255), mode="L").save(path)
    return path


def load_mask(path) -> np.ndarray:
    """Load a mask persisted by :func:`save_mask`; 255 maps back to 1."""
    arr = np.asarray(Image.open(path).convert("L"))
    if not np.isin(arr, (0, 255)).all():
        raise MaskFormatError(f"{path}: mask file must contain only 0 and 255")
    return (arr == 255).astype(np.uint8)


def save_rgb_image(image, path) -> Path:
    """Persist a (3, H, W) uint8 image as a standard RGB image file."""
    img = _as_image(image).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.transpose(img, (1, 2, 0)), mode="RGB").save(path)
    return path


def load_rgb_image(path) -> np.ndarray:
    """Load an image file as a (3, H, W) uint8 array."""
    arr = np.asarray(Image.open(path).convert("RGB"))
    return np.transpose(arr, (2, 0, 1))
