"""Walk through the mask pipeline on one synthetic scene.

Renders a road scene, binarizes its color-coded label, repairs the
misannotated lane stripe by dilating and merging it into the road class,
and writes diagnostic overlays. Outputs land in ./demo-output/masks/.
"""
import tempfile
from pathlib import Path

import numpy as np

from roadseg.datasets import (
    SYNTHETIC_LANE_COLOR,
    SYNTHETIC_ROAD_COLOR,
    generate_synthetic,
)
from roadseg.mask_ops import (
    ColorSpec,
    StructuringElement,
    binarize,
    dilate,
    load_rgb_image,
    overlay,
    repair_lane_artifacts,
    save_mask,
    save_rgb_image,
)

out_dir = Path("demo-output/masks")
out_dir.mkdir(parents=True, exist_ok=True)

# One rendered scene: image plus color-coded label.
with tempfile.TemporaryDirectory() as tmp:
    manifest = generate_synthetic(tmp, count=1, size=256, seed=42)
    entry = manifest.entries[0]
    image = load_rgb_image(entry.image_path)
    label = load_rgb_image(entry.label_path)

save_rgb_image(image, out_dir / "scene.png")
save_rgb_image(label, out_dir / "label.png")

# Filter the road color out of the label: 3xHxW color -> HxW in {0,1}.
road = binarize(label, SYNTHETIC_ROAD_COLOR)
lane = binarize(label, SYNTHETIC_LANE_COLOR)
print(f"road pixels: {int(road.sum())} ({road.mean():.1%} of the image)")
print(f"lane-marking pixels annotated as non-road: {int(lane.sum())}")

# The lane stripe splits the road mask. Dilation grows the stripe so that
# merging it back leaves no gap.
elem = StructuringElement(shape="square", radius=1)
lane_grown = dilate(lane, elem)
repaired = repair_lane_artifacts(road, lane, elem)
print(f"after repair: {int(repaired.sum())} road pixels "
      f"(+{int(repaired.sum() - road.sum())} absorbed)")
assert ((repaired & road) == road).all(), "repair never removes road pixels"

save_mask(road, out_dir / "road_mask.png")
save_mask(lane_grown, out_dir / "lane_dilated.png")
save_mask(repaired, out_dir / "road_repaired.png")

# Overlays for eyeballing: green = repaired road, red = raw lane stripe.
green = ColorSpec(40, 200, 60)
red = ColorSpec(230, 50, 40)
save_rgb_image(overlay(image, repaired, green, 0.45), out_dir / "overlay_road.png")
save_rgb_image(overlay(image, lane, red, 0.8), out_dir / "overlay_lane.png")

print(f"wrote {sorted(p.name for p in out_dir.iterdir())} to {out_dir}/")
