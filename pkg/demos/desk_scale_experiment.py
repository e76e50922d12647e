"""Desk-scale version of the full experiment, CPU-only, a couple of minutes.

Generates two synthetic road domains with different geometry and color
statistics, trains a small U-Net on the first, then evaluates it on the
entire second dataset, exactly the way the real cross-dataset runs work.
Everything is driven through the command-line pipeline, so the artifacts
match what `roadseg <cmd>` produces: checkpoints, curves, results table,
and a worst-samples gallery under ./demo-output/experiment/run/.
"""
from pathlib import Path

import yaml

from roadseg.cli import main
from roadseg.datasets import SyntheticStyle, generate_synthetic

base = Path("demo-output/experiment")
run_dir = base / "run"
base.mkdir(parents=True, exist_ok=True)

# Domain A: wide roads, greenish surroundings. Domain B: narrower roads,
# different road surface and ground palette. Close enough to transfer,
# different enough that the gallery shows real failure cases.
generate_synthetic(base / "data" / "alpha", count=60, size=128, seed=1000)
generate_synthetic(
    base / "data" / "beta",
    count=60,
    size=128,
    seed=2000,
    style=SyntheticStyle(
        road_fill=(112, 104, 98),
        road_noise=12.0,
        ground_top=(88, 128, 104),
        ground_bottom=(54, 88, 62),
        ground_noise=12.0,
        bottom_width=(0.42, 0.72),
        top_width=(0.08, 0.22),
        horizon=(0.34, 0.54),
    ),
)

config = {
    "seed": 7,
    "output_dir": str(run_dir),
    "train_dataset": "alpha",
    "datasets": {
        "alpha": {"root": str(base / "data" / "alpha"), "kind": "synthetic"},
        "beta": {"root": str(base / "data" / "beta"), "kind": "synthetic"},
    },
    "model": {"architecture": "unet", "input_size": 128, "base_channels": 8},
    "train": {
        "learning_rate": 0.003,
        "batch_size": 4,
        "max_epochs": 150,
        "target_pixel_accuracy": 0.97,
    },
}
config_path = base / "experiment.yaml"
config_path.write_text(yaml.safe_dump(config, sort_keys=False))

for command in (
    ["prepare", "--config", str(config_path)],
    ["train", "--config", str(config_path)],
    ["eval", "--config", str(config_path)],
    ["crosseval", "--config", str(config_path)],
    ["report", "--config", str(config_path), "--gallery-k", "6"],
):
    print(f"\n$ roadseg {' '.join(command)}")
    code = main(command)
    assert code == 0, f"{command[0]} exited with {code}"

print(f"\nresults table:\n{(run_dir / 'results.csv').read_text()}")
print(f"artifacts under {run_dir}/: checkpoints/, logs/, curves.png, gallery/")
