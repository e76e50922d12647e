"""Command-line pipeline: prepare | train | eval | crosseval | report.

Each command reads one experiment config file and writes into the run
directory. Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import torch

from . import evaluation, mask_ops, training
from .config import ExperimentConfig, load_config, with_overrides
from .datasets import SplitAssignment, iterate_batches, load_manifest, split
from .errors import ConfigError, RoadSegError, SampleError
from .evaluation import CrossEvalResult, cross_evaluate, error_gallery, plot_curves, tabulate
from .models import build_model, load_weights
from .training import read_epoch_logs_csv, train, write_epoch_logs_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

RUN_SCHEMA_VERSION = 1
RUN_SCHEMA_FILE = "run-schema.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roadseg", description="Binary road segmentation experiment pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="experiment config file (YAML)")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--device", default="cpu", help="torch device name (default: cpu)")

    p = sub.add_parser("prepare", help="materialize binary masks and the split manifest")
    add_common(p)
    p.add_argument("--force", action="store_true", help="redo even if artifacts exist")

    p = sub.add_parser("train", help="train the configured model on its dataset")
    add_common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the training dataset's test split")
    add_common(p)
    p.add_argument("--checkpoint", default=None, help="checkpoint path (default: <out>/checkpoints/final.pt)")

    p = sub.add_parser("crosseval", help="evaluate a checkpoint on the entire foreign dataset")
    add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--foreign-dataset", default=None, help="dataset name to cross-evaluate on")

    p = sub.add_parser("report", help="emit tables, curves, and the failure gallery for a run")
    add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--gallery-k", type=int, default=8, help="gallery size (default: 8)")

    return parser


def _init_run_dir(config: ExperimentConfig) -> Path:
    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    schema_path = run_dir / RUN_SCHEMA_FILE
    if schema_path.exists():
        _check_run_schema(run_dir)
    else:
        schema_path.write_text(json.dumps({"run_schema_version": RUN_SCHEMA_VERSION}) + "\n")
    config.save(run_dir / "config.yaml")
    return run_dir


def _check_run_schema(run_dir: Path) -> None:
    schema_path = run_dir / RUN_SCHEMA_FILE
    if not schema_path.is_file():
        raise ConfigError(f"{run_dir} is not a run directory ({RUN_SCHEMA_FILE} missing)")
    version = json.loads(schema_path.read_text()).get("run_schema_version")
    if version != RUN_SCHEMA_VERSION:
        raise ConfigError(f"{run_dir}: run schema version {version} is not supported")


def _load_or_create_split(config: ExperimentConfig, run_dir: Path, name: str, manifest) -> SplitAssignment:
    path = run_dir / "splits" / f"{name}.json"
    if path.is_file():
        assignment = SplitAssignment.load(path)
        if assignment.seed != config.seed:
            raise ConfigError(
                f"split {path} was created with seed {assignment.seed}, but the run seed is "
                f"{config.seed}; re-run prepare --force or change the seed"
            )
        return assignment
    assignment = split(manifest, config.seed, config.split_ratios)
    assignment.save(path)
    return assignment


def _stream_kwargs(config: ExperimentConfig, name: str) -> dict:
    ds = config.datasets[name]
    kwargs = dict(size=config.model.input_size, road_spec=ds.road_color)
    if config.dilation.enabled and ds.lane_color is not None:
        kwargs.update(lane_spec=ds.lane_color, lane_element=config.dilation.element())
    return kwargs


def _model_tag(config: ExperimentConfig) -> str:
    return f"{config.model.architecture}@{config.train_dataset}"


def cmd_prepare(config: ExperimentConfig, force: bool = False) -> int:
    config.require_roots()
    run_dir = _init_run_dir(config)
    for name in sorted(config.datasets):
        ds = config.datasets[name]
        manifest = load_manifest(ds.root, ds.kind, dataset_id=name)
        mask_dir = run_dir / "masks" / name
        split_path = run_dir / "splits" / f"{name}.json"
        up_to_date = split_path.is_file() and all(
            (mask_dir / f"{sid}.png").is_file() for sid in manifest.sample_ids
        )
        if up_to_date and not force:
            print(f"{name}: {len(manifest)} masks up to date, skipping (use --force to redo)")
            continue
        assignment = split(manifest, config.seed, config.split_ratios)
        assignment.save(split_path)
        repair = config.dilation.enabled and ds.lane_color is not None
        for entry in manifest.entries:
            try:
                label = mask_ops.load_rgb_image(entry.label_path)
                mask = mask_ops.binarize(label, ds.road_color)
                if repair:
                    lane = mask_ops.binarize(label, ds.lane_color)
                    mask = mask_ops.repair_lane_artifacts(mask, lane, config.dilation.element())
                mask_ops.save_mask(mask, mask_dir / f"{entry.sample_id}.png")
            except (OSError, RoadSegError) as exc:
                raise SampleError(f"sample {entry.sample_id!r}: {exc}") from exc
        counts = assignment.counts()
        print(f"{name}: cached {len(manifest)} masks, split train/val/test = {counts}")
    return EXIT_OK


def cmd_train(config: ExperimentConfig, device: str = "cpu") -> int:
    config.require_roots()
    run_dir = _init_run_dir(config)
    name = config.train_dataset
    ds = config.datasets[name]
    manifest = load_manifest(ds.root, ds.kind, dataset_id=name)
    assignment = _load_or_create_split(config, run_dir, name, manifest)
    torch.manual_seed(config.seed)
    model = build_model(config.model)
    kwargs = _stream_kwargs(config, name)
    train_stream = iterate_batches(
        manifest, assignment, "train", config.train.batch_size, shuffle_seed=config.seed, **kwargs
    )
    val_stream = iterate_batches(manifest, assignment, "val", config.train.batch_size, **kwargs)
    model, logs = train(
        model,
        train_stream,
        val_stream,
        config.train,
        device=device,
        checkpoint_dir=run_dir / "checkpoints",
    )
    write_epoch_logs_csv(logs, run_dir / "logs" / "train_log.csv")
    last = logs[-1]
    reached = last.val_pixel_accuracy >= config.train.target_pixel_accuracy
    print(
        f"trained {_model_tag(config)} for {last.epoch} epoch(s); "
        f"val pixel accuracy {last.val_pixel_accuracy:.4f} "
        f"({'reached' if reached else 'did not reach'} target {config.train.target_pixel_accuracy})"
    )
    return EXIT_OK


def _append_result(run_dir: Path, result: CrossEvalResult, stream_part: str) -> None:
    results_path = run_dir / "results.json"
    payload = {"results": []}
    if results_path.is_file():
        payload = json.loads(results_path.read_text())
    entry = result.as_dict()
    entry["stream_part"] = stream_part
    payload["results"].append(entry)
    results_path.write_text(json.dumps(payload, indent=2) + "\n")
    results = [CrossEvalResult.from_dict(e) for e in payload["results"]]
    tabulate(results, run_dir / "results.csv")


def _evaluate_on(config: ExperimentConfig, checkpoint, dataset_name: str, part: str, device: str) -> int:
    config.require_roots()
    run_dir = _init_run_dir(config)
    checkpoint = Path(checkpoint) if checkpoint else run_dir / "checkpoints" / "final.pt"
    if not checkpoint.is_file():
        raise ConfigError(f"checkpoint {checkpoint} does not exist; run the train command first")
    model = load_weights(checkpoint, config.model)
    ds = config.datasets[dataset_name]
    manifest = load_manifest(ds.root, ds.kind, dataset_id=dataset_name)
    assignment = None
    if part != "all":
        assignment = _load_or_create_split(config, run_dir, dataset_name, manifest)
    stream = iterate_batches(
        manifest, assignment, part, config.train.batch_size, **_stream_kwargs(config, dataset_name)
    )
    result = cross_evaluate(
        model,
        stream,
        model_tag=_model_tag(config),
        trained_on=config.train_dataset,
        evaluated_on=dataset_name,
        device=device,
    )
    if result.same_dataset and part == "all":
        print("warning: evaluated on the model's own training dataset; result is flagged", file=sys.stderr)
    _append_result(run_dir, result, stream_part=part)
    rep = result.report
    print(
        f"{result.model_tag} on {result.evaluated_on} ({stream.n_samples} samples, part={part}): "
        f"acc {rep.pixel_accuracy:.4f}  mIoU {rep.miou:.4f}  "
        f"P {rep.precision:.4f}  R {rep.recall:.4f}  F1 {rep.f1:.4f}"
    )
    return EXIT_OK


def cmd_eval(config: ExperimentConfig, checkpoint=None, device: str = "cpu") -> int:
    return _evaluate_on(config, checkpoint, config.train_dataset, "test", device)


def cmd_crosseval(config: ExperimentConfig, checkpoint=None, foreign_dataset=None, device: str = "cpu") -> int:
    if foreign_dataset is None:
        others = sorted(n for n in config.datasets if n != config.train_dataset)
        if len(others) != 1:
            raise UsageError(
                f"--foreign-dataset is required; configured datasets besides the training one: {others}"
            )
        foreign_dataset = others[0]
    if foreign_dataset not in config.datasets:
        raise ConfigError(f"foreign dataset {foreign_dataset!r} is not configured")
    return _evaluate_on(config, checkpoint, foreign_dataset, "all", device)


def cmd_report(config: ExperimentConfig, checkpoint=None, gallery_k: int = 8, device: str = "cpu") -> int:
    run_dir = Path(config.output_dir)
    _check_run_schema(run_dir)
    produced = []

    log_path = run_dir / "logs" / "train_log.csv"
    if log_path.is_file():
        paths = plot_curves(read_epoch_logs_csv(log_path), run_dir)
        produced += [paths["png"], paths["csv"]]

    results_path = run_dir / "results.json"
    if results_path.is_file():
        entries = json.loads(results_path.read_text())["results"]
        results = [CrossEvalResult.from_dict(e) for e in entries]
        produced.append(tabulate(results, run_dir / "results.csv"))

        # Gallery for the most recent evaluation.
        last = entries[-1]
        name = last["evaluated_on"]
        if name in config.datasets:
            config.require_roots()
            checkpoint = Path(checkpoint) if checkpoint else run_dir / "checkpoints" / "final.pt"
            model = load_weights(checkpoint, config.model)
            ds = config.datasets[name]
            manifest = load_manifest(ds.root, ds.kind, dataset_id=name)
            part = last.get("stream_part", "all")
            assignment = None
            if part != "all":
                assignment = _load_or_create_split(config, run_dir, name, manifest)
            stream = iterate_batches(
                manifest, assignment, part, config.train.batch_size, **_stream_kwargs(config, name)
            )
            gallery_dir = run_dir / "gallery"
            error_gallery(model, stream, gallery_k, gallery_dir, device=device)
            produced.append(gallery_dir)

    if not produced:
        raise ConfigError(f"nothing to report in {run_dir}: no training log and no results")
    for path in produced:
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = load_config(args.config)
        config = with_overrides(config, seed=args.seed, output_dir=args.out)
        if args.command == "prepare":
            return cmd_prepare(config, force=args.force)
        if args.command == "train":
            return cmd_train(config, device=args.device)
        if args.command == "eval":
            return cmd_eval(config, checkpoint=args.checkpoint, device=args.device)
        if args.command == "crosseval":
            return cmd_crosseval(
                config,
                checkpoint=args.checkpoint,
                foreign_dataset=args.foreign_dataset,
                device=args.device,
            )
        return cmd_report(
            config, checkpoint=args.checkpoint, gallery_k=args.gallery_k, device=args.device
        )
    except (UsageError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RoadSegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
