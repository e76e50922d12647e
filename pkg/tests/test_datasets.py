"""Dataset discovery, split arithmetic, sample loading, and batch streams."""
import numpy as np
import pytest
from PIL import Image

from roadseg.datasets import (
    SYNTHETIC_LANE_COLOR,
    SYNTHETIC_ROAD_COLOR,
    BatchStream,
    DatasetManifest,
    LabeledSample,
    ManifestEntry,
    SplitAssignment,
    SyntheticStyle,
    generate_synthetic,
    iterate_batches,
    load_manifest,
    load_sample,
    split,
)
from roadseg.errors import (
    ConfigError,
    EmptyDatasetError,
    ManifestError,
    SampleError,
    SplitError,
)
from roadseg.mask_ops import ColorSpec, binarize, load_rgb_image

ROAD = ColorSpec(64, 32, 32)


def write_rgb(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array.astype(np.uint8), mode="RGB").save(path)


def make_pair(root, stem, size=16, road_rows=None):
    """One comma10k-style image/label pair; road occupies the given row span."""
    rng = np.random.default_rng(abs(hash(stem)) % 2**32)
    image = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    label = np.full((size, size, 3), (128, 128, 96), dtype=np.uint8)
    if road_rows is not None:
        label[road_rows[0] : road_rows[1], :] = ROAD.rgb
    write_rgb(root / "imgs" / f"{stem}.png", image)
    write_rgb(root / "masks" / f"{stem}.png", label)


def fake_manifest(n):
    entries = tuple(
        ManifestEntry(f"s{i:04d}", f"/nowhere/{i}.png", f"/nowhere/{i}_mask.png") for i in range(n)
    )
    return DatasetManifest(dataset_id="fake", entries=entries)


class TestLoadManifest:
    def test_comma_layout_pairs(self, tmp_path):
        for stem in ("c", "a", "b"):
            make_pair(tmp_path, stem)
        manifest = load_manifest(tmp_path, "comma10k")
        assert manifest.sample_ids == ["a", "b", "c"]  # lexicographic
        assert all(e.image_path.exists() and e.label_path.exists() for e in manifest.entries)

    def test_kitti_layout_pairs(self, tmp_path):
        base = tmp_path / "training"
        rng = np.random.default_rng(0)
        for stem in ("um_000000", "umm_000001", "uu_000002"):
            prefix, num = stem.split("_")
            img = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
            write_rgb(base / "image_2" / f"{stem}.png", img)
            write_rgb(base / "gt_image_2" / f"{prefix}_road_{num}.png", img)
        manifest = load_manifest(tmp_path, "kitti_road")
        assert len(manifest) == 3
        assert manifest.sample_ids == ["um_000000", "umm_000001", "uu_000002"]

    def test_unpaired_image_is_named(self, tmp_path):
        for stem in ("a", "b", "c"):
            make_pair(tmp_path, stem)
        (tmp_path / "masks" / "b.png").unlink()
        with pytest.raises(ManifestError, match="'b'"):
            load_manifest(tmp_path, "comma10k")

    def test_empty_dataset_rejected(self, tmp_path):
        (tmp_path / "imgs").mkdir()
        (tmp_path / "masks").mkdir()
        with pytest.raises(EmptyDatasetError):
            load_manifest(tmp_path, "comma10k")

    def test_missing_root_rejected(self, tmp_path):
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "nope", "comma10k")

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_manifest(tmp_path, "cityscapes")


class TestSplit:
    @pytest.mark.parametrize(
        "n,expected",
        [(289, (202, 43, 44)), (5000, (3500, 750, 750)), (60, (42, 9, 9)), (3, (2, 0, 1))],
    )
    def test_part_sizes(self, n, expected):
        assert split(fake_manifest(n), seed=0).counts() == expected

    def test_deterministic_in_seed(self):
        manifest = fake_manifest(50)
        assert split(manifest, seed=7).assignment == split(manifest, seed=7).assignment
        assert split(manifest, seed=7).assignment != split(manifest, seed=8).assignment

    def test_disjoint_and_exhaustive(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(3, 400))
            assignment = split(fake_manifest(n), seed=int(rng.integers(0, 1000)))
            parts = [assignment.part_ids(p) for p in ("train", "val", "test")]
            combined = sorted(sid for part in parts for sid in part)
            assert combined == sorted(f"s{i:04d}" for i in range(n))

    def test_too_small_rejected(self):
        with pytest.raises(SplitError):
            split(fake_manifest(2), seed=0)

    def test_bad_ratios_rejected(self):
        with pytest.raises(SplitError):
            split(fake_manifest(10), seed=0, ratios=(0.5, 0.3, 0.3))

    def test_save_load_round_trip(self, tmp_path):
        assignment = split(fake_manifest(20), seed=3)
        path = assignment.save(tmp_path / "split.json")
        loaded = SplitAssignment.load(path)
        assert loaded == assignment


class TestLoadSample:
    def test_identity_resize_matches_direct_binarization(self, tmp_path):
        make_pair(tmp_path, "x", size=32, road_rows=(8, 20))
        manifest = load_manifest(tmp_path, "synthetic")
        sample = load_sample(manifest.entries[0], 32, ROAD)
        direct = binarize(load_rgb_image(manifest.entries[0].label_path), ROAD)
        assert (sample.mask[0] == direct).all()
        assert sample.image.shape == (3, 32, 32) and sample.mask.shape == (1, 32, 32)

    def test_half_plane_downsample_preserves_proportion(self, tmp_path):
        make_pair(tmp_path, "big", size=1024, road_rows=(0, 512))
        manifest = load_manifest(tmp_path, "synthetic")
        sample = load_sample(manifest.entries[0], 512, ROAD)
        assert int(sample.mask.sum()) == 512 * 256

    def test_non_road_label_gives_empty_mask(self, tmp_path):
        make_pair(tmp_path, "bg", size=16, road_rows=None)
        manifest = load_manifest(tmp_path, "synthetic")
        sample = load_sample(manifest.entries[0], 16, ROAD)
        assert sample.mask.sum() == 0

    def test_image_normalized_to_unit_range(self, tmp_path):
        make_pair(tmp_path, "n", size=24, road_rows=(0, 12))
        manifest = load_manifest(tmp_path, "synthetic")
        sample = load_sample(manifest.entries[0], 16, ROAD)
        assert sample.image.dtype == np.float32
        assert sample.image.min() >= 0.0 and sample.image.max() <= 1.0

    def test_mask_stays_binary_for_arbitrary_source_sizes(self, tmp_path):
        rng = np.random.default_rng(5)
        for index, (h, w) in enumerate([(37, 53), (100, 40), (17, 17)]):
            stem = f"odd{index}"
            image = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
            label = np.where(
                rng.random((h, w, 1)) < 0.5, np.array(ROAD.rgb), np.array([128, 128, 96])
            ).astype(np.uint8)
            write_rgb(tmp_path / "imgs" / f"{stem}.png", image)
            write_rgb(tmp_path / "masks" / f"{stem}.png", label)
        manifest = load_manifest(tmp_path, "synthetic")
        for entry in manifest.entries:
            sample = load_sample(entry, 32, ROAD)
            assert set(np.unique(sample.mask)) <= {0, 1}

    def test_label_dims_mismatch_rejected(self, tmp_path):
        rng = np.random.default_rng(6)
        write_rgb(tmp_path / "imgs" / "m.png", rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
        write_rgb(tmp_path / "masks" / "m.png", rng.integers(0, 256, (8, 16, 3), dtype=np.uint8))
        manifest = load_manifest(tmp_path, "synthetic")
        with pytest.raises(SampleError, match="'m'"):
            load_sample(manifest.entries[0], 16, ROAD)

    def test_corrupt_file_rejected_with_sample_id(self, tmp_path):
        make_pair(tmp_path, "ok", size=16, road_rows=(0, 8))
        (tmp_path / "imgs" / "ok.png").write_bytes(b"not a png at all")
        manifest = load_manifest(tmp_path, "synthetic")
        with pytest.raises(SampleError, match="'ok'"):
            load_sample(manifest.entries[0], 16, ROAD)

    def test_lane_repair_absorbs_stripe(self, tmp_path):
        size = 16
        image = np.zeros((size, size, 3), dtype=np.uint8)
        label = np.full((size, size, 3), (128, 128, 96), dtype=np.uint8)
        label[4:12, :] = ROAD.rgb
        label[4:12, 8] = SYNTHETIC_LANE_COLOR.rgb  # stripe annotated as lane, not road
        write_rgb(tmp_path / "imgs" / "lane.png", image)
        write_rgb(tmp_path / "masks" / "lane.png", label)
        manifest = load_manifest(tmp_path, "synthetic")
        plain = load_sample(manifest.entries[0], size, ROAD)
        assert plain.mask[0, 8, 8] == 0
        repaired = load_sample(manifest.entries[0], size, ROAD, lane_spec=SYNTHETIC_LANE_COLOR)
        assert repaired.mask[0, 8, 8] == 1
        assert ((repaired.mask | plain.mask) == repaired.mask).all()

    def test_mean_std_standardization(self, tmp_path):
        make_pair(tmp_path, "std", size=16, road_rows=(0, 4))
        manifest = load_manifest(tmp_path, "synthetic")
        plain = load_sample(manifest.entries[0], 16, ROAD)
        mean, std = (0.5, 0.4, 0.3), (0.2, 0.2, 0.2)
        standardized = load_sample(manifest.entries[0], 16, ROAD, mean_std=(mean, std))
        expected = (plain.image - np.array(mean, dtype=np.float32).reshape(3, 1, 1)) / np.array(
            std, dtype=np.float32
        ).reshape(3, 1, 1)
        np.testing.assert_allclose(standardized.image, expected, rtol=1e-6)

    def test_bad_resize_rule_rejected(self, tmp_path):
        make_pair(tmp_path, "r", size=16, road_rows=(0, 4))
        manifest = load_manifest(tmp_path, "synthetic")
        with pytest.raises(ConfigError):
            load_sample(manifest.entries[0], 16, ROAD, resize_rule="lanczos")


def stub_stream(n, batch_size, *, shuffle=False, shuffle_seed=0):
    entries = [ManifestEntry(f"s{i:03d}", "/x", "/y") for i in range(n)]

    def load(entry):
        return LabeledSample(
            image=np.zeros((3, 4, 4), dtype=np.float32),
            mask=np.zeros((1, 4, 4), dtype=np.uint8),
            sample_id=entry.sample_id,
        )

    return BatchStream(entries, load, batch_size, shuffle=shuffle, shuffle_seed=shuffle_seed)


class TestBatchStream:
    def test_batch_sizes_partition_the_part(self):
        stream = stub_stream(9, 4)
        sizes = [len(batch) for batch in stream]
        assert sizes == [4, 4, 1]

    def test_fixed_order_without_shuffle(self):
        stream = stub_stream(10, 3)
        first = [sid for batch in stream for sid in batch.sample_ids]
        second = [sid for batch in stream for sid in batch.sample_ids]
        assert first == second == sorted(first)

    def test_shuffled_epochs_cover_all_ids_in_different_orders(self):
        stream = stub_stream(42, 8, shuffle=True, shuffle_seed=123)
        epoch1 = [sid for batch in stream.epoch(1) for sid in batch.sample_ids]
        epoch2 = [sid for batch in stream.epoch(2) for sid in batch.sample_ids]
        assert sorted(epoch1) == sorted(epoch2) == [f"s{i:03d}" for i in range(42)]
        assert epoch1 != epoch2
        # deterministic per epoch index
        assert epoch1 == [sid for batch in stream.epoch(1) for sid in batch.sample_ids]

    def test_empty_part_yields_no_batches(self):
        stream = stub_stream(0, 4)
        assert list(stream) == [] and len(stream) == 0

    def test_batch_size_must_be_positive(self):
        with pytest.raises(ConfigError):
            stub_stream(4, 0)

    def test_batch_tensors_have_contract_shapes(self):
        batch = next(iter(stub_stream(5, 2)))
        assert tuple(batch.images.shape) == (2, 3, 4, 4)
        assert tuple(batch.masks.shape) == (2, 1, 4, 4)
        assert batch.images.dtype.is_floating_point


class TestIterateBatches:
    @pytest.fixture()
    def small_dataset(self, tmp_path):
        manifest = generate_synthetic(tmp_path / "ds", count=12, size=32, seed=5)
        assignment = split(manifest, seed=0)
        return manifest, assignment

    def test_parts_partition_dataset(self, small_dataset):
        manifest, assignment = small_dataset
        seen = []
        for part in ("train", "val", "test"):
            stream = iterate_batches(manifest, assignment, part, 4, size=32, road_spec=SYNTHETIC_ROAD_COLOR)
            seen += [sid for batch in stream for sid in batch.sample_ids]
        assert sorted(seen) == manifest.sample_ids

    def test_all_part_covers_everything_once(self, small_dataset):
        manifest, _ = small_dataset
        stream = iterate_batches(manifest, None, "all", 5, size=32, road_spec=SYNTHETIC_ROAD_COLOR)
        ids = [sid for batch in stream for sid in batch.sample_ids]
        assert sorted(ids) == manifest.sample_ids
        assert stream.dataset_id == manifest.dataset_id

    def test_train_part_requires_assignment(self, small_dataset):
        manifest, _ = small_dataset
        with pytest.raises(ConfigError):
            iterate_batches(manifest, None, "train", 4, size=32, road_spec=SYNTHETIC_ROAD_COLOR)

    def test_unknown_part_rejected(self, small_dataset):
        manifest, assignment = small_dataset
        with pytest.raises(ConfigError):
            iterate_batches(manifest, assignment, "holdout", 4, size=32, road_spec=SYNTHETIC_ROAD_COLOR)


class TestGenerateSynthetic:
    def test_count_and_manifest(self, tmp_path):
        manifest = generate_synthetic(tmp_path / "ds", count=8, size=32, seed=1)
        assert len(manifest) == 8

    def test_same_seed_byte_identical(self, tmp_path):
        a = generate_synthetic(tmp_path / "a", count=4, size=32, seed=9)
        b = generate_synthetic(tmp_path / "b", count=4, size=32, seed=9)
        for ea, eb in zip(a.entries, b.entries):
            assert ea.image_path.read_bytes() == eb.image_path.read_bytes()
            assert ea.label_path.read_bytes() == eb.label_path.read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        a = generate_synthetic(tmp_path / "a", count=2, size=32, seed=1)
        b = generate_synthetic(tmp_path / "b", count=2, size=32, seed=2)
        assert a.entries[0].image_path.read_bytes() != b.entries[0].image_path.read_bytes()

    def test_road_fraction_non_degenerate(self, tmp_path):
        manifest = generate_synthetic(tmp_path / "ds", count=10, size=64, seed=3)
        for entry in manifest.entries:
            mask = binarize(load_rgb_image(entry.label_path), SYNTHETIC_ROAD_COLOR)
            fraction = mask.mean()
            assert 0.1 <= fraction <= 0.6, f"{entry.sample_id}: {fraction}"

    def test_styles_change_rendering(self, tmp_path):
        plain = SyntheticStyle()
        other = SyntheticStyle(road_fill=(150, 120, 90), ground_top=(70, 90, 150), lane_dashes=False)
        a = generate_synthetic(tmp_path / "a", count=2, size=32, seed=4, style=plain)
        b = generate_synthetic(tmp_path / "b", count=2, size=32, seed=4, style=other)
        assert a.entries[0].image_path.read_bytes() != b.entries[0].image_path.read_bytes()

    def test_count_must_be_positive(self, tmp_path):
        with pytest.raises(ValueError):
            generate_synthetic(tmp_path / "ds", count=0, size=32, seed=0)
