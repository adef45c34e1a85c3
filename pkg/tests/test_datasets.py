import json

import numpy as np
import pytest

from sedlab.datasets import (
    Dataset,
    DatasetSpec,
    build_dataset,
    dataset_hash,
    load_dataset,
    read_grid,
    reference_events,
    save_dataset,
    write_grid,
)
from sedlab.errors import DataError, FormatError
from sedlab.scenes import SceneConfig

SPEC = DatasetSpec(
    scene=SceneConfig(n_classes=3, clip_len=0.8, fps=40.0, n_channels=6,
                      duration_range=(0.1, 0.3), event_rate=1.5),
    n_strong=4, n_weak=3, n_unlabeled=5, n_validation=2,
)


class TestGridFiles:
    def test_round_trip(self, tmp_path, rng):
        data = rng.standard_normal((7, 5)).astype(np.float32).astype(np.float64)
        path = tmp_path / "x.bin"
        write_grid(path, data, fps=40.0)
        back, fps = read_grid(path)
        np.testing.assert_array_equal(back, data)
        assert fps == 40.0

    def test_header_size_check(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x01\x02")
        with pytest.raises(FormatError):
            read_grid(path)

    def test_truncated_body(self, tmp_path, rng):
        path = tmp_path / "x.bin"
        write_grid(path, rng.standard_normal((4, 4)), fps=10.0)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError):
            read_grid(path)


class TestBuildDataset:
    def test_split_sizes(self):
        ds = build_dataset(SPEC, seed=0)
        assert ds.split_sizes() == {"strong": 4, "weak": 3, "unlabeled": 5, "validation": 2}

    def test_clip_ids_disjoint(self):
        ds = build_dataset(SPEC, seed=0)
        ids = [c[0] for c in ds.strong] + [c[0] for c in ds.weak]
        ids += [c[0] for c in ds.unlabeled] + [c[0] for c in ds.validation]
        assert len(set(ids)) == len(ids)

    def test_deterministic(self):
        a = build_dataset(SPEC, seed=9)
        b = build_dataset(SPEC, seed=9)
        assert np.array_equal(a.strong[0][1].data, b.strong[0][1].data)
        assert np.array_equal(a.unlabeled[2][1].data, b.unlabeled[2][1].data)

    def test_seed_changes_data(self):
        a = build_dataset(SPEC, seed=1)
        b = build_dataset(SPEC, seed=2)
        assert not np.array_equal(a.strong[0][1].data, b.strong[0][1].data)


class TestDiskRoundTrip:
    def test_save_load(self, tmp_path):
        ds = build_dataset(SPEC, seed=3)
        save_dataset(ds, tmp_path, spec=SPEC, seed=3)
        back = load_dataset(tmp_path)
        assert back.split_sizes() == ds.split_sizes()
        assert back.n_classes == ds.n_classes
        # Features go through float32 on disk.
        np.testing.assert_array_equal(
            back.strong[0][1].data, ds.strong[0][1].data.astype(np.float32)
        )
        np.testing.assert_array_equal(back.strong[0][2].data, ds.strong[0][2].data)
        np.testing.assert_array_equal(back.weak[1][2].data, ds.weak[1][2].data)

    def test_manifest_lists_every_clip(self, tmp_path):
        ds = build_dataset(SPEC, seed=3)
        save_dataset(ds, tmp_path)
        lines = (tmp_path / "manifest.jsonl").read_text().splitlines()
        assert len(lines) == sum(ds.split_sizes().values())
        row = json.loads(lines[0])
        assert set(row) == {"id", "split"}

    def test_reference_events_present_for_validation(self, tmp_path):
        ds = build_dataset(SPEC, seed=3)
        save_dataset(ds, tmp_path)
        refs = reference_events(tmp_path, "validation")
        assert set(refs) == {c[0] for c in ds.validation}

    def test_reference_events_missing_for_unlabeled(self, tmp_path):
        ds = build_dataset(SPEC, seed=3)
        save_dataset(ds, tmp_path)
        with pytest.raises(DataError):
            reference_events(tmp_path, "unlabeled")

    def test_load_missing_dir(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path / "nope")


class TestDatasetHash:
    def test_stable_across_rewrites(self, tmp_path):
        ds = build_dataset(SPEC, seed=5)
        save_dataset(ds, tmp_path / "a", spec=SPEC, seed=5)
        save_dataset(ds, tmp_path / "b", spec=SPEC, seed=5)
        assert dataset_hash(tmp_path / "a") == dataset_hash(tmp_path / "b")

    def test_sensitive_to_content(self, tmp_path):
        save_dataset(build_dataset(SPEC, seed=5), tmp_path / "a")
        save_dataset(build_dataset(SPEC, seed=6), tmp_path / "b")
        assert dataset_hash(tmp_path / "a") != dataset_hash(tmp_path / "b")
