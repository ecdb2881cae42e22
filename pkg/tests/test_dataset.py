import json
from pathlib import Path

import cv2
import numpy as np
import pytest
import torch

from conftest import make_record, tiny_synth_config, write_frames, write_manifest
from core.base.records import Manifest
from core.dataset.frame_reader import inspect_video, read_clip_frames, to_luma
from core.dataset.manifest import load_manifest, save_manifest
from core.dataset.synthetic import (
    appearance_params,
    dataset_hash,
    generate_synthetic_dataset,
    load_sidecar,
    motion_params,
)
from utils.errors import (
    ClipRangeError,
    DuplicateVideoError,
    ManifestNotFoundError,
    ManifestParseError,
    SplitLeakError,
)


def _row(path, target, driver, split="train", generator="g", num_frames=10):
    return {
        "video_path": str(path),
        "target_id": target,
        "driver_id": driver,
        "generator": generator,
        "split": split,
        "num_frames": num_frames,
        "fps": 25.0,
    }


@pytest.fixture
def video_dirs(tmp_path):
    return [write_frames(tmp_path / f"v{i}", [10 * i] * 3) for i in range(4)]


class TestLoadManifest:
    def test_valid_manifest(self, tmp_path, video_dirs):
        path = write_manifest(tmp_path / "m.jsonl", [
            _row(video_dirs[0], "A", "A"),
            _row(video_dirs[1], "A", "B"),
            _row(video_dirs[2], "B", "B"),
        ])
        manifest = load_manifest(path)
        assert len(manifest) == 3
        assert manifest.identity_split_map == {"A": "train", "B": "train"}
        assert manifest.records[1].is_self_reenactment is False

    def test_split_leak_names_identity(self, tmp_path, video_dirs):
        path = write_manifest(tmp_path / "m.jsonl", [
            _row(video_dirs[0], "A", "A", split="train"),
            _row(video_dirs[1], "C", "C", split="test"),
            _row(video_dirs[2], "A", "C", split="train"),
        ])
        with pytest.raises(SplitLeakError) as info:
            load_manifest(path)
        assert info.value.identity == "C"

    def test_duplicate_path(self, tmp_path, video_dirs):
        path = write_manifest(tmp_path / "m.jsonl", [
            _row(video_dirs[0], "A", "A"),
            _row(video_dirs[0], "A", "B"),
        ])
        with pytest.raises(DuplicateVideoError) as info:
            load_manifest(path)
        assert info.value.line_number == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestNotFoundError) as info:
            load_manifest(tmp_path / "absent.jsonl")
        assert "absent.jsonl" in str(info.value)
        assert isinstance(info.value, FileNotFoundError)

    def test_parse_error_reports_line(self, tmp_path, video_dirs):
        path = tmp_path / "m.jsonl"
        path.write_text(json.dumps(_row(video_dirs[0], "A", "A")) + "\n\n{not json\n", encoding="utf-8")
        with pytest.raises(ManifestParseError) as info:
            load_manifest(path)
        assert info.value.line_number == 3

    def test_invalid_utf8_reports_line(self, tmp_path, video_dirs):
        path = tmp_path / "m.jsonl"
        good = json.dumps(_row(video_dirs[0], "A", "A")).encode("utf-8")
        path.write_bytes(good + b"\n\xff\xfe" + good + b"\n")
        with pytest.raises(ManifestParseError) as info:
            load_manifest(path)
        assert info.value.line_number == 2
        assert "UTF-8" in str(info.value)

    @pytest.mark.parametrize("change", [
        {"extra": 1},
        {"split": "holdout"},
        {"num_frames": 0},
        {"fps": -1},
        {"fps": float("nan")},
        {"fps": float("inf")},
        {"num_frames": 5.0},
    ])
    def test_invalid_fields(self, tmp_path, video_dirs, change):
        row = _row(video_dirs[0], "A", "A")
        row.update(change)
        with pytest.raises(ManifestParseError):
            load_manifest(write_manifest(tmp_path / "m.jsonl", [row]))

    def test_missing_key(self, tmp_path, video_dirs):
        row = _row(video_dirs[0], "A", "A")
        del row["fps"]
        with pytest.raises(ManifestParseError, match="fps"):
            load_manifest(write_manifest(tmp_path / "m.jsonl", [row]))

    def test_relative_paths_round_trip(self, tmp_path, video_dirs):
        manifest = Manifest.from_records([make_record(video_dirs[0]), make_record(video_dirs[1], driver="B")])
        path = save_manifest(manifest, tmp_path / "out.jsonl")
        first_line = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
        assert first_line["video_path"] == "v0"
        reloaded = load_manifest(path)
        assert [r.to_dict() for r in reloaded] == [r.to_dict() for r in manifest]

    def test_filter_and_hash(self, video_dirs):
        manifest = Manifest.from_records([
            make_record(video_dirs[0], generator="g1"),
            make_record(video_dirs[1], driver="B", generator="g2"),
        ])
        assert len(manifest.filter(generator="g1")) == 1
        assert manifest.drivers() == ["A", "B"]
        assert manifest.content_hash() == Manifest.from_records(manifest.records).content_hash()
        assert manifest.content_hash() != manifest.filter(generator="g1").content_hash()


class TestReadClipFrames:
    def test_index_arithmetic(self, tmp_path):
        directory = write_frames(tmp_path / "v", list(range(100)))
        clip = read_clip_frames(make_record(directory, num_frames=100), start=10, length=64)
        assert clip.shape == (64, 1, 128, 128)
        values = clip[:, 0, 0, 0] * 255.0
        assert torch.allclose(values, torch.arange(10, 74, dtype=torch.float32), atol=1e-3)

    def test_padding_repeats_last_frame(self, tmp_path):
        directory = write_frames(tmp_path / "v", list(range(50)))
        clip = read_clip_frames(make_record(directory, num_frames=50), start=0, length=64)
        values = (clip[:, 0, 0, 0] * 255.0).round()
        assert values[:50].tolist() == list(range(50))
        assert values[50:].tolist() == [49.0] * 14

    def test_white_rgb_is_one(self, tmp_path):
        directory = write_frames(tmp_path / "v", [255] * 3, channels=3)
        clip = read_clip_frames(make_record(directory, num_frames=3), start=0, length=3)
        assert torch.all(clip == 1.0)

    def test_bt601_luma(self):
        pure_red_bgr = np.zeros((2, 2, 3), dtype=np.uint8)
        pure_red_bgr[:, :, 2] = 255
        assert np.allclose(to_luma(pure_red_bgr), 0.299)

    def test_out_of_range(self, tmp_path):
        directory = write_frames(tmp_path / "v", [0] * 5)
        record = make_record(directory, num_frames=5)
        with pytest.raises(ClipRangeError):
            read_clip_frames(record, start=5, length=2)
        with pytest.raises(ClipRangeError):
            read_clip_frames(record, start=0, length=0)

    def test_inspect_directory(self, tmp_path):
        directory = write_frames(tmp_path / "v", [0] * 7)
        record = inspect_video(directory)
        assert record.num_frames == 7
        assert record.fps == 25.0


class TestSyntheticGenerator:
    def test_all_pairs(self, tmp_path):
        cfg = tiny_synth_config(n_identities=2, videos_per_pair=1, n_test_identities=0)
        manifest = generate_synthetic_dataset(cfg, tmp_path)
        pairs = sorted((r.target_id, r.driver_id) for r in manifest)
        assert pairs == [("id000", "id000"), ("id000", "id001"), ("id001", "id000"), ("id001", "id001")]
        assert (tmp_path / "manifest.jsonl").is_file()
        assert len(load_manifest(tmp_path / "manifest.jsonl")) == 4

    def test_bit_identical_reruns(self, tmp_path):
        cfg = tiny_synth_config(n_identities=2, videos_per_pair=1, n_test_identities=0)
        generate_synthetic_dataset(cfg, tmp_path / "a")
        generate_synthetic_dataset(cfg, tmp_path / "b")
        assert dataset_hash(tmp_path / "a") == dataset_hash(tmp_path / "b")

    def test_parallel_rendering_is_deterministic(self, tmp_path):
        cfg = tiny_synth_config(n_identities=2, videos_per_pair=2, n_test_identities=0)
        generate_synthetic_dataset(cfg, tmp_path / "serial")
        generate_synthetic_dataset(tiny_synth_config(n_identities=2, videos_per_pair=2, n_test_identities=0,
                                                     num_workers=3), tmp_path / "threads")
        assert dataset_hash(tmp_path / "serial") == dataset_hash(tmp_path / "threads")

    def test_motion_seed_changes_frames(self, tmp_path):
        generate_synthetic_dataset(tiny_synth_config(n_identities=2, n_test_identities=0), tmp_path / "a")
        generate_synthetic_dataset(tiny_synth_config(n_identities=2, n_test_identities=0, motion_seed=1),
                                   tmp_path / "b")
        assert dataset_hash(tmp_path / "a") != dataset_hash(tmp_path / "b")

    def test_sidecars_follow_target_and_driver(self, tiny_dataset):
        _, manifest = tiny_dataset
        by_driver = {}
        for record in manifest:
            sidecar = load_sidecar(record)
            assert sidecar["appearance_params"] == appearance_params(0, record.target_id)
            assert sidecar["motion_params"] == motion_params(0, record.driver_id)
            assert sidecar["style_tag"] == record.generator
            by_driver.setdefault(record.driver_id, []).append(sidecar["motion_params"])
        for vectors in by_driver.values():
            assert all(v == vectors[0] for v in vectors)

    def test_motion_program_has_asymmetry(self):
        params = motion_params(0, "id000")
        assert len(params) >= 6
        assert {"brow_asym", "eye_asym", "mouth_asym"} <= set(params)

    def test_identity_disjoint_splits(self, tiny_dataset):
        _, manifest = tiny_dataset
        assert set(manifest.identity_split_map.values()) == {"train", "test"}
        for record in manifest:
            assert manifest.identity_split_map[record.target_id] == record.split
            assert manifest.identity_split_map[record.driver_id] == record.split
        assert len(manifest.drivers("train")) == 4
        assert len(manifest.drivers("test")) == 2

    def test_frames_match_manifest(self, tiny_dataset):
        _, manifest = tiny_dataset
        record = manifest.records[0]
        low, high = tiny_synth_config().frame_count_range
        assert low <= record.num_frames <= high
        image = cv2.imread(str(sorted(Path(record.video_path).iterdir())[0]))
        assert image.shape[:2] == (32, 32)
        clip = read_clip_frames(record, 0, record.num_frames, size=32)
        assert clip.min() >= 0.0 and clip.max() <= 1.0
