import json
import math
import os
from collections import Counter

import numpy as np
import pytest
import torch

from conftest import make_record, tiny_run_config
from core.base.records import Manifest
from core.model.checkpoint import read_sidecar
from features import trainer
from features.batch_sampler import group_by_driver, sample_batch
from features.trainer import lr_at, train
from utils.config import TrainConfig
from utils.errors import ConfigError, DataError, InsufficientIdentitiesError, NonFiniteLossError


def _read_metrics(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def _train(manifest, out_dir, cfg=None):
    cfg = cfg or tiny_run_config()
    return train(manifest, cfg.model, cfg.train, out_dir, sampler_cfg=cfg.sampler, supcon_cfg=cfg.supcon)


class TestLearningRate:
    cfg = TrainConfig(epochs=10, steps_per_epoch=10, warmup_epochs=2, base_lr=1e-3)

    def test_warmup_ramp(self):
        assert lr_at(0, self.cfg) == 0.0
        assert lr_at(10, self.cfg) == pytest.approx(5e-4)
        assert lr_at(20, self.cfg) == pytest.approx(1e-3)
        assert abs(lr_at(20 - 1e-9, self.cfg) - lr_at(20, self.cfg)) < 1e-12

    def test_cosine_decay(self):
        assert lr_at(59.5, self.cfg) == pytest.approx(5e-4)
        assert lr_at(99, self.cfg) == pytest.approx(0.0, abs=1e-12)
        values = [lr_at(step, self.cfg) for step in range(20, 100)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_without_warmup(self):
        cfg = TrainConfig(epochs=2, steps_per_epoch=5, warmup_epochs=0, base_lr=2e-3)
        assert lr_at(0, cfg) == pytest.approx(2e-3)

    @pytest.mark.parametrize("step", [-1, 100, 250])
    def test_out_of_range(self, step):
        with pytest.raises(ConfigError):
            lr_at(step, self.cfg)


@pytest.fixture
def balanced_manifest(tmp_path):
    records = []
    for driver, count in (("A", 5), ("B", 5), ("C", 1)):
        for k in range(count):
            records.append(make_record(tmp_path / f"{driver}{k}", target=f"T{k}", driver=driver))
    for k in range(2):
        records.append(make_record(tmp_path / f"X{k}", target="X", driver="X", split="test"))
    return Manifest.from_records(records)


class TestBatchSampler:
    def test_group_by_driver(self, balanced_manifest):
        groups = group_by_driver(balanced_manifest)
        assert list(groups) == ["A", "B", "C"]
        assert len(groups["A"]) == 5

    def test_counts_and_distinct_videos(self, balanced_manifest):
        cfg = TrainConfig(n_identities_per_batch=2, clips_per_identity=3)
        rng = np.random.default_rng(0)
        for _ in range(20):
            batch = sample_batch(balanced_manifest, cfg, rng)
            drivers = Counter(driver for _, driver in batch)
            assert len(batch) == 6
            assert len(drivers) == 2 and set(drivers.values()) == {3}
            for driver in drivers:
                paths = [record.video_path for record, d in batch if d == driver]
                if driver != "C":
                    assert len(set(paths)) == 3
            assert all(record.driver_id == driver for record, driver in batch)
            assert all(record.split == "train" for record, _ in batch)

    def test_replacement_for_small_driver(self, balanced_manifest):
        cfg = TrainConfig(n_identities_per_batch=3, clips_per_identity=3)
        batch = sample_batch(balanced_manifest, cfg, np.random.default_rng(1))
        paths = [record.video_path for record, driver in batch if driver == "C"]
        assert len(paths) == 3 and len(set(paths)) == 1

    def test_same_seed_same_batch(self, balanced_manifest):
        cfg = TrainConfig(n_identities_per_batch=2, clips_per_identity=2)
        first = sample_batch(balanced_manifest, cfg, np.random.default_rng(7))
        second = sample_batch(balanced_manifest, cfg, np.random.default_rng(7))
        assert [r.video_path for r, _ in first] == [r.video_path for r, _ in second]

    def test_insufficient_drivers(self, balanced_manifest):
        with pytest.raises(InsufficientIdentitiesError):
            sample_batch(balanced_manifest, TrainConfig(n_identities_per_batch=4, clips_per_identity=2),
                         np.random.default_rng(0))


class TestTrain:
    def test_artifacts(self, tiny_dataset, tmp_path):
        _, manifest = tiny_dataset
        result = _train(manifest, tmp_path / "run")
        checkpoints = tmp_path / "run" / "checkpoints"
        for name in ("epoch_001", "epoch_002", "best", "last"):
            assert (checkpoints / f"{name}.pt").is_file()
            assert (checkpoints / f"{name}.json").is_file()
        sidecar = read_sidecar(result.last_checkpoint)
        assert sidecar["epoch"] == 2
        assert sidecar["manifest_hash"] == manifest.content_hash()
        assert result.best_val_auc is None

        rows = _read_metrics(result.metrics_path)
        assert [row["step"] for row in rows] == list(range(10))
        assert all(math.isfinite(row["loss"]) for row in rows)
        assert rows[0]["lr"] == 0.0
        assert all(row["clipped_grad_norm"] <= 1.0 + 1e-6 for row in rows)

    def test_bit_identical_reruns(self, tiny_dataset, tmp_path):
        _, manifest = tiny_dataset
        first = _train(manifest, tmp_path / "a")
        second = _train(manifest, tmp_path / "b")
        assert first.losses == second.losses
        weights_a = torch.load(first.last_checkpoint, weights_only=True)
        weights_b = torch.load(second.last_checkpoint, weights_only=True)
        assert all(torch.equal(weights_a[key], weights_b[key]) for key in weights_a)

    def test_initial_loss_near_chance(self, tiny_dataset, tmp_path):
        _, manifest = tiny_dataset
        result = _train(manifest, tmp_path / "run")
        # B = 4, log(B - 1) ≈ 1.10
        assert 0.3 < result.losses[0] < 3.0

    def test_non_finite_loss(self, tiny_dataset, tmp_path, monkeypatch):
        _, manifest = tiny_dataset

        def broken(embeddings, labels, cfg):
            return embeddings.sum() * float("nan")

        monkeypatch.setattr(trainer, "supcon_loss", broken)
        with pytest.raises(NonFiniteLossError) as info:
            _train(manifest, tmp_path / "run")
        assert info.value.step == 0
        diagnostic = json.loads((tmp_path / "run" / "diagnostic.json").read_text(encoding="utf-8"))
        assert diagnostic["step"] == 0

    def test_global_determinism_state_is_restored(self, tiny_dataset, tmp_path, monkeypatch):
        _, manifest = tiny_dataset
        monkeypatch.delenv("CUBLAS_WORKSPACE_CONFIG", raising=False)
        before = torch.are_deterministic_algorithms_enabled()
        _train(manifest, tmp_path / "ok")
        assert torch.are_deterministic_algorithms_enabled() == before
        assert "CUBLAS_WORKSPACE_CONFIG" not in os.environ

        def broken(embeddings, labels, cfg):
            return embeddings.sum() * float("nan")

        monkeypatch.setattr(trainer, "supcon_loss", broken)
        with pytest.raises(NonFiniteLossError):
            _train(manifest, tmp_path / "broken")
        assert torch.are_deterministic_algorithms_enabled() == before

    def test_deterministic_mode_is_active_inside(self):
        before = torch.are_deterministic_algorithms_enabled()
        with trainer.deterministic_mode(0, mixed_precision=False):
            assert torch.are_deterministic_algorithms_enabled()
        assert torch.are_deterministic_algorithms_enabled() == before

    def test_empty_train_split(self, tiny_dataset, tmp_path):
        _, manifest = tiny_dataset
        with pytest.raises(DataError):
            _train(manifest.filter(split="test"), tmp_path / "run")
