"""Shared fixtures: tiny synthetic datasets, frame directories and small model configs."""

import json
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
import pytest

from core.base.records import VideoRecord
from core.dataset.synthetic import generate_synthetic_dataset
from utils.config import ModelConfig, RunConfig, SamplerConfig, SynthConfig, TrainConfig


def write_frames(directory: Path, values: Sequence[int], size: int = 8, channels: int = 1) -> Path:
    """One constant image per value (frame i has intensity values[i])."""
    directory.mkdir(parents=True, exist_ok=True)
    for i, value in enumerate(values):
        shape = (size, size) if channels == 1 else (size, size, channels)
        cv2.imwrite(str(directory / f"frame_{i:05d}.png"), np.full(shape, value, dtype=np.uint8))
    return directory


def make_record(path, target="A", driver="A", generator="g", split="train", num_frames=10, fps=25.0):
    return VideoRecord(str(path), target, driver, generator, split, num_frames, fps)


def write_manifest(path: Path, rows) -> Path:
    path.write_text("".join(json.dumps(row) + "\n" for row in rows), encoding="utf-8")
    return path


def tiny_model_config(**changes) -> ModelConfig:
    values = dict(
        condition="feat_diff",
        clip_length=4,
        ccc_k=2,
        embed_dim=8,
        convstack_channels=(4, 8, 8, 16),
        frame_size=32,
        head_channels=(8, 4),
        mlp_hidden=16,
        pool_size=(1, 4),
    )
    values.update(changes)
    return ModelConfig(**values)


def miniature_model_config(**changes) -> ModelConfig:
    """16×16 frames → 2×2 feature maps; small enough for finite differences."""
    values = dict(
        condition="feat_diff",
        clip_length=4,
        ccc_k=1,
        embed_dim=4,
        convstack_channels=(2, 4, 4, 4),
        frame_size=16,
        head_channels=(4, 4),
        mlp_hidden=6,
        pool_size=(1, 2),
        dropout=0.0,
    )
    values.update(changes)
    return ModelConfig(**values)


def tiny_synth_config(**changes) -> SynthConfig:
    values = dict(
        n_identities=6,
        videos_per_pair=2,
        frame_count_range=(6, 10),
        frame_size=32,
        motion_seed=0,
        style_tags=("synth_a",),
        n_val_identities=0,
        n_test_identities=2,
    )
    values.update(changes)
    return SynthConfig(**values)


def tiny_run_config(**model_changes) -> RunConfig:
    model = tiny_model_config(**model_changes)
    return RunConfig(
        synth=tiny_synth_config(),
        sampler=SamplerConfig(clip_length=model.clip_length, rng_seed=0),
        model=model,
        train=TrainConfig(
            n_identities_per_batch=2,
            clips_per_identity=2,
            epochs=2,
            steps_per_epoch=5,
            warmup_epochs=1,
            device="cpu",
        ),
    ).validate()


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """6 identities (4 train, 2 test), 32×32 frames, single style."""
    out_dir = tmp_path_factory.mktemp("tiny_synth")
    manifest = generate_synthetic_dataset(tiny_synth_config(), out_dir)
    return out_dir, manifest


@pytest.fixture(scope="session")
def two_style_dataset(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("two_styles")
    cfg = tiny_synth_config(n_identities=4, style_tags=("synth_a", "synth_b"), videos_per_pair=2)
    manifest = generate_synthetic_dataset(cfg, out_dir)
    return out_dir, manifest
