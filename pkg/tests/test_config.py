import json

import pytest
import yaml

from change_logging.diff_analyzer import ConfigDiffAnalyzer
from change_logging.logger import METRIC_FIELDS, RunLogger
from utils.config import Config, ModelConfig, RunConfig, apply_overrides
from utils.errors import ArtifactIOError, ConfigError


@pytest.fixture
def config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("FINGERDIFF_OUT", str(tmp_path / "runs"))
    monkeypatch.delenv("FINGERDIFF_DEVICE", raising=False)
    return Config()


class TestOverrides:
    def test_typed_values(self):
        cfg = apply_overrides(RunConfig(), [
            "train.base_lr=5e-4",
            "model.convstack_channels=[8, 16, 32, 64]",
            "train.mixed_precision=true",
            "synth.style_tags=synth_a,synth_b",
        ])
        assert cfg.train.base_lr == 5e-4
        assert cfg.model.convstack_channels == (8, 16, 32, 64)
        assert cfg.train.mixed_precision is True
        assert cfg.synth.style_tags == ("synth_a", "synth_b")

    @pytest.mark.parametrize("item", ["model.depth=3", "optim.lr=1", "ccc_k=3", "model.ccc_k"])
    def test_rejected(self, item):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), [item])

    def test_bad_type(self):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), ["train.epochs=1.5"])

    @pytest.mark.parametrize("item", ["train.epochs=true", "supcon.temperature=false",
                                      "model.convstack_channels=[true, 8, 8, 16]"])
    def test_booleans_are_not_numbers(self, item):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), [item])


class TestResolve:
    def test_defaults_without_file(self, config):
        assert config.resolve() == RunConfig().validate()

    def test_file_then_overrides_then_seed(self, config, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(yaml.safe_dump({"train": {"epochs": 7, "seed": 1}, "model": {"ccc_k": 3}}),
                        encoding="utf-8")
        cfg = config.resolve(str(path), ["model.ccc_k=5"], seed=9)
        assert cfg.train.epochs == 7
        assert cfg.model.ccc_k == 5
        assert (cfg.train.seed, cfg.sampler.rng_seed, cfg.synth.motion_seed) == (9, 9, 9)

    def test_missing_explicit_file(self, config, tmp_path):
        with pytest.raises(ConfigError):
            config.resolve(str(tmp_path / "absent.yaml"))

    def test_unknown_section(self, config, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("optimizer:\n  lr: 1\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            config.resolve(str(path))

    def test_clip_length_mismatch(self, config):
        with pytest.raises(ConfigError, match="clip_length"):
            config.resolve(overrides=["sampler.clip_length=32"])

    def test_device_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("FINGERDIFF_DEVICE", "cpu")
        assert Config().resolve().train.device == "cpu"

    def test_output_dir(self, config, tmp_path):
        assert config.output_dir("run") == tmp_path / "runs" / "run"
        assert config.output_dir(str(tmp_path / "abs")) == tmp_path / "abs"

    def test_shipped_file_matches_defaults(self):
        from pathlib import Path
        shipped = Path(__file__).resolve().parent.parent / "fingerdiff_config.yaml"
        data = yaml.safe_load(shipped.read_text(encoding="utf-8"))
        cfg = RunConfig.from_dict(data).validate()
        assert cfg.model == ModelConfig()


class TestValidation:
    @pytest.mark.parametrize("changes", [
        {"condition": "optical_flow"},
        {"clip_length": 1},
        {"dropout": 1.0},
        {"ccc_k": 256},
        {"convstack_channels": (16, 32, 64, 127)},
    ])
    def test_model(self, changes):
        with pytest.raises(ConfigError):
            ModelConfig(**changes).validate()

    def test_static_accepts_single_frame(self):
        ModelConfig(condition="static", clip_length=1).validate()

    def test_hash_is_stable_and_sensitive(self):
        assert RunConfig().config_hash() == RunConfig().config_hash()
        assert RunConfig().config_hash() != apply_overrides(RunConfig(), ["train.seed=1"]).config_hash()


class TestDiffAnalyzer:
    def test_detects_changes(self):
        before = {"train": {"epochs": 150, "seed": 0}, "model": {"ccc_k": 4}}
        after = {"train": {"epochs": 3, "seed": 0}, "model": {"ccc_k": 4, "extra": 1}}
        differences = ConfigDiffAnalyzer.detect_differences(before, after)
        assert differences == [
            {"type": "AJOUT", "cle": "model.extra", "modifie": 1},
            {"type": "MODIFIE", "cle": "train.epochs", "original": 150, "modifie": 3},
        ]

    def test_unified_diff(self):
        text = ConfigDiffAnalyzer.unified_diff({"train": {"epochs": 150}}, {"train": {"epochs": 3}})
        assert "-  epochs: 150" in text and "+  epochs: 3" in text


class TestRunLogger:
    def test_journal_and_metrics(self, tmp_path):
        logger = RunLogger(tmp_path / "run")
        log_file = logger.init_log_file("train", {"config_hash": "abc"})
        resolved = apply_overrides(RunConfig(), ["train.epochs=3"]).to_dict()
        logger.log_config(resolved, RunConfig().to_dict())
        logger.log_event("ÉPOQUE 1", {"perte": 1.2})
        logger.log_metrics({"step": 0, "loss": 1.1, "ignored": True})

        text = log_file.read_text(encoding="utf-8")
        assert log_file.parent.name == "LOGS"
        assert "config_hash: abc" in text
        assert "MODIFICATIONS PAR RAPPORT AUX DÉFAUTS: 1" in text
        assert "train.epochs" in text
        assert "DIFF UNIFIÉ" in text
        assert "-  epochs: 150" in text and "+  epochs: 3" in text
        row = json.loads(logger.metrics_file.read_text(encoding="utf-8"))
        assert tuple(row) == METRIC_FIELDS
        assert row["loss"] == 1.1 and row["lr"] is None

    def test_unwritable_metrics(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x", encoding="utf-8")
        with pytest.raises(ArtifactIOError):
            RunLogger(blocker / "run").log_metrics({"step": 0})
