import json
import shutil
from pathlib import Path

import pytest
import yaml

import main_fingerprint
from main_fingerprint import EXIT_CODES, main, parse_invocation
from utils.errors import ArtifactIOError

TINY_CONFIG = {
    "synth": {
        "n_identities": 6,
        "videos_per_pair": 2,
        "frame_count_range": [6, 10],
        "frame_size": 32,
        "n_test_identities": 2,
    },
    "sampler": {"clip_length": 4},
    "model": {
        "clip_length": 4,
        "ccc_k": 2,
        "embed_dim": 8,
        "convstack_channels": [4, 8, 8, 16],
        "frame_size": 32,
        "head_channels": [8, 4],
        "mlp_hidden": 16,
        "pool_size": [1, 4],
    },
    "train": {
        "n_identities_per_batch": 2,
        "clips_per_identity": 2,
        "epochs": 2,
        "steps_per_epoch": 3,
        "warmup_epochs": 1,
        "device": "cpu",
    },
}


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("FINGERDIFF_OUT", str(tmp_path / "runs"))
    config = tmp_path / "tiny.yaml"
    config.write_text(yaml.safe_dump(TINY_CONFIG), encoding="utf-8")
    return tmp_path, str(config)


def _last_json_line(text):
    return json.loads(text.strip().splitlines()[-1])


def test_parse_invocation():
    inv = parse_invocation(["verify", "--checkpoint", "c.pt", "--video", "v", "--enrolled", "e.json",
                            "--set", "eval.verify_threshold=0.4", "--set", "train.seed=3", "--threshold", "0.2"])
    assert inv.subcommand == "verify"
    assert inv.overrides == ["eval.verify_threshold=0.4", "train.seed=3"]
    assert inv.threshold == 0.2


def test_synth_data_is_reproducible(workspace):
    root, config = workspace
    assert main(["synth-data", "--config", config, "--out", "first"]) == 0
    assert main(["synth-data", "--config", config, "--out", "second"]) == 0
    first = (root / "runs" / "first" / "dataset_hash.txt").read_text(encoding="utf-8")
    second = (root / "runs" / "second" / "dataset_hash.txt").read_text(encoding="utf-8")
    assert first == second
    assert list((root / "runs" / "first" / "LOGS").glob("synth_data_*.txt"))


def test_unknown_override_exits_with_config_code(workspace, capsys):
    _, config = workspace
    assert main(["synth-data", "--config", config, "--set", "model.depth=3"]) == EXIT_CODES["config"] == 2
    assert "ERREUR [config]" in capsys.readouterr().err


def test_missing_manifest_exits_with_data_code(workspace, capsys):
    root, config = workspace
    assert main(["train", "--config", config, "--manifest", str(root / "absent.jsonl")]) == 3
    assert "absent.jsonl" in capsys.readouterr().err


def test_undecodable_manifest_exits_with_data_code(workspace, capsys):
    root, config = workspace
    manifest = root / "broken.jsonl"
    manifest.write_bytes(b"\xff\xfe{}\n")
    assert main(["train", "--config", config, "--manifest", str(manifest)]) == 3
    assert "ERREUR [data]" in capsys.readouterr().err


def test_missing_checkpoint_exits_with_io_code(workspace):
    root, config = workspace
    main(["synth-data", "--config", config, "--out", "data"])
    video = next(p for p in (root / "runs" / "data" / "videos").iterdir() if p.is_dir())
    assert main(["embed", "--config", config, "--checkpoint", str(root / "none.pt"), "--video", str(video)]) == 5


def test_end_to_end(workspace, capsys):
    root, config = workspace
    runs = root / "runs"
    assert main(["synth-data", "--config", config, "--out", "data"]) == 0
    manifest = str(runs / "data" / "manifest.jsonl")

    assert main(["train", "--config", config, "--manifest", manifest, "--out", "run"]) == 0
    checkpoint = str(runs / "run" / "checkpoints" / "best.pt")
    assert len((runs / "run" / "metrics.jsonl").read_text(encoding="utf-8").splitlines()) == 6

    assert main(["evaluate", "--config", config, "--manifest", manifest, "--checkpoint", checkpoint,
                 "--out", "eval"]) == 0
    report = json.loads((runs / "eval" / "report.json").read_text(encoding="utf-8"))
    assert 0.0 <= report["mean_auc"] <= 1.0
    assert (runs / "eval" / "scored_pairs.jsonl").is_file()

    video = sorted(p for p in (runs / "data" / "videos").iterdir() if p.is_dir())[0]
    assert main(["embed", "--config", config, "--checkpoint", checkpoint, "--video", str(video),
                 "--out", "emb"]) == 0
    enrolled = runs / "emb" / f"{video.name}.embedding.json"
    assert len(json.loads(enrolled.read_text(encoding="utf-8"))["embedding"]) == 8

    capsys.readouterr()
    assert main(["verify", "--config", config, "--checkpoint", checkpoint, "--video", str(video),
                 "--enrolled", str(enrolled), "--out", "verify"]) == 0
    decision = _last_json_line(capsys.readouterr().out)
    assert decision["score"] >= 0.999
    assert decision["decision"] == "accept"
    assert decision["threshold"] == 0.5

    assert main(["verify", "--config", config, "--checkpoint", checkpoint, "--video", str(video),
                 "--enrolled", str(enrolled), "--threshold", "1.5", "--out", "verify"]) == 0
    assert _last_json_line(capsys.readouterr().out)["decision"] == "reject"

    assert main(["report", "--config", config, "--report", str(runs / "eval" / "report.json"),
                 "--out", "figures"]) == 0
    assert (runs / "figures" / "condition_bars.svg").is_file()


def test_evaluate_rejects_mismatched_model(workspace):
    root, config = workspace
    runs = root / "runs"
    main(["synth-data", "--config", config, "--out", "data"])
    manifest = str(runs / "data" / "manifest.jsonl")
    main(["train", "--config", config, "--manifest", manifest, "--out", "run"])
    code = main(["evaluate", "--config", config, "--manifest", manifest, "--set", "model.ccc_k=3",
                 "--checkpoint", str(runs / "run" / "checkpoints" / "last.pt")])
    assert code == 5


def test_default_yaml_does_not_pin_model(workspace):
    root, config = workspace
    runs = root / "runs"
    main(["synth-data", "--config", config, "--out", "data"])
    manifest = str(runs / "data" / "manifest.jsonl")
    main(["train", "--config", config, "--manifest", manifest, "--out", "run"])
    shutil.copy(Path(main_fingerprint.__file__).parent / "fingerdiff_config.yaml", root / "fingerdiff_config.yaml")
    code = main(["evaluate", "--manifest", manifest, "--set", "train.device=cpu",
                 "--checkpoint", str(runs / "run" / "checkpoints" / "best.pt"), "--out", "eval"])
    assert code == 0
    report = json.loads((runs / "eval" / "report.json").read_text(encoding="utf-8"))
    assert report["clip_length"] == 4


def test_ablate_condition(workspace, monkeypatch):
    root, config = workspace
    main(["synth-data", "--config", config, "--out", "data"])
    calls = []

    def fake_ablation(manifest, cfg, axis, out_dir, seeds=None):
        from features.experiments import AblationRow, AblationTable
        calls.append((axis, seeds))
        return AblationTable(axis=axis, rows=[AblationRow("feat_diff", [0], [0.8], 0.8)])

    monkeypatch.setattr("features.experiments.run_ablation", fake_ablation)
    assert main(["ablate", "--config", config, "--manifest", str(root / "runs" / "data" / "manifest.jsonl"),
                 "--axis", "condition", "--seeds", "0", "1", "--out", "ablate"]) == 0
    assert calls == [("condition", [0, 1])]
    assert (root / "runs" / "ablate" / "ablation_condition.md").is_file()
    assert (root / "runs" / "ablate" / "condition_bars.svg").is_file()


@pytest.mark.parametrize("payload", [
    {"embedding": [0.1, "x", 0.3]},
    {"embedding": [0.1, None]},
    {"embedding": [True, 0.2]},
    {"embedding": []},
    {"other": 1},
])
def test_load_enrolled_rejects_malformed_vectors(tmp_path, payload):
    path = tmp_path / "bad.embedding.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ArtifactIOError):
        main_fingerprint.load_enrolled(str(path))


def test_load_enrolled_reads_embed_output(tmp_path):
    path = tmp_path / "ok.embedding.json"
    path.write_text(json.dumps({"embedding": [1, 0.5, -0.25]}), encoding="utf-8")
    assert main_fingerprint.load_enrolled(str(path)).tolist() == [1.0, 0.5, -0.25]


def test_handlers_cover_subcommands():
    assert set(main_fingerprint.HANDLERS) == set(main_fingerprint.SUBCOMMANDS)
