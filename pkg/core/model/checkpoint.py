"""
Checkpoints: archive de poids torch + sidecar JSON {schema_version, model_config, epoch, rng_state, manifest_hash}.
"""

import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import torch

from core.model.fingerprint_model import FingerprintModel
from utils.config import ModelConfig, RunConfig, _plain
from utils.errors import ArtifactIOError, CheckpointMismatchError, ConfigError

SCHEMA_VERSION = 1


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def save_checkpoint(
    model: FingerprintModel,
    path: Union[str, Path],
    epoch: int,
    rng_state: Optional[Dict[str, Any]] = None,
    manifest_hash: Optional[str] = None,
) -> Path:
    """
    Sauvegarde les poids et le sidecar.

    Args:
        model: Modèle à sauvegarder
        path: Fichier .pt
        epoch: Époque atteinte
        rng_state: État du générateur numpy (bit_generator.state)
        manifest_hash: Empreinte du manifeste d'entraînement

    Returns:
        Chemin du fichier de poids
    """
    weights = Path(path)
    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "model_config": _plain(asdict(model.cfg)),
        "epoch": epoch,
        "rng_state": rng_state,
        "manifest_hash": manifest_hash,
    }
    try:
        weights.parent.mkdir(parents=True, exist_ok=True)
        torch.save(model.state_dict(), weights)
        with open(sidecar_path(weights), "w", encoding="utf-8") as f:
            json.dump(sidecar, f, indent=2, sort_keys=True)
    except OSError as e:
        raise ArtifactIOError(f"Écriture du checkpoint impossible {weights} : {e}") from e
    return weights


def read_sidecar(path: Union[str, Path]) -> Dict[str, Any]:
    sidecar = sidecar_path(path)
    try:
        with open(sidecar, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ArtifactIOError(f"Sidecar introuvable : {sidecar}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactIOError(f"Sidecar illisible {sidecar} : {e}") from e
    if data.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointMismatchError(
            f"schema_version {data.get('schema_version')!r} non supportée (attendu {SCHEMA_VERSION})"
        )
    return data


def load_checkpoint(
    path: Union[str, Path],
    expected_config: Optional[ModelConfig] = None,
    device: Union[str, torch.device] = "cpu",
) -> Tuple[FingerprintModel, Dict[str, Any]]:
    """
    Recharge un modèle et son sidecar.

    Args:
        path: Fichier .pt
        expected_config: Si fourni, doit être identique à la configuration sauvegardée
        device: Device cible

    Returns:
        (modèle en mode eval, sidecar)

    Raises:
        ArtifactIOError: Fichiers absents ou illisibles
        CheckpointMismatchError: Schéma ou configuration incompatibles
    """
    weights = Path(path)
    if not weights.is_file():
        raise ArtifactIOError(f"Checkpoint introuvable : {weights}")
    sidecar = read_sidecar(weights)

    try:
        saved_config = RunConfig.from_dict({"model": sidecar["model_config"]}).model
    except (KeyError, ConfigError) as e:
        raise CheckpointMismatchError(f"model_config invalide dans le sidecar : {e}") from e

    if expected_config is not None and asdict(expected_config) != asdict(saved_config):
        differences = sorted(
            key for key, value in asdict(expected_config).items() if asdict(saved_config)[key] != value
        )
        raise CheckpointMismatchError(f"Configuration du modèle incompatible ({', '.join(differences)})")

    model = FingerprintModel(saved_config)
    try:
        state = torch.load(weights, map_location=device, weights_only=True)
        model.load_state_dict(state)
    except RuntimeError as e:
        raise CheckpointMismatchError(f"Poids incompatibles avec la configuration : {e}") from e
    except OSError as e:
        raise ArtifactIOError(f"Lecture du checkpoint impossible {weights} : {e}") from e
    model.to(device).eval()
    return model, sidecar
