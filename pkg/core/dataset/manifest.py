"""
Lecture / écriture du manifeste (une ligne JSON par vidéo).
"""

import json
import math
from pathlib import Path
from typing import Union

from core.base.records import Manifest, VideoRecord, RECORD_FIELDS
from utils.config import SPLITS
from utils.errors import ManifestNotFoundError, ManifestParseError, ArtifactIOError


def _parse_line(raw: bytes, line_number: int, base_dir: Path, check_paths: bool) -> VideoRecord:
    try:
        data = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise ManifestParseError(line_number, f"encodage UTF-8 invalide (octet {e.start})") from e
    except json.JSONDecodeError as e:
        raise ManifestParseError(line_number, f"JSON invalide ({e.msg})") from e

    if not isinstance(data, dict):
        raise ManifestParseError(line_number, "un objet JSON est attendu")

    missing = [k for k in RECORD_FIELDS if k not in data]
    extra = sorted(set(data) - set(RECORD_FIELDS))
    if missing:
        raise ManifestParseError(line_number, f"champs manquants : {missing}")
    if extra:
        raise ManifestParseError(line_number, f"champs inconnus : {extra}")

    for key in ("video_path", "target_id", "driver_id", "generator", "split"):
        if not isinstance(data[key], str) or not data[key]:
            raise ManifestParseError(line_number, f"'{key}' doit être une chaîne non vide")
    if data["split"] not in SPLITS:
        raise ManifestParseError(line_number, f"split inconnu '{data['split']}' (attendu : {SPLITS})")

    num_frames = data["num_frames"]
    if isinstance(num_frames, bool) or not isinstance(num_frames, int) or num_frames < 1:
        raise ManifestParseError(line_number, f"num_frames doit être un entier ≥ 1, reçu {num_frames!r}")
    fps = data["fps"]
    if isinstance(fps, bool) or not isinstance(fps, (int, float)) or not math.isfinite(fps) or fps <= 0:
        raise ManifestParseError(line_number, f"fps doit être un nombre fini > 0, reçu {fps!r}")

    video_path = Path(data["video_path"])
    if not video_path.is_absolute():
        video_path = base_dir / video_path
    if check_paths and not video_path.exists():
        raise ManifestParseError(line_number, f"video_path introuvable : {video_path}")

    return VideoRecord(
        video_path=str(video_path),
        target_id=data["target_id"],
        driver_id=data["driver_id"],
        generator=data["generator"],
        split=data["split"],
        num_frames=num_frames,
        fps=float(fps),
    )


def load_manifest(path: Union[str, Path], check_paths: bool = True) -> Manifest:
    """
    Charge et valide un manifeste.

    Args:
        path: Fichier manifeste (une ligne JSON par enregistrement)
        check_paths: Vérifier que chaque video_path existe

    Returns:
        Manifest validé (unicité des chemins, splits disjoints par identité)

    Raises:
        ManifestNotFoundError: Fichier absent
        ManifestParseError: Ligne invalide (avec numéro de ligne)
        DuplicateVideoError: video_path répété
        SplitLeakError: Identité dans deux splits
    """
    manifest_path = Path(path)
    if not manifest_path.is_file():
        raise ManifestNotFoundError(manifest_path)

    base_dir = manifest_path.parent
    records = []
    with open(manifest_path, "rb") as f:
        for line_number, raw in enumerate(f, 1):
            if not raw.strip():
                continue
            records.append((line_number, _parse_line(raw, line_number, base_dir, check_paths)))

    manifest = Manifest(records=[r for _, r in records])
    manifest.validate(line_numbers=[n for n, _ in records])
    return manifest


def save_manifest(manifest: Manifest, path: Union[str, Path]) -> Path:
    """
    Écrit le manifeste, chemins relatifs au dossier du fichier quand c'est possible.

    Args:
        manifest: Manifeste à écrire
        path: Fichier de sortie

    Returns:
        Chemin écrit
    """
    manifest_path = Path(path)
    base_dir = manifest_path.parent.resolve()
    try:
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        with open(manifest_path, "w", encoding="utf-8") as f:
            for record in manifest.records:
                row = record.to_dict()
                video_path = Path(record.video_path)
                try:
                    row["video_path"] = video_path.resolve().relative_to(base_dir).as_posix()
                except ValueError:
                    row["video_path"] = str(video_path)
                f.write(json.dumps(row, ensure_ascii=False) + "\n")
    except OSError as e:
        raise ArtifactIOError(f"Écriture du manifeste impossible {manifest_path} : {e}") from e
    return manifest_path
