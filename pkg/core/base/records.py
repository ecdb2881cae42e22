"""
Records - Types de base du manifeste vidéo.
Une ligne de manifeste = un VideoRecord ; le Manifest garantit des splits disjoints par identité.
"""

import hashlib
import json
from dataclasses import dataclass, asdict, field
from typing import Dict, List, Optional, Iterable

from utils.errors import SplitLeakError, DuplicateVideoError

RECORD_FIELDS = ("video_path", "target_id", "driver_id", "generator", "split", "num_frames", "fps")


@dataclass(frozen=True)
class VideoRecord:
    """Une vidéo synthétique : apparence de target_id animée par driver_id."""
    video_path: str
    target_id: str
    driver_id: str
    generator: str
    split: str
    num_frames: int
    fps: float

    @property
    def is_self_reenactment(self) -> bool:
        """Self-reenactment ssi la cible est aussi le conducteur (jamais stocké)."""
        return self.target_id == self.driver_id

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class Manifest:
    """Liste ordonnée de VideoRecord + affectation identité → split."""
    records: List[VideoRecord] = field(default_factory=list)
    identity_split_map: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Iterable[VideoRecord]) -> "Manifest":
        """
        Construit un manifeste validé.

        Args:
            records: Enregistrements dans l'ordre

        Returns:
            Manifest dont les invariants sont vérifiés

        Raises:
            DuplicateVideoError: video_path répété
            SplitLeakError: identité présente dans deux splits
        """
        manifest = cls(records=list(records))
        manifest.validate()
        return manifest

    def validate(self, line_numbers: Optional[List[int]] = None) -> None:
        """
        Recalcule identity_split_map en vérifiant unicité et disjonction des splits.

        Args:
            line_numbers: Numéros de ligne du fichier source (pour les messages d'erreur)
        """
        if line_numbers is None:
            line_numbers = list(range(1, len(self.records) + 1))
        seen_paths: Dict[str, int] = {}
        split_map: Dict[str, str] = {}
        for line_number, record in zip(line_numbers, self.records):
            if record.video_path in seen_paths:
                raise DuplicateVideoError(record.video_path, line_number, seen_paths[record.video_path])
            seen_paths[record.video_path] = line_number

            for identity in (record.target_id, record.driver_id):
                previous = split_map.setdefault(identity, record.split)
                if previous != record.split:
                    raise SplitLeakError(identity, previous, record.split, line_number)
        self.identity_split_map = split_map

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def filter(self, split: Optional[str] = None, generator: Optional[str] = None) -> "Manifest":
        """Sous-manifeste restreint à un split et/ou un générateur."""
        kept = [
            r for r in self.records
            if (split is None or r.split == split) and (generator is None or r.generator == generator)
        ]
        return Manifest.from_records(kept)

    def drivers(self, split: Optional[str] = None) -> List[str]:
        return sorted({r.driver_id for r in self.records if split is None or r.split == split})

    def targets(self, split: Optional[str] = None) -> List[str]:
        return sorted({r.target_id for r in self.records if split is None or r.split == split})

    def generators(self, split: Optional[str] = None) -> List[str]:
        return sorted({r.generator for r in self.records if split is None or r.split == split})

    def content_hash(self) -> str:
        """Empreinte SHA-256 des enregistrements (ordre compris)."""
        digest = hashlib.sha256()
        for record in self.records:
            digest.update(json.dumps(record.to_dict(), sort_keys=True).encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()
