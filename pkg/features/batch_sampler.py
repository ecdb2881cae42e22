"""
Identity-balanced batches: N drivers × M clips.
"""

from typing import Dict, List, Tuple

import numpy as np

from core.base.records import Manifest, VideoRecord
from utils.config import TrainConfig
from utils.errors import InsufficientIdentitiesError


def group_by_driver(manifest: Manifest, split: str = "train") -> Dict[str, List[VideoRecord]]:
    """Vidéos du split par conducteur (conducteurs triés, ordre du manifeste conservé)."""
    groups: Dict[str, List[VideoRecord]] = {}
    for record in manifest:
        if record.split == split:
            groups.setdefault(record.driver_id, []).append(record)
    return dict(sorted(groups.items()))


def sample_batch(manifest: Manifest, cfg: TrainConfig, rng: np.random.Generator,
                 split: str = "train") -> List[Tuple[VideoRecord, str]]:
    """
    Tire N conducteurs distincts puis M vidéos par conducteur.

    Les M vidéos sont distinctes si le conducteur en a au moins M,
    tirées avec remise sinon.

    Args:
        manifest: Manifeste complet
        cfg: N = n_identities_per_batch, M = clips_per_identity
        rng: Générateur numpy
        split: Split utilisé

    Returns:
        N·M couples (record, driver_id), groupés par conducteur

    Raises:
        InsufficientIdentitiesError: Moins de N conducteurs dans le split
    """
    groups = group_by_driver(manifest, split)
    drivers = list(groups)
    n, m = cfg.n_identities_per_batch, cfg.clips_per_identity
    if len(drivers) < n:
        raise InsufficientIdentitiesError(
            f"{len(drivers)} conducteurs dans le split '{split}', {n} requis par batch"
        )

    batch = []
    for index in rng.choice(len(drivers), size=n, replace=False):
        driver = drivers[int(index)]
        videos = groups[driver]
        picks = rng.choice(len(videos), size=m, replace=len(videos) < m)
        batch.extend((videos[int(p)], driver) for p in picks)
    return batch
