"""
Clip sampling: random temporal crop for training, center crop for evaluation.
"""

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
import torch

from core.base.records import VideoRecord
from core.dataset.frame_reader import FRAME_SIZE, read_clip_frames
from utils.config import SamplerConfig
from utils.errors import ClipRangeError


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)) and key >= 0:
        return int(key)
    return int.from_bytes(hashlib.sha256(str(key).encode("utf-8")).digest()[:4], "little")


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """
    Générateur indépendant dérivé de (seed, *keys).

    Args:
        seed: Graine de base
        keys: Clés entières ou chaînes (hachées de façon stable)

    Returns:
        numpy Generator reproductible quel que soit l'ordre d'exécution
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.default_rng(sequence)


def sample_start(num_frames: int, cfg: SamplerConfig, rng: Optional[np.random.Generator] = None) -> int:
    """
    Indice de départ du clip.

    Args:
        num_frames: Nombre de frames N de la vidéo
        cfg: Configuration (T, mode)
        rng: Générateur pour train_random (dérivé de cfg.rng_seed sinon)

    Returns:
        s uniforme sur [0, max(0, N-T)] (train_random) ou max(0, (N-T)//2) (eval_center)
    """
    if num_frames < 1:
        raise ClipRangeError(f"num_frames doit être ≥ 1, reçu {num_frames}")
    slack = max(0, num_frames - cfg.clip_length)
    if cfg.mode == "eval_center":
        return slack // 2
    if rng is None:
        rng = derive_rng(cfg.rng_seed, "start", num_frames)
    return int(rng.integers(0, slack + 1))


def make_clip(record: VideoRecord, cfg: SamplerConfig, rng: Optional[np.random.Generator] = None,
              size: int = FRAME_SIZE) -> torch.Tensor:
    """
    Clip de T frames consécutives (dernière frame répétée si N < T).

    Sans rng, le tirage train_random est dérivé de (rng_seed, video_path) :
    deux appels identiques donnent le même clip.

    Returns:
        Tenseur T×1×size×size dans [0, 1]
    """
    if rng is None and cfg.mode == "train_random":
        rng = derive_rng(cfg.rng_seed, "clip", record.video_path)
    start = sample_start(record.num_frames, cfg, rng)
    return read_clip_frames(record, start, cfg.clip_length, size=size)


class ClipLoader:
    """Charge un lot de clips, éventuellement en parallèle, de façon reproductible."""

    def __init__(self, cfg: SamplerConfig, num_workers: int = 0, size: int = FRAME_SIZE):
        self.cfg = cfg
        self.num_workers = num_workers
        self.size = size

    def _load_one(self, step: int, slot: int, record: VideoRecord) -> torch.Tensor:
        # Un générateur par (pas, position) : indépendant de l'ordonnancement des threads
        rng = derive_rng(self.cfg.rng_seed, "batch", step, slot)
        return make_clip(record, self.cfg, rng=rng, size=self.size)

    def load(self, records: Sequence[VideoRecord], step: int = 0) -> torch.Tensor:
        """
        Args:
            records: Vidéos du lot, dans l'ordre
            step: Pas d'entraînement (sert à dériver les graines)

        Returns:
            Tenseur B×T×1×size×size
        """
        if not records:
            raise ClipRangeError("Aucune vidéo à charger")
        jobs = list(enumerate(records))
        if self.num_workers > 1:
            with ThreadPoolExecutor(max_workers=self.num_workers) as pool:
                clips = list(pool.map(lambda job: self._load_one(step, job[0], job[1]), jobs))
        else:
            clips = [self._load_one(step, slot, record) for slot, record in jobs]
        return torch.stack(clips)
