"""
FingerprintModel - backbone F5C + tête temporelle, sous l'une des quatre conditions d'entrée.

  feat_diff  : différences de cartes consécutives (T-1)
  pixel_diff : différences de frames en pixels, puis backbone (T-1)
  raw_feat   : cartes brutes (T)
  static     : frame centrale seule (1)
"""

from typing import Dict, Sequence, Union

import torch
import torch.nn as nn

from core.model.f5c import F5CBackbone
from core.model.head import TemporalIdentityHead
from utils.config import ModelConfig
from utils.errors import ShapeMismatchError


def build_motion_tensor(maps: Union[torch.Tensor, Sequence[torch.Tensor]]) -> torch.Tensor:
    """
    d_t = f_{t+1} - f_t, empilés sur un axe temporel final.

    Args:
        maps: T cartes C×H×W (tenseur T×C×H×W ou séquence)

    Returns:
        Tenseur C×H×W×(T-1)

    Raises:
        ShapeMismatchError: Moins de deux cartes
    """
    if not isinstance(maps, torch.Tensor):
        maps = torch.stack(list(maps)) if len(maps) else torch.empty(0)
    if maps.dim() != 4 or maps.size(0) < 2:
        raise ShapeMismatchError(f"Au moins deux cartes C×H×W requises, reçu {tuple(maps.shape)}")
    return (maps[1:] - maps[:-1]).permute(1, 2, 3, 0)


class FingerprintModel(nn.Module):
    """Clips B×T×1×H×W → embeddings B×embed_dim."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.backbone = F5CBackbone(cfg)
        self.head = TemporalIdentityHead(cfg)

    def _maps(self, frames: torch.Tensor) -> torch.Tensor:
        """B×T×1×H×W → B×T×C×h×w."""
        batch, steps = frames.shape[:2]
        maps = self.backbone(frames.reshape(batch * steps, *frames.shape[2:]))
        return maps.reshape(batch, steps, *maps.shape[1:])

    def head_input(self, clips: torch.Tensor) -> torch.Tensor:
        """Représentation d'entrée de la tête, B×C×h×w×T'."""
        size = self.cfg.frame_size
        if clips.dim() != 5 or clips.shape[2:] != (1, size, size):
            raise ShapeMismatchError(f"Clips B×T×1×{size}×{size} attendus, reçu {tuple(clips.shape)}")
        steps = clips.size(1)
        if steps != self.cfg.clip_length:
            raise ShapeMismatchError(
                f"Condition {self.cfg.condition} : T={self.cfg.clip_length} attendu, reçu {steps}"
            )

        condition = self.cfg.condition
        if condition == "feat_diff":
            maps = self._maps(clips)
            stacked = maps[:, 1:] - maps[:, :-1]
        elif condition == "pixel_diff":
            stacked = self._maps(clips[:, 1:] - clips[:, :-1])
        elif condition == "raw_feat":
            stacked = self._maps(clips)
        else:
            stacked = self._maps(clips[:, steps // 2:steps // 2 + 1])
        return stacked.permute(0, 2, 3, 4, 1)

    def forward(self, clips: torch.Tensor) -> torch.Tensor:
        return self.head(self.head_input(clips))

    def embed(self, clip: torch.Tensor) -> torch.Tensor:
        """Un clip T×1×H×W → un embedding."""
        return self.forward(clip.unsqueeze(0))[0]


def condition_forward(model: FingerprintModel, clip: torch.Tensor) -> torch.Tensor:
    """Clip T×1×H×W → entrée de la tête C×h×w×T'."""
    if clip.dim() != 4:
        raise ShapeMismatchError(f"clip T×1×H×W attendu, reçu {tuple(clip.shape)}")
    return model.head_input(clip.unsqueeze(0))[0]


def _count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def count_parameters(model_or_cfg: Union[FingerprintModel, ModelConfig]) -> Dict[str, int]:
    """Nombre exact de paramètres appris (backbone, tête, total)."""
    model = model_or_cfg if isinstance(model_or_cfg, FingerprintModel) else FingerprintModel(model_or_cfg)
    backbone = _count(model.backbone)
    head = _count(model.head)
    return {"backbone": backbone, "head": head, "total": backbone + head}


@torch.no_grad()
def feature_variation(model: FingerprintModel, clip: torch.Tensor) -> float:
    """
    Variation temporelle relative des cartes : moyenne ‖d_t‖ / moyenne ‖f_t‖.

    Un backbone insensible au mouvement donne une valeur proche de 0,
    auquel cas la différenciation n'a rien à exploiter.
    """
    maps = model.backbone(clip)
    if maps.size(0) < 2:
        return 0.0
    motion = (maps[1:] - maps[:-1]).flatten(1).norm(dim=1).mean()
    level = maps.flatten(1).norm(dim=1).mean()
    if level.item() == 0.0:
        return 0.0
    return float(motion / level)
