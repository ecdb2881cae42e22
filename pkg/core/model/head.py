"""
Temporal identity head: Conv3D ×2 → adaptive pooling → MLP → unit embedding.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from utils.config import ModelConfig
from utils.errors import ShapeMismatchError


class TemporalIdentityHead(nn.Module):
    """
    Entrée B×C×H×W×T (T ≥ 1), sortie B×embed_dim de norme 1.

    Les convolutions 3-D ont un stride (1, 2, 1) sur (T, H, W) : seule la
    hauteur est divisée par deux à chaque couche.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        in_channels = cfg.convstack_channels[-1]
        first, second = cfg.head_channels
        pool_h, pool_w = cfg.pool_size
        self.in_channels = in_channels

        self.convs = nn.Sequential(
            nn.Conv3d(in_channels, first, kernel_size=3, stride=(1, 2, 1), padding=1, bias=False),
            nn.BatchNorm3d(first),
            nn.ReLU(inplace=True),
            nn.Conv3d(first, second, kernel_size=3, stride=(1, 2, 1), padding=1, bias=False),
            nn.BatchNorm3d(second),
            nn.ReLU(inplace=True),
        )
        self.pool = nn.AdaptiveAvgPool3d((1, pool_h, pool_w))
        self.mlp = nn.Sequential(
            nn.Linear(second * pool_h * pool_w, cfg.mlp_hidden),
            nn.ReLU(inplace=True),
            nn.Dropout(cfg.dropout),
            nn.Linear(cfg.mlp_hidden, cfg.embed_dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 5 or x.size(1) != self.in_channels:
            raise ShapeMismatchError(f"Tête : B×{self.in_channels}×H×W×T attendu, reçu {tuple(x.shape)}")
        if x.size(4) < 1:
            raise ShapeMismatchError("Tête : étendue temporelle < 1")
        volume = x.permute(0, 1, 4, 2, 3)
        pooled = self.pool(self.convs(volume)).flatten(1)
        return F.normalize(self.mlp(pooled), dim=1)


def head_forward(head: TemporalIdentityHead, x: torch.Tensor) -> torch.Tensor:
    """C×H×W×T → embedding unitaire."""
    if x.dim() != 4:
        raise ShapeMismatchError(f"Tête : C×H×W×T attendu, reçu {tuple(x.shape)}")
    return head(x.unsqueeze(0))[0]
