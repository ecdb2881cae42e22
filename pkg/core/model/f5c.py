"""
F5C backbone: ConvStack → FCC (global 1-D convolutions) → CCC (channel-space k-NN graph).

Every module works on batches N×C×H×W; the *_forward helpers accept single
frames / feature maps for direct inspection.
"""

import math
from typing import Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from utils.config import ModelConfig
from utils.errors import ShapeMismatchError

# (kernel, stride, padding) des quatre couches
CONVSTACK_LAYOUT: Tuple[Tuple[int, int, int], ...] = ((4, 2, 1), (3, 2, 1), (2, 2, 0), (1, 1, 0))

SIMILARITY_DECIMALS = 5
KNN_CHUNK = 64


class ConvStack(nn.Module):
    """Quatre convolutions + BN + ReLU, 1×128×128 → 128×16×16."""

    def __init__(self, channels: Sequence[int] = (16, 32, 64, 128), in_channels: int = 1):
        super().__init__()
        layers = []
        previous = in_channels
        for width, (kernel, stride, padding) in zip(channels, CONVSTACK_LAYOUT):
            layers += [
                nn.Conv2d(previous, width, kernel, stride=stride, padding=padding, bias=False),
                nn.BatchNorm2d(width),
                nn.ReLU(inplace=True),
            ]
            previous = width
        self.layers = nn.Sequential(*layers)
        self.in_channels = in_channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.size(1) != self.in_channels:
            raise ShapeMismatchError(f"ConvStack attend N×{self.in_channels}×H×W, reçu {tuple(x.shape)}")
        return self.layers(x)


def directional_conv(x: torch.Tensor, meta_kernel: torch.Tensor, axis: str) -> torch.Tensor:
    """
    Convolution 1-D globale par canal le long de H ou W.

    Le méta-noyau (C×K) est recadré au centre sur l'étendue L de l'axe ;
    le remplissage circulaire donne à chaque position la ligne (ou colonne) entière.

    Args:
        x: N×C×H×W
        meta_kernel: C×K avec K ≥ L
        axis: "h" ou "w"
    """
    channels = x.size(1)
    extent = x.size(2) if axis == "h" else x.size(3)
    size = meta_kernel.size(1)
    if extent > size:
        raise ShapeMismatchError(f"Étendue {extent} supérieure au méta-noyau ({size})")
    start = (size - extent) // 2
    kernel = meta_kernel[:, start:start + extent]
    before, after = extent // 2, extent - 1 - extent // 2
    if axis == "h":
        padded = F.pad(x, (0, 0, before, after), mode="circular")
        weight = kernel.reshape(channels, 1, extent, 1)
    else:
        padded = F.pad(x, (before, after, 0, 0), mode="circular")
        weight = kernel.reshape(channels, 1, 1, extent)
    return F.conv2d(padded, weight, groups=channels)


class FullyConnectedConv(nn.Module):
    """
    FCC : deux moitiés de canaux, branche H→W et branche W→H,
    concaténation puis fusion 1×1 (+ BN) ajoutée en résiduel :

        out = x + BN(W_1×1 · [branche_a(x₁) ‖ branche_b(x₂)])

    avec x₁, x₂ les deux moitiés de canaux de x. La fusion et la BN
    (256 paramètres pour 128 canaux) font partie du bloc.
    """

    def __init__(self, channels: int = 128, meta_kernel_size: int = 32):
        super().__init__()
        if channels % 2:
            raise ShapeMismatchError(f"FCC attend un nombre pair de canaux, reçu {channels}")
        half = channels // 2
        self.half = half
        scale = 1.0 / math.sqrt(meta_kernel_size)
        self.kernel_a_h = nn.Parameter(torch.randn(half, meta_kernel_size) * scale)
        self.kernel_a_w = nn.Parameter(torch.randn(half, meta_kernel_size) * scale)
        self.kernel_b_w = nn.Parameter(torch.randn(half, meta_kernel_size) * scale)
        self.kernel_b_h = nn.Parameter(torch.randn(half, meta_kernel_size) * scale)
        self.fuse = nn.Conv2d(channels, channels, kernel_size=1, bias=False)
        self.norm = nn.BatchNorm2d(channels)

    def branch_a(self, x: torch.Tensor) -> torch.Tensor:
        return directional_conv(directional_conv(x, self.kernel_a_h, "h"), self.kernel_a_w, "w")

    def branch_b(self, x: torch.Tensor) -> torch.Tensor:
        return directional_conv(directional_conv(x, self.kernel_b_w, "w"), self.kernel_b_h, "h")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        first, second = x[:, :self.half], x[:, self.half:]
        mixed = torch.cat([self.branch_a(first), self.branch_b(second)], dim=1)
        return x + self.norm(self.fuse(mixed))


def knn_indices(x: torch.Tensor, k: int, chunk_size: int = KNN_CHUNK) -> torch.Tensor:
    """
    k plus proches voisins en similarité cosinus des vecteurs de canaux.

    La position elle-même est exclue ; à similarité égale, le plus petit indice
    aplati l'emporte. Un vecteur nul a une similarité 0 avec tous.
    Le calcul se fait en float32, par tranches de chunk_size cartes.

    Args:
        x: N×C×H×W (ou C×H×W)
        k: Nombre de voisins
        chunk_size: Cartes traitées à la fois

    Returns:
        Indices N×P×k (ou P×k), P = H·W
    """
    single = x.dim() == 3
    if single:
        x = x.unsqueeze(0)
    flat = F.normalize(x.flatten(2).float(), dim=1)
    positions = flat.size(2)
    if not 1 <= k < positions:
        raise ShapeMismatchError(f"k={k} hors de [1, {positions - 1}]")
    eye = torch.eye(positions, dtype=torch.bool, device=x.device)
    parts = [_knn_chunk(chunk, k, eye) for chunk in flat.split(max(1, chunk_size))]
    order = torch.cat(parts) if parts else flat.new_zeros((0, positions, k), dtype=torch.long)
    return order[0] if single else order


def _knn_chunk(flat: torch.Tensor, k: int, eye: torch.Tensor) -> torch.Tensor:
    # arrondi : deux vecteurs identiques donnent exactement la même similarité
    similarity = torch.round(flat.transpose(1, 2) @ flat, decimals=SIMILARITY_DECIMALS)
    similarity = similarity.masked_fill(eye, float("-inf"))
    kth = similarity.topk(k, dim=-1).values[..., -1:]
    above = similarity > kth
    tied = similarity == kth
    room = k - above.sum(dim=-1, keepdim=True)
    chosen = above | (tied & (tied.cumsum(dim=-1) <= room))
    # exactement k candidats par ligne, en ordre d'indice croissant
    candidates = chosen.nonzero()[:, -1].reshape(flat.size(0), flat.size(2), k)
    scores = similarity.gather(-1, candidates)
    ranked = torch.sort(scores, dim=-1, descending=True, stable=True).indices
    return candidates.gather(-1, ranked)


class ChannelCorrespondenceConv(nn.Module):
    """CCC : out(p) = x(p) + W · moyenne_n (x(n) − x(p)) sur le graphe k-NN."""

    def __init__(self, channels: int = 128, k: int = 4):
        super().__init__()
        self.k = k
        self.transform = nn.Conv2d(channels, channels, kernel_size=1, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, channels, height, width = x.shape
        with torch.no_grad():
            neighbors = knn_indices(x.detach(), self.k)
        features = x.flatten(2).transpose(1, 2)
        rows = torch.arange(batch, device=x.device)[:, None, None]
        gathered = features[rows, neighbors]
        message = gathered.mean(dim=2) - features
        message = message.transpose(1, 2).reshape(batch, channels, height, width)
        return x + self.transform(message)


class F5CBackbone(nn.Module):
    """Backbone par frame, poids partagés sur le temps."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        channels = cfg.convstack_channels[-1]
        self.convstack = ConvStack(cfg.convstack_channels)
        self.fcc = FullyConnectedConv(channels, cfg.meta_kernel_size)
        self.ccc = ChannelCorrespondenceConv(channels, cfg.ccc_k)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.ccc(self.fcc(self.convstack(frames)))


def _single(tensor: torch.Tensor, dims: int, what: str) -> torch.Tensor:
    if tensor.dim() != dims:
        raise ShapeMismatchError(f"{what} : {dims} dimensions attendues, reçu {tuple(tensor.shape)}")
    return tensor.unsqueeze(0)


def convstack_forward(backbone: F5CBackbone, frame: torch.Tensor) -> torch.Tensor:
    """1×H×W → C×h×w."""
    return backbone.convstack(_single(frame, 3, "frame"))[0]


def fcc_forward(backbone: F5CBackbone, feature_map: torch.Tensor) -> torch.Tensor:
    return backbone.fcc(_single(feature_map, 3, "feature map"))[0]


def ccc_forward(backbone: F5CBackbone, feature_map: torch.Tensor) -> torch.Tensor:
    return backbone.ccc(_single(feature_map, 3, "feature map"))[0]


def backbone_forward(backbone: F5CBackbone, clip: torch.Tensor) -> torch.Tensor:
    """Clip T×1×H×W → T cartes C×h×w (frames traitées indépendamment)."""
    if clip.dim() != 4:
        raise ShapeMismatchError(f"clip T×1×H×W attendu, reçu {tuple(clip.shape)}")
    return backbone(clip)
