"""
Supervised contrastive loss over driver identities.
"""

from typing import Hashable, Sequence, Union

import torch
import torch.nn as nn

from utils.config import SupConConfig
from utils.errors import NoPositivePairsError, ShapeMismatchError
from utils.gradcheck import central_difference_error

Labels = Union[torch.Tensor, Sequence[Hashable]]


def encode_labels(labels: Labels, device: Union[str, torch.device, None] = None) -> torch.Tensor:
    """Labels quelconques → entiers (ordre de première apparition)."""
    if isinstance(labels, torch.Tensor):
        return labels.to(device=device, dtype=torch.long)
    codes = {}
    encoded = [codes.setdefault(label, len(codes)) for label in labels]
    return torch.tensor(encoded, dtype=torch.long, device=device)


def supcon_loss(embeddings: torch.Tensor, labels: Labels, cfg: SupConConfig = SupConConfig()) -> torch.Tensor:
    """
    Perte SupCon, forme stabilisée (max par ancre sur a ≠ i soustrait).

    Pour chaque ancre i avec des positifs P(i) (même label, i exclu) :
        l_i = -1/|P(i)| Σ_p log( exp(z_i·z_p/τ) / Σ_{a≠i} exp(z_i·z_a/τ) )
    Les ancres sans positif sont ignorées.

    Args:
        embeddings: B×D (normalisés en amont)
        labels: B labels
        cfg: Température et réduction (mean | sum)

    Returns:
        Scalaire

    Raises:
        NoPositivePairsError: Aucune ancre n'a de positif
    """
    if embeddings.dim() != 2 or embeddings.size(0) < 2:
        raise ShapeMismatchError(f"SupCon attend B×D avec B ≥ 2, reçu {tuple(embeddings.shape)}")
    targets = encode_labels(labels, device=embeddings.device)
    if targets.numel() != embeddings.size(0):
        raise ShapeMismatchError(f"{targets.numel()} labels pour {embeddings.size(0)} embeddings")

    batch = embeddings.size(0)
    logits = embeddings @ embeddings.T / cfg.temperature
    self_mask = torch.eye(batch, dtype=torch.bool, device=embeddings.device)
    positive_mask = (targets[:, None] == targets[None, :]) & ~self_mask

    counts = positive_mask.sum(dim=1)
    valid = counts > 0
    if not bool(valid.any()):
        raise NoPositivePairsError()

    maxes = logits.masked_fill(self_mask, float("-inf")).max(dim=1, keepdim=True).values.detach()
    shifted = logits - maxes
    denominator = torch.exp(shifted).masked_fill(self_mask, 0.0).sum(dim=1, keepdim=True)
    log_prob = shifted - torch.log(denominator)

    positive_sum = (log_prob * positive_mask).sum(dim=1)
    per_anchor = -positive_sum[valid] / counts[valid]
    if cfg.reduction == "sum":
        return per_anchor.sum()
    return per_anchor.mean()


class SupConLoss(nn.Module):
    """Module autour de supcon_loss."""

    def __init__(self, cfg: SupConConfig = SupConConfig()):
        super().__init__()
        cfg.validate()
        self.cfg = cfg

    def forward(self, embeddings: torch.Tensor, labels: Labels) -> torch.Tensor:
        return supcon_loss(embeddings, labels, self.cfg)


def supcon_grad_check(embeddings: torch.Tensor, labels: Labels, cfg: SupConConfig = SupConConfig(),
                      eps: float = 1e-5) -> float:
    """
    Erreur max entre gradient analytique et différences finies centrées (double précision).

    Returns:
        Erreur relative à l'échelle du gradient, absolue si le gradient est ~0
    """
    points = embeddings.detach().to(torch.float64).clone().requires_grad_(True)
    targets = encode_labels(labels)
    loss = supcon_loss(points, targets, cfg)
    (analytic,) = torch.autograd.grad(loss, points)
    return central_difference_error(lambda: supcon_loss(points, targets, cfg), points, analytic, eps=eps)
