"""
Vérification de gradients par différences finies centrées.
"""

from typing import Callable, Iterable, Optional, Tuple

import torch


def central_difference_error(
    fn: Callable[[], torch.Tensor],
    tensor: torch.Tensor,
    analytic: torch.Tensor,
    eps: float = 1e-5,
    indices: Optional[Iterable[Tuple[int, ...]]] = None,
    absolute_floor: float = 1e-8,
) -> float:
    """
    Compare un gradient analytique aux différences finies centrées.

    L'erreur est relative à l'échelle du gradient (max |g|) ; si cette échelle
    est inférieure à `absolute_floor`, l'erreur absolue est renvoyée.

    Args:
        fn: Fonction sans argument qui renvoie la perte scalaire
        tensor: Tenseur perturbé en place (double précision conseillée)
        analytic: Gradient analytique de même forme
        eps: Pas des différences finies
        indices: Sous-ensemble d'indices à vérifier (tous par défaut)
        absolute_floor: Seuil sous lequel on passe en erreur absolue

    Returns:
        Erreur maximale observée
    """
    if indices is None:
        indices = [tuple(idx.tolist()) for idx in torch.nonzero(torch.ones_like(tensor, dtype=torch.bool))]

    analytic_values = []
    numeric_values = []
    with torch.no_grad():
        for idx in indices:
            original = tensor[idx].item()
            tensor[idx] = original + eps
            plus = fn().item()
            tensor[idx] = original - eps
            minus = fn().item()
            tensor[idx] = original
            numeric_values.append((plus - minus) / (2 * eps))
            analytic_values.append(analytic[idx].item())

    if not analytic_values:
        return 0.0
    a = torch.tensor(analytic_values, dtype=torch.float64)
    n = torch.tensor(numeric_values, dtype=torch.float64)
    deviation = (a - n).abs().max().item()
    scale = max(a.abs().max().item(), n.abs().max().item())
    if scale < absolute_floor:
        return deviation
    return deviation / scale
