"""
Exceptions typées de fingerdiff.
Chaque classe porte une catégorie utilisée par la CLI (config | data | numeric | io).
"""

from typing import Optional


class FingerprintError(Exception):
    """Erreur de base du projet."""

    category = "internal"


class ConfigError(FingerprintError, ValueError):
    """Configuration invalide (clé inconnue, valeur hors bornes, incohérence)."""

    category = "config"


class DataError(FingerprintError):
    """Problème dans les données (manifeste, vidéos, splits)."""

    category = "data"


class ManifestNotFoundError(DataError, FileNotFoundError):
    """Le fichier manifeste n'existe pas."""

    def __init__(self, path):
        super().__init__(f"Manifeste introuvable : {path}")
        self.path = path


class ManifestParseError(DataError, ValueError):
    """Ligne de manifeste illisible ou incomplète."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"Ligne {line_number} : {message}")
        self.line_number = line_number


class SplitLeakError(DataError, ValueError):
    """Une identité apparaît dans plusieurs splits."""

    def __init__(self, identity: str, first_split: str, second_split: str, line_number: Optional[int] = None):
        where = f" (ligne {line_number})" if line_number is not None else ""
        super().__init__(
            f"Fuite de split : l'identité '{identity}' est à la fois dans "
            f"'{first_split}' et '{second_split}'{where}"
        )
        self.identity = identity


class DuplicateVideoError(DataError, ValueError):
    """Deux lignes référencent le même video_path."""

    def __init__(self, video_path: str, line_number: int, first_line: int):
        super().__init__(
            f"video_path dupliqué '{video_path}' (lignes {first_line} et {line_number})"
        )
        self.video_path = video_path
        self.line_number = line_number


class FrameDecodeError(DataError):
    """Impossible de décoder une frame."""


class ClipRangeError(DataError, IndexError):
    """Indice de départ hors de la vidéo."""


class ShapeMismatchError(DataError, ValueError):
    """Tenseur de forme incompatible avec la configuration du modèle."""


class InsufficientIdentitiesError(DataError, ValueError):
    """Pas assez d'identités conductrices pour former un batch."""


class TargetSkipped(DataError):
    """Cible non évaluable (pas assez de vidéos pour former des paires)."""

    def __init__(self, target_id: str, reason: str):
        super().__init__(f"Cible '{target_id}' ignorée : {reason}")
        self.target_id = target_id
        self.reason = reason


class EvaluationError(DataError, ValueError):
    """Évaluation impossible (listes vides, aucune cible évaluable)."""


class NumericError(FingerprintError, ArithmeticError):
    """Problème numérique (perte non finie, aucun positif)."""

    category = "numeric"


class NoPositivePairsError(NumericError):
    """Aucune ancre n'a de positif dans le batch."""

    def __init__(self):
        super().__init__("no positive pairs : aucune ancre ne partage son label")


class NonFiniteLossError(NumericError):
    """Perte non finie pendant l'entraînement."""

    def __init__(self, step: int, lr: float, grad_norm: Optional[float], loss: float):
        super().__init__(
            f"Perte non finie ({loss}) au pas {step} (lr={lr:.3e}, grad_norm={grad_norm})"
        )
        self.step = step
        self.lr = lr
        self.grad_norm = grad_norm
        self.loss = loss


class ArtifactIOError(FingerprintError, OSError):
    """Lecture/écriture d'artefact impossible."""

    category = "io"


class CheckpointMismatchError(ArtifactIOError):
    """Checkpoint incompatible (schéma ou configuration)."""
