"""
Configuration management for fingerdiff.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field, fields, asdict, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, get_type_hints

import yaml
from dotenv import load_dotenv

from utils.errors import ConfigError

CONDITIONS = ("feat_diff", "pixel_diff", "raw_feat", "static")
SAMPLER_MODES = ("train_random", "eval_center")
SPLITS = ("train", "val", "test")
ABLATION_CLIP_LENGTHS = (16, 32, 64, 128)


@dataclass
class SynthConfig:
    """Paramètres du générateur synthétique."""
    n_identities: int = 10
    videos_per_pair: int = 2
    frame_count_range: Tuple[int, int] = (48, 96)
    frame_size: int = 128
    motion_seed: int = 0
    style_tags: Tuple[str, ...] = ("synth_a",)
    n_val_identities: int = 0
    n_test_identities: int = 0
    fps: float = 25.0
    num_workers: int = 1

    def validate(self) -> None:
        if self.n_identities < 2:
            raise ConfigError("synth.n_identities doit être ≥ 2")
        if self.videos_per_pair < 1:
            raise ConfigError("synth.videos_per_pair doit être ≥ 1")
        low, high = self.frame_count_range
        if low < 1 or high < low:
            raise ConfigError(f"synth.frame_count_range invalide : {self.frame_count_range}")
        if self.frame_size < 32:
            raise ConfigError("synth.frame_size doit être ≥ 32")
        if not self.style_tags:
            raise ConfigError("synth.style_tags ne peut pas être vide")
        if len(set(self.style_tags)) != len(self.style_tags):
            raise ConfigError("synth.style_tags contient des doublons")
        if self.n_val_identities < 0 or self.n_test_identities < 0:
            raise ConfigError("synth.n_val_identities / n_test_identities doivent être ≥ 0")
        if self.n_val_identities + self.n_test_identities > self.n_identities:
            raise ConfigError("synth : plus d'identités val/test que d'identités au total")
        if self.fps <= 0:
            raise ConfigError("synth.fps doit être > 0")


@dataclass
class SamplerConfig:
    """Construction des clips (longueur T, mode de crop)."""
    clip_length: int = 64
    mode: str = "eval_center"
    rng_seed: int = 0

    def validate(self) -> None:
        if self.clip_length < 1:
            raise ConfigError("sampler.clip_length doit être ≥ 1")
        if self.mode not in SAMPLER_MODES:
            raise ConfigError(f"sampler.mode inconnu : {self.mode} (attendu : {SAMPLER_MODES})")


@dataclass
class ModelConfig:
    """Architecture F5C + tête temporelle."""
    condition: str = "feat_diff"
    clip_length: int = 64
    ccc_k: int = 4
    dropout: float = 0.3
    embed_dim: int = 256
    convstack_channels: Tuple[int, int, int, int] = (16, 32, 64, 128)
    frame_size: int = 128
    meta_kernel_size: int = 32
    head_channels: Tuple[int, int] = (64, 32)
    mlp_hidden: int = 256
    pool_size: Tuple[int, int] = (4, 4)

    @property
    def feature_size(self) -> int:
        """Taille spatiale des cartes produites par la ConvStack."""
        size = self.frame_size
        for kernel, stride, padding in ((4, 2, 1), (3, 2, 1), (2, 2, 0), (1, 1, 0)):
            size = (size + 2 * padding - kernel) // stride + 1
        return size

    @property
    def temporal_extent(self) -> int:
        """Étendue temporelle de l'entrée de la tête selon la condition."""
        if self.condition == "static":
            return 1
        if self.condition == "raw_feat":
            return self.clip_length
        return self.clip_length - 1

    def validate(self) -> None:
        if self.condition not in CONDITIONS:
            raise ConfigError(f"model.condition inconnue : {self.condition} (attendu : {CONDITIONS})")
        if self.clip_length < 1:
            raise ConfigError("model.clip_length doit être ≥ 1")
        if self.condition in ("feat_diff", "pixel_diff") and self.clip_length < 2:
            raise ConfigError(f"model.clip_length doit être ≥ 2 pour {self.condition}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("model.dropout doit être dans [0, 1)")
        if len(self.convstack_channels) != 4:
            raise ConfigError("model.convstack_channels doit contenir 4 largeurs")
        if self.convstack_channels[-1] % 2 != 0:
            raise ConfigError("model.convstack_channels[-1] doit être pair (FCC coupe en deux moitiés)")
        if self.feature_size < 1:
            raise ConfigError(f"model.frame_size trop petit : {self.frame_size}")
        positions = self.feature_size ** 2
        if not 1 <= self.ccc_k < positions:
            raise ConfigError(f"model.ccc_k doit être dans [1, {positions - 1}]")
        if self.feature_size > self.meta_kernel_size:
            raise ConfigError("model.meta_kernel_size doit couvrir l'étendue spatiale des cartes")
        if len(self.head_channels) != 2 or len(self.pool_size) != 2:
            raise ConfigError("model.head_channels et model.pool_size attendent 2 valeurs")


@dataclass
class SupConConfig:
    """Perte contrastive supervisée."""
    temperature: float = 0.07
    reduction: str = "mean"

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ConfigError("supcon.temperature doit être > 0")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError("supcon.reduction doit valoir 'mean' ou 'sum'")


@dataclass
class TrainConfig:
    """Recette d'entraînement."""
    n_identities_per_batch: int = 16
    clips_per_identity: int = 8
    epochs: int = 150
    steps_per_epoch: int = 200
    base_lr: float = 1e-3
    weight_decay: float = 1e-4
    warmup_epochs: int = 5
    grad_clip_norm: float = 1.0
    mixed_precision: bool = False
    seed: int = 0
    device: str = "auto"
    num_workers: int = 0

    @property
    def batch_size(self) -> int:
        return self.n_identities_per_batch * self.clips_per_identity

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    def validate(self) -> None:
        if self.n_identities_per_batch < 1 or self.clips_per_identity < 1:
            raise ConfigError("train : N et M doivent être ≥ 1")
        if self.batch_size < 2:
            raise ConfigError("train : la taille de batch N·M doit être ≥ 2")
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ConfigError("train.epochs et train.steps_per_epoch doivent être ≥ 1")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError("train.warmup_epochs doit être < train.epochs")
        if self.base_lr <= 0 or self.weight_decay < 0 or self.grad_clip_norm <= 0:
            raise ConfigError("train : base_lr et grad_clip_norm > 0, weight_decay ≥ 0")


@dataclass
class EvalConfig:
    """Protocole d'évaluation et point de fonctionnement de `verify`."""
    split: str = "test"
    verify_threshold: float = 0.5
    per_generator: bool = True
    num_workers: int = 0

    def validate(self) -> None:
        if self.split not in SPLITS:
            raise ConfigError(f"eval.split inconnu : {self.split}")
        if not -1.0 <= self.verify_threshold <= 1.0:
            raise ConfigError("eval.verify_threshold doit être un cosinus dans [-1, 1]")


SECTIONS = {
    "synth": SynthConfig,
    "sampler": SamplerConfig,
    "model": ModelConfig,
    "supcon": SupConConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}


@dataclass
class RunConfig:
    """Configuration complète résolue (fichier + overrides)."""
    synth: SynthConfig = field(default_factory=SynthConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    supcon: SupConConfig = field(default_factory=SupConConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> "RunConfig":
        for name in SECTIONS:
            getattr(self, name).validate()
        if self.sampler.clip_length != self.model.clip_length:
            raise ConfigError(
                f"sampler.clip_length ({self.sampler.clip_length}) doit égaler "
                f"model.clip_length ({self.model.clip_length})"
            )
        return self

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: _plain(asdict(getattr(self, name))) for name in SECTIONS}

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_clip_length(self, clip_length: int) -> "RunConfig":
        """Copie avec T modifié de façon cohérente (sampler + modèle)."""
        return replace(
            self,
            sampler=replace(self.sampler, clip_length=clip_length),
            model=replace(self.model, clip_length=clip_length),
        )

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "RunConfig":
        data = data or {}
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"Sections de configuration inconnues : {sorted(unknown)}")
        sections = {}
        for name, section_cls in SECTIONS.items():
            values = data.get(name) or {}
            if not isinstance(values, dict):
                raise ConfigError(f"La section '{name}' doit être un dictionnaire")
            sections[name] = _build_section(name, section_cls, values)
        return cls(**sections)


def _plain(value: Any) -> Any:
    """Convertit tuples → listes pour un YAML/JSON lisible."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _coerce(section: str, name: str, hint: Any, value: Any) -> Any:
    """Convertit une valeur YAML vers le type déclaré du champ."""
    key = f"{section}.{name}"
    origin = getattr(hint, "__origin__", None)
    try:
        if origin in (tuple, Tuple):
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split()]
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{key} attend une liste, reçu {value!r}")
            args = getattr(hint, "__args__", ())
            item_type = args[0] if args else str
            if item_type in (int, float) and any(isinstance(v, bool) for v in value):
                raise ConfigError(f"{key} attend des nombres, reçu {value!r}")
            return tuple(item_type(v) for v in value)
        if hint is bool:
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered in ("true", "1", "yes", "oui"):
                    return True
                if lowered in ("false", "0", "no", "non"):
                    return False
                raise ConfigError(f"{key} attend un booléen, reçu {value!r}")
            return bool(value)
        if hint in (int, float) and isinstance(value, bool):
            raise ConfigError(f"{key} attend un nombre, reçu {value!r}")
        if hint is int:
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{key} attend un entier, reçu {value!r}")
            return int(value)
        if hint is float:
            return float(value)
        if hint is str:
            return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Valeur invalide pour {key} : {value!r} ({e})") from e
    return value


def _build_section(name: str, section_cls, values: Dict[str, Any]):
    hints = get_type_hints(section_cls)
    known = {f.name for f in fields(section_cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"Clés inconnues dans '{name}' : {sorted(unknown)}")
    kwargs = {key: _coerce(name, key, hints[key], value) for key, value in values.items()}
    return section_cls(**kwargs)


def apply_overrides(config: RunConfig, overrides: List[str]) -> RunConfig:
    """
    Applique des overrides `section.champ=valeur`.

    Args:
        config: Configuration de départ
        overrides: Liste de chaînes 'section.champ=valeur'

    Returns:
        Nouvelle configuration (non validée)

    Raises:
        ConfigError: Si une clé est inconnue ou mal formée
    """
    data = config.to_dict()
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"Override mal formé (attendu clé=valeur) : {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key.count(".") != 1:
            raise ConfigError(f"Clé d'override inconnue : {key!r} (attendu section.champ)")
        section, name = key.split(".")
        if section not in SECTIONS:
            raise ConfigError(f"Clé d'override inconnue : {key!r}")
        if name not in {f.name for f in fields(SECTIONS[section])}:
            raise ConfigError(f"Clé d'override inconnue : {key!r}")
        data[section][name] = yaml.safe_load(raw) if raw.strip() else raw
    return RunConfig.from_dict(data)


class Config:
    """Gestionnaire de configuration depuis .env et YAML."""

    DEFAULT_CONFIG_FILE = "fingerdiff_config.yaml"

    def __init__(self):
        """Initialise et charge les variables d'environnement."""
        load_dotenv()

        self.output_root = Path(os.getenv("FINGERDIFF_OUT", "runs"))
        self.device_preference = os.getenv("FINGERDIFF_DEVICE", "auto")

        self._file_config: Optional[Dict[str, Any]] = None

    def load_file_config(self, config_path: Optional[str] = None) -> Dict[str, Any]:
        """
        Charge la configuration YAML.

        Args:
            config_path: Chemin vers le fichier (défaut : fingerdiff_config.yaml)

        Returns:
            Dictionnaire brut (vide si le fichier par défaut n'existe pas)
        """
        if self._file_config is not None:
            return self._file_config

        config_file = Path(config_path or self.DEFAULT_CONFIG_FILE)
        if config_file.exists():
            try:
                with open(config_file, "r", encoding="utf-8") as f:
                    self._file_config = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"Fichier de configuration illisible {config_file} : {e}") from e
        elif config_path is not None:
            raise ConfigError(f"Fichier de configuration introuvable : {config_file}")
        else:
            # Valeurs par défaut des dataclasses si le fichier n'existe pas
            self._file_config = {}

        if not isinstance(self._file_config, dict):
            raise ConfigError(f"{config_file} doit contenir un dictionnaire de sections")
        return self._file_config

    def resolve(
        self,
        config_path: Optional[str] = None,
        overrides: Optional[List[str]] = None,
        seed: Optional[int] = None,
    ) -> RunConfig:
        """
        Fusionne fichier, overrides et seed puis valide.

        Args:
            config_path: Fichier YAML
            overrides: Liste 'section.champ=valeur'
            seed: Seed global (train.seed, sampler.rng_seed, synth.motion_seed)

        Returns:
            RunConfig validée
        """
        config = RunConfig.from_dict(self.load_file_config(config_path))
        config = apply_overrides(config, overrides or [])
        if seed is not None:
            config = replace(
                config,
                train=replace(config.train, seed=seed),
                sampler=replace(config.sampler, rng_seed=seed),
                synth=replace(config.synth, motion_seed=seed),
            )
        if config.train.device == "auto" and self.device_preference != "auto":
            config = replace(config, train=replace(config.train, device=self.device_preference))
        return config.validate()

    def output_dir(self, out: Optional[str] = None) -> Path:
        """Dossier de sortie : absolu tel quel, sinon relatif à FINGERDIFF_OUT."""
        if out is None:
            return self.output_root
        path = Path(out)
        return path if path.is_absolute() else self.output_root / path
