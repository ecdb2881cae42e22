"""
Experiments: cross-generator transfer matrix and representation / clip-length ablations.
"""

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from change_logging.logger import RunLogger
from core.base.records import Manifest
from core.model.checkpoint import load_checkpoint
from features.evaluator import EvalReport, embed_manifest, evaluate, evaluate_embeddings
from features.trainer import resolve_device, train
from utils.config import ABLATION_CLIP_LENGTHS, CONDITIONS, RunConfig
from utils.errors import ConfigError, DataError

ABLATION_AXES = ("condition", "clip_length")


@dataclass
class CrossGenMatrix:
    """auc[i][j] : entraînement sur labels[i], test sur labels[j]."""
    labels: List[str]
    auc: List[List[float]]

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "CrossGenMatrix":
        return cls(labels=list(data["labels"]), auc=[list(row) for row in data["auc"]])

    def to_markdown(self) -> str:
        lines = ["| train \\ test | " + " | ".join(self.labels) + " |",
                 "|---" * (len(self.labels) + 1) + "|"]
        for label, row in zip(self.labels, self.auc):
            lines.append(f"| {label} | " + " | ".join(f"{v:.4f}" for v in row) + " |")
        return "\n".join(lines) + "\n"


@dataclass
class AblationRow:
    setting: str
    seeds: List[int]
    auc_per_seed: List[float]
    median_auc: float
    per_generator_auc: Dict[str, float] = field(default_factory=dict)


@dataclass
class AblationTable:
    """Une ligne par réglage de l'axe, AUC médiane sur les graines."""
    axis: str
    rows: List[AblationRow]

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "AblationTable":
        return cls(axis=data["axis"], rows=[AblationRow(**row) for row in data["rows"]])

    def to_markdown(self) -> str:
        generators = sorted({g for row in self.rows for g in row.per_generator_auc})
        header = f"| {self.axis} | AUC | " + " | ".join(generators) + (" |" if generators else "|")
        lines = [header, "|---" * (2 + len(generators)) + "|"]
        for row in self.rows:
            cells = [f"{row.per_generator_auc[g]:.4f}" if g in row.per_generator_auc else "-" for g in generators]
            lines.append(f"| {row.setting} | {row.median_auc:.4f} | " + " | ".join(cells) + (" |" if cells else "|"))
        return "\n".join(lines) + "\n"


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, train=replace(cfg.train, seed=seed), sampler=replace(cfg.sampler, rng_seed=seed))


def train_and_evaluate(manifest: Manifest, cfg: RunConfig, run_dir: Union[str, Path],
                       eval_manifest: Optional[Manifest] = None) -> EvalReport:
    """Entraîne puis évalue le meilleur checkpoint sur cfg.eval.split."""
    run_path = Path(run_dir)
    logger = RunLogger(run_path)
    logger.init_log_file("train", {"config_hash": cfg.config_hash()})
    logger.log_config(cfg.to_dict(), RunConfig().to_dict())
    result = train(manifest, cfg.model, cfg.train, run_path, sampler_cfg=cfg.sampler,
                   supcon_cfg=cfg.supcon, logger=logger)
    device = resolve_device(cfg.train.device)
    model, _ = load_checkpoint(result.best_checkpoint, expected_config=cfg.model, device=device)
    report, _ = evaluate(eval_manifest or manifest, model, cfg, device=device)
    return report


def cross_generator_matrix(manifest: Manifest, cfg: RunConfig, out_dir: Union[str, Path]) -> CrossGenMatrix:
    """
    Un modèle par générateur d'entraînement, évalué sur chaque générateur de test.

    Args:
        manifest: Manifeste multi-générateurs
        cfg: Configuration résolue
        out_dir: Dossier des runs

    Returns:
        Matrice S×S (diagonale = intra-domaine)
    """
    labels = manifest.generators()
    if len(labels) < 2:
        raise DataError(f"Au moins 2 générateurs requis pour la matrice croisée, trouvés : {labels}")

    device = resolve_device(cfg.train.device)
    test_manifest = manifest.filter(split=cfg.eval.split)
    matrix = []
    for train_tag in labels:
        print("\n" + "=" * 60)
        print(f"🔀 Entraînement sur {train_tag}")
        print("=" * 60)
        run_dir = Path(out_dir) / f"train_{train_tag}"
        result = train(manifest.filter(generator=train_tag), cfg.model, cfg.train, run_dir,
                       sampler_cfg=cfg.sampler, supcon_cfg=cfg.supcon)
        model, _ = load_checkpoint(result.best_checkpoint, expected_config=cfg.model, device=device)
        embeddings = embed_manifest(test_manifest, model, cfg.sampler, device, num_workers=cfg.eval.num_workers)

        row = []
        for test_tag in labels:
            report, _ = evaluate_embeddings(
                test_manifest.filter(generator=test_tag), embeddings, split=cfg.eval.split,
                condition=cfg.model.condition, clip_length=cfg.model.clip_length,
                config_hash=cfg.config_hash(), per_generator=False,
            )
            row.append(report.mean_auc)
            print(f"   {train_tag} → {test_tag} : AUC {report.mean_auc:.4f}")
        matrix.append(row)
    return CrossGenMatrix(labels=labels, auc=matrix)


def ablation_settings(axis: str) -> Sequence:
    if axis == "condition":
        return CONDITIONS
    if axis == "clip_length":
        return ABLATION_CLIP_LENGTHS
    raise ConfigError(f"Axe d'ablation inconnu : {axis} (attendu : {ABLATION_AXES})")


def run_ablation(manifest: Manifest, base_cfg: RunConfig, axis: str, out_dir: Union[str, Path],
                 seeds: Optional[Sequence[int]] = None) -> AblationTable:
    """
    Entraîne / évalue chaque réglage de l'axe, tout le reste fixé.

    Args:
        manifest: Manifeste
        base_cfg: Configuration de base
        axis: "condition" ou "clip_length"
        out_dir: Dossier des runs
        seeds: Graines (défaut : la graine d'entraînement) ; la médiane est rapportée

    Returns:
        AblationTable (4 lignes)
    """
    settings = ablation_settings(axis)
    seeds = list(seeds) if seeds else [base_cfg.train.seed]
    rows = []
    for setting in settings:
        if axis == "condition":
            cfg = replace(base_cfg, model=replace(base_cfg.model, condition=setting))
        else:
            cfg = base_cfg.with_clip_length(int(setting))
        cfg.validate()

        reports = []
        for seed in seeds:
            print("\n" + "=" * 60)
            print(f"🧪 Ablation {axis}={setting} (seed {seed})")
            print("=" * 60)
            seeded = with_seed(cfg, seed)
            reports.append(train_and_evaluate(manifest, seeded, Path(out_dir) / f"{axis}_{setting}" / f"seed_{seed}"))

        generators = sorted({g for r in reports for g in r.per_generator_auc})
        rows.append(AblationRow(
            setting=str(setting),
            seeds=seeds,
            auc_per_seed=[r.mean_auc for r in reports],
            median_auc=float(np.median([r.mean_auc for r in reports])),
            per_generator_auc={
                g: float(np.median([r.per_generator_auc[g] for r in reports if g in r.per_generator_auc]))
                for g in generators
            },
        ))
    return AblationTable(axis=axis, rows=rows)
