"""
Verification protocol: per-target AUC over self/self positives vs self/cross negatives.
"""

from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from sklearn.metrics import roc_auc_score

from core.base.records import Manifest, VideoRecord
from core.model.fingerprint_model import FingerprintModel, feature_variation
from core.sampling import ClipLoader, make_clip
from utils.config import RunConfig, SamplerConfig
from utils.errors import EvaluationError, TargetSkipped

TOOL_VERSION = "1.0.0"

Vector = Union[np.ndarray, torch.Tensor, Sequence[float]]


@dataclass(frozen=True)
class ScoredPair:
    """Une paire de vidéos d'une même cible et son score cosinus."""
    score: float
    is_positive: bool
    target_id: str
    first_path: str = ""
    second_path: str = ""
    first_generator: str = ""
    second_generator: str = ""

    def to_dict(self) -> Dict:
        return {
            "score": self.score,
            "is_positive": self.is_positive,
            "target_id": self.target_id,
            "first_path": self.first_path,
            "second_path": self.second_path,
            "first_generator": self.first_generator,
            "second_generator": self.second_generator,
        }


@dataclass
class EvalReport:
    """Résultat d'une évaluation ; mean_auc est la moyenne des AUC par cible."""
    per_target_auc: Dict[str, float]
    mean_auc: float
    per_generator_auc: Dict[str, float]
    condition: str
    clip_length: int
    config_hash: str
    skipped_targets: List[Dict[str, str]] = field(default_factory=list)
    tool_version: str = TOOL_VERSION
    feature_variation: Optional[float] = None
    notes: List[str] = field(default_factory=list)


def auc(scores_pos: Sequence[float], scores_neg: Sequence[float]) -> float:
    """
    Statistique de Mann–Whitney : P(pos > neg), égalités comptées 0.5
    (aire sous la courbe ROC des scores étiquetés).

    Raises:
        EvaluationError: Liste vide
    """
    pos = np.asarray(scores_pos, dtype=np.float64).ravel()
    neg = np.asarray(scores_neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise EvaluationError(f"AUC indéfinie : {pos.size} positifs, {neg.size} négatifs")
    labels = np.concatenate([np.ones(pos.size, dtype=np.int32), np.zeros(neg.size, dtype=np.int32)])
    return float(roc_auc_score(labels, np.concatenate([pos, neg])))


def cosine(a: Vector, b: Vector) -> float:
    """Similarité cosinus, bornée à [-1, 1] (0 si un vecteur est nul)."""
    u = np.asarray(a.detach().cpu() if isinstance(a, torch.Tensor) else a, dtype=np.float64)
    v = np.asarray(b.detach().cpu() if isinstance(b, torch.Tensor) else b, dtype=np.float64)
    norm = np.linalg.norm(u) * np.linalg.norm(v)
    if norm == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / norm, -1.0, 1.0))


def pair_records(manifest: Manifest, target_id: str) -> Tuple[List[Tuple[VideoRecord, VideoRecord]],
                                                              List[Tuple[VideoRecord, VideoRecord]]]:
    """
    Paires positives (self, self) et négatives (self, cross) d'une cible.

    Raises:
        TargetSkipped: Moins de deux self-reenactments ou aucun cross-reenactment
    """
    onto_target = [r for r in manifest if r.target_id == target_id]
    selfs = [r for r in onto_target if r.is_self_reenactment]
    crosses = [r for r in onto_target if not r.is_self_reenactment]
    if len(selfs) < 2:
        raise TargetSkipped(target_id, f"{len(selfs)} vidéo(s) self-reenactment, 2 requises")
    if not crosses:
        raise TargetSkipped(target_id, "aucune vidéo cross-reenactment")
    positives = list(combinations(selfs, 2))
    negatives = [(s, c) for s in selfs for c in crosses]
    return positives, negatives


def build_pairs(manifest: Manifest, target_id: str, embeddings: Mapping[str, Vector]) -> List[ScoredPair]:
    """
    Paires scorées d'une cible.

    Args:
        manifest: Manifeste (typiquement restreint au split évalué)
        target_id: Cible
        embeddings: video_path → embedding

    Returns:
        Positifs puis négatifs
    """
    positives, negatives = pair_records(manifest, target_id)
    pairs = []
    for is_positive, group in ((True, positives), (False, negatives)):
        for first, second in group:
            pairs.append(ScoredPair(
                score=cosine(embeddings[first.video_path], embeddings[second.video_path]),
                is_positive=is_positive,
                target_id=target_id,
                first_path=first.video_path,
                second_path=second.video_path,
                first_generator=first.generator,
                second_generator=second.generator,
            ))
    return pairs


def _pairs_auc(pairs: Sequence[ScoredPair]) -> Optional[float]:
    pos = [p.score for p in pairs if p.is_positive]
    neg = [p.score for p in pairs if not p.is_positive]
    if not pos or not neg:
        return None
    return auc(pos, neg)


def evaluate_embeddings(
    manifest: Manifest,
    embeddings: Mapping[str, Vector],
    split: str = "test",
    condition: str = "feat_diff",
    clip_length: int = 64,
    config_hash: str = "",
    per_generator: bool = True,
) -> Tuple[EvalReport, List[ScoredPair]]:
    """
    Protocole complet à partir d'embeddings déjà calculés.

    Returns:
        (EvalReport, toutes les paires scorées)

    Raises:
        EvaluationError: Aucune cible évaluable
    """
    subset = manifest.filter(split=split)
    per_target: Dict[str, float] = {}
    skipped: List[Dict[str, str]] = []
    all_pairs: List[ScoredPair] = []

    for target_id in subset.targets():
        try:
            pairs = build_pairs(subset, target_id, embeddings)
        except TargetSkipped as e:
            print(f"   ⚠️  {e}")
            skipped.append({"target_id": target_id, "reason": e.reason})
            continue
        per_target[target_id] = _pairs_auc(pairs)
        all_pairs.extend(pairs)

    if not per_target:
        raise EvaluationError(f"Aucune cible évaluable dans le split '{split}'")

    per_generator_auc: Dict[str, float] = {}
    if per_generator:
        for generator in subset.generators():
            values = []
            for target_id in per_target:
                kept = [
                    p for p in all_pairs
                    if p.target_id == target_id and p.first_generator == generator == p.second_generator
                ]
                value = _pairs_auc(kept)
                if value is not None:
                    values.append(value)
            if values:
                per_generator_auc[generator] = float(np.mean(values))

    report = EvalReport(
        per_target_auc=per_target,
        mean_auc=float(np.mean(list(per_target.values()))),
        per_generator_auc=per_generator_auc,
        condition=condition,
        clip_length=clip_length,
        config_hash=config_hash,
        skipped_targets=skipped,
    )
    return report, all_pairs


@torch.no_grad()
def embed_video(record: VideoRecord, model: FingerprintModel, cfg: SamplerConfig,
                device: Union[str, torch.device] = "cpu") -> torch.Tensor:
    """Embedding d'une vidéo à partir de son clip central (déterministe)."""
    model.eval()
    clip = make_clip(record, replace(cfg, mode="eval_center"), size=model.cfg.frame_size)
    return model.embed(clip.to(device)).cpu()


@torch.no_grad()
def embed_manifest(manifest: Manifest, model: FingerprintModel, cfg: SamplerConfig,
                   device: Union[str, torch.device] = "cpu", num_workers: int = 0,
                   batch_size: int = 16) -> Dict[str, np.ndarray]:
    """video_path → embedding (clip central), par lots."""
    model.eval()
    loader = ClipLoader(replace(cfg, mode="eval_center"), num_workers=num_workers, size=model.cfg.frame_size)
    records = list(manifest)
    embeddings = {}
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        vectors = model(loader.load(chunk).to(device)).cpu().numpy()
        for record, vector in zip(chunk, vectors):
            embeddings[record.video_path] = vector
    return embeddings


def evaluate(manifest: Manifest, model: FingerprintModel, cfg: RunConfig,
             device: Union[str, torch.device] = "cpu") -> Tuple[EvalReport, List[ScoredPair]]:
    """
    Évalue un modèle sur cfg.eval.split.

    Args:
        manifest: Manifeste complet
        model: Modèle entraîné
        cfg: Configuration résolue (sampler, eval, model)
        device: Device de calcul

    Returns:
        (EvalReport, paires scorées)
    """
    subset = manifest.filter(split=cfg.eval.split)
    if not len(subset):
        raise EvaluationError(f"Split '{cfg.eval.split}' vide")

    print(f"🔍 Évaluation de {len(subset)} vidéos (split {cfg.eval.split}, condition {model.cfg.condition})")
    embeddings = embed_manifest(subset, model, cfg.sampler, device, num_workers=cfg.eval.num_workers)
    report, pairs = evaluate_embeddings(
        subset,
        embeddings,
        split=cfg.eval.split,
        condition=model.cfg.condition,
        clip_length=model.cfg.clip_length,
        config_hash=cfg.config_hash(),
        per_generator=cfg.eval.per_generator,
    )

    if model.cfg.condition in ("feat_diff", "raw_feat"):
        first = subset.records[0]
        clip = make_clip(first, replace(cfg.sampler, mode="eval_center"), size=model.cfg.frame_size)
        report.feature_variation = feature_variation(model, clip.to(device))

    print(f"   ✓ AUC moyenne : {report.mean_auc:.4f} sur {len(report.per_target_auc)} cibles"
          f" ({len(report.skipped_targets)} ignorées)")
    return report, pairs
