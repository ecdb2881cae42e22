"""
Training loop: SupCon over identity-balanced batches, AdamW, warmup + cosine schedule.
"""

import json
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, List, Optional, Union

import numpy as np
import torch

from change_logging.logger import RunLogger
from core.base.records import Manifest
from core.model.checkpoint import save_checkpoint
from core.model.fingerprint_model import FingerprintModel
from core.sampling import ClipLoader
from features.batch_sampler import sample_batch
from features.evaluator import embed_manifest, evaluate_embeddings
from features.supcon import supcon_loss
from utils.config import ModelConfig, SamplerConfig, SupConConfig, TrainConfig
from utils.errors import ConfigError, DataError, EvaluationError, NonFiniteLossError

SANITY_BAND = 0.3


@dataclass
class TrainResult:
    """Artefacts d'un entraînement."""
    last_checkpoint: Path
    best_checkpoint: Path
    metrics_path: Path
    losses: List[float] = field(default_factory=list)
    best_val_auc: Optional[float] = None


def lr_at(global_step: Union[int, float], cfg: TrainConfig) -> float:
    """
    Taux d'apprentissage au pas global_step.

    Rampe linéaire 0 → base_lr sur warmup_epochs·steps_per_epoch pas,
    puis décroissance cosinus jusqu'à 0 au dernier pas.

    Raises:
        ConfigError: Pas hors de [0, epochs·steps_per_epoch)
    """
    total = cfg.total_steps
    if not 0 <= global_step < total:
        raise ConfigError(f"Pas {global_step} hors de [0, {total})")
    warmup = cfg.warmup_epochs * cfg.steps_per_epoch
    if global_step < warmup:
        return cfg.base_lr * global_step / warmup
    span = total - 1 - warmup
    progress = (global_step - warmup) / span if span > 0 else 1.0
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def resolve_device(name: str) -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)


@contextmanager
def deterministic_mode(seed: int, mixed_precision: bool) -> Iterator[None]:
    """
    Graines torch + algorithmes déterministes quand le calcul est en pleine précision.

    L'état global de torch (algorithmes déterministes, cudnn.benchmark,
    CUBLAS_WORKSPACE_CONFIG) est restauré à la sortie.
    """
    enabled = torch.are_deterministic_algorithms_enabled()
    warn_only = torch.is_deterministic_algorithms_warn_only_enabled()
    benchmark = torch.backends.cudnn.benchmark
    workspace = os.environ.get("CUBLAS_WORKSPACE_CONFIG")

    torch.manual_seed(seed)
    if not mixed_precision:
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.benchmark = False
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(enabled, warn_only=warn_only)
        torch.backends.cudnn.benchmark = benchmark
        if workspace is None:
            os.environ.pop("CUBLAS_WORKSPACE_CONFIG", None)
        else:
            os.environ["CUBLAS_WORKSPACE_CONFIG"] = workspace


def _global_norm(parameters) -> float:
    norms = [p.grad.detach().norm() for p in parameters if p.grad is not None]
    if not norms:
        return 0.0
    return float(torch.norm(torch.stack(norms)))


def _dump_diagnostic(run_dir: Path, **values) -> Path:
    path = run_dir / "diagnostic.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(values, f, indent=2, default=str)
    return path


def _validation_auc(manifest: Manifest, model: FingerprintModel, sampler_cfg: SamplerConfig,
                    device: torch.device, num_workers: int) -> Optional[float]:
    subset = manifest.filter(split="val")
    if not len(subset):
        return None
    embeddings = embed_manifest(subset, model, sampler_cfg, device, num_workers=num_workers)
    try:
        report, _ = evaluate_embeddings(subset, embeddings, split="val", per_generator=False)
    except EvaluationError:
        return None
    return report.mean_auc


def train(
    manifest: Manifest,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir: Union[str, Path],
    sampler_cfg: Optional[SamplerConfig] = None,
    supcon_cfg: Optional[SupConConfig] = None,
    logger: Optional[RunLogger] = None,
) -> TrainResult:
    """
    Entraîne un modèle depuis une initialisation aléatoire.

    Un checkpoint (+ sidecar) est écrit à chaque époque ; le meilleur selon
    l'AUC moyenne de validation est recopié dans best.pt (sinon best = last).

    Args:
        manifest: Manifeste complet (splits train et, si présent, val)
        model_cfg: Architecture et condition
        train_cfg: Recette d'entraînement
        out_dir: Dossier du run
        sampler_cfg: Longueur de clip et graine (mode forcé à train_random)
        supcon_cfg: Température et réduction
        logger: Journal du run (metrics.jsonl dans out_dir sinon)

    Returns:
        TrainResult

    Raises:
        DataError: Split train vide
        InsufficientIdentitiesError: Moins de N conducteurs
        NonFiniteLossError: Perte ou gradient non fini (diagnostic.json écrit)
    """
    model_cfg.validate()
    train_cfg.validate()
    sampler_cfg = sampler_cfg or SamplerConfig(clip_length=model_cfg.clip_length, rng_seed=train_cfg.seed)
    supcon_cfg = supcon_cfg or SupConConfig()
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    logger = logger or RunLogger(run_dir)

    if not len(manifest.filter(split="train")):
        raise DataError("Split train vide : rien à entraîner")

    with deterministic_mode(train_cfg.seed, train_cfg.mixed_precision):
        device = resolve_device(train_cfg.device)
        rng = np.random.default_rng(train_cfg.seed)

        model = FingerprintModel(model_cfg).to(device)
        optimizer = torch.optim.AdamW(
            model.parameters(), lr=train_cfg.base_lr, betas=(0.9, 0.999), weight_decay=train_cfg.weight_decay
        )
        use_amp = train_cfg.mixed_precision and device.type == "cuda"
        scaler = torch.amp.GradScaler(device.type, enabled=use_amp)
        loader = ClipLoader(replace(sampler_cfg, mode="train_random"), num_workers=train_cfg.num_workers,
                            size=model_cfg.frame_size)
        eval_sampler = replace(sampler_cfg, mode="eval_center")

        expected_first = math.log(train_cfg.batch_size - 1)
        manifest_hash = manifest.content_hash()
        checkpoints_dir = run_dir / "checkpoints"
        losses: List[float] = []
        best_auc: Optional[float] = None
        best_path = checkpoints_dir / "best.pt"
        last_path = checkpoints_dir / "last.pt"

        print(f"🚀 Entraînement {model_cfg.condition} : {train_cfg.epochs} époques × "
              f"{train_cfg.steps_per_epoch} pas, batch {train_cfg.n_identities_per_batch}×"
              f"{train_cfg.clips_per_identity}, device {device}")

        for epoch in range(train_cfg.epochs):
            epoch_losses = []
            for step_in_epoch in range(train_cfg.steps_per_epoch):
                started = time.perf_counter()
                global_step = epoch * train_cfg.steps_per_epoch + step_in_epoch
                lr = lr_at(global_step, train_cfg)
                for group in optimizer.param_groups:
                    group["lr"] = lr

                batch = sample_batch(manifest, train_cfg, rng)
                clips = loader.load([record for record, _ in batch], step=global_step).to(device)
                labels = [driver for _, driver in batch]

                model.train()
                optimizer.zero_grad(set_to_none=True)
                with torch.autocast(device_type=device.type, dtype=torch.float16, enabled=use_amp):
                    embeddings = model(clips)
                loss = supcon_loss(embeddings.float(), labels, supcon_cfg)
                loss_value = float(loss.detach())

                if not math.isfinite(loss_value):
                    _dump_diagnostic(run_dir, step=global_step, epoch=epoch, lr=lr, grad_norm=None, loss=loss_value)
                    raise NonFiniteLossError(global_step, lr, None, loss_value)

                scaler.scale(loss).backward()
                scaler.unscale_(optimizer)
                grad_norm = float(torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip_norm))
                if not math.isfinite(grad_norm) and not use_amp:
                    _dump_diagnostic(run_dir, step=global_step, epoch=epoch, lr=lr, grad_norm=grad_norm, loss=loss_value)
                    raise NonFiniteLossError(global_step, lr, grad_norm, loss_value)
                clipped_norm = _global_norm(model.parameters())
                scaler.step(optimizer)
                scaler.update()

                if global_step == 0 and expected_first > 0:
                    if abs(loss_value - expected_first) > SANITY_BAND * expected_first:
                        print(f"   ⚠️  Perte initiale {loss_value:.4f} hors de ±30 % de log(B-1) = {expected_first:.4f}")
                        logger.log_event("AVERTISSEMENT PERTE INITIALE",
                                         {"loss": loss_value, "attendu": expected_first})

                losses.append(loss_value)
                epoch_losses.append(loss_value)
                logger.log_metrics({
                    "step": global_step,
                    "epoch": epoch,
                    "lr": lr,
                    "loss": loss_value,
                    "grad_norm": grad_norm,
                    "clipped_grad_norm": clipped_norm,
                    "wall_ms": (time.perf_counter() - started) * 1000.0,
                })

            rng_state = rng.bit_generator.state
            epoch_path = save_checkpoint(model, checkpoints_dir / f"epoch_{epoch + 1:03d}.pt", epoch + 1,
                                         rng_state, manifest_hash)
            val_auc = _validation_auc(manifest, model, eval_sampler, device, train_cfg.num_workers)
            if val_auc is not None and (best_auc is None or val_auc > best_auc):
                best_auc = val_auc
                save_checkpoint(model, best_path, epoch + 1, rng_state, manifest_hash)

            val_text = f" - AUC val {val_auc:.4f}" if val_auc is not None else ""
            print(f"📈 Époque {epoch + 1}/{train_cfg.epochs} - perte {np.mean(epoch_losses):.4f} - lr {lr:.2e}{val_text}")
            logger.log_event(f"ÉPOQUE {epoch + 1}", {
                "perte_moyenne": float(np.mean(epoch_losses)),
                "auc_val": val_auc,
                "checkpoint": epoch_path,
            })

        save_checkpoint(model, last_path, train_cfg.epochs, rng.bit_generator.state, manifest_hash)
        if best_auc is None:
            save_checkpoint(model, best_path, train_cfg.epochs, rng.bit_generator.state, manifest_hash)

        print(f"✅ Entraînement terminé : {last_path}")
        return TrainResult(
            last_checkpoint=last_path,
            best_checkpoint=best_path,
            metrics_path=logger.metrics_file,
            losses=losses,
            best_val_auc=best_auc,
        )
