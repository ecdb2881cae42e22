"""
Fingerdiff - Point d'Entrée Unifié
Génération de données, entraînement, évaluation, ablations, embedding et vérification.
"""

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

# Configuration UTF-8 pour Windows
if sys.platform == 'win32':
    sys.stdout.reconfigure(encoding='utf-8')
    sys.stderr.reconfigure(encoding='utf-8')

import numpy as np

from change_logging.logger import RunLogger
from utils.config import Config, RunConfig
from utils.errors import ArtifactIOError, ConfigError, FingerprintError

SUBCOMMANDS = ("synth-data", "train", "evaluate", "cross-gen", "ablate", "embed", "verify", "report")

EXIT_CODES = {"config": 2, "data": 3, "numeric": 4, "io": 5, "internal": 1}


@dataclass
class CliInvocation:
    """Une invocation de la CLI (sous-commande + options)."""
    subcommand: str
    config_path: Optional[str] = None
    overrides: List[str] = field(default_factory=list)
    seed: Optional[int] = None
    out: Optional[str] = None
    manifest: Optional[str] = None
    checkpoint: Optional[str] = None
    video: Optional[str] = None
    enrolled: Optional[str] = None
    threshold: Optional[float] = None
    axis: Optional[str] = None
    seeds: Optional[List[int]] = None
    report: Optional[str] = None


@dataclass
class RunContext:
    config: Config
    cfg: RunConfig
    out_dir: Path
    logger: RunLogger


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_path", help="Fichier YAML (défaut : fingerdiff_config.yaml)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="CLE=VALEUR",
                        help="Override section.champ=valeur (répétable)")
    common.add_argument("--seed", type=int, help="Seed global (train, sampler, synth)")
    common.add_argument("--out", help="Dossier de sortie (relatif à FINGERDIFF_OUT)")

    parser = argparse.ArgumentParser(prog="fingerdiff", description="Avatar fingerprinting par différences de features")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("synth-data", parents=[common], help="Génère le jeu synthétique")

    p = sub.add_parser("train", parents=[common], help="Entraîne un modèle")
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="Évalue un checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("cross-gen", parents=[common], help="Matrice croisée entre générateurs")
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("ablate", parents=[common], help="Ablation condition / longueur de clip")
    p.add_argument("--manifest", required=True)
    p.add_argument("--axis", required=True, choices=("condition", "clip_length"))
    p.add_argument("--seeds", type=int, nargs="+")

    p = sub.add_parser("embed", parents=[common], help="Embedding d'une vidéo")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--video", required=True)

    p = sub.add_parser("verify", parents=[common], help="Vérifie une vidéo contre un embedding enrôlé")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--video", required=True)
    p.add_argument("--enrolled", required=True, help="Embedding enrôlé (.json produit par embed, ou .npy)")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("report", parents=[common], help="Régénère les figures d'un rapport")
    p.add_argument("--report", required=True)
    return parser


def parse_invocation(argv: Optional[Sequence[str]] = None) -> CliInvocation:
    args = build_parser().parse_args(argv)
    known = {name for name in CliInvocation.__dataclass_fields__}
    return CliInvocation(**{k: v for k, v in vars(args).items() if k in known})


def _setup(inv: CliInvocation) -> RunContext:
    """Résout la configuration, prépare le dossier de sortie et le journal."""
    config = Config()
    cfg = config.resolve(inv.config_path, inv.overrides, inv.seed)
    out_dir = config.output_dir(inv.out or inv.subcommand.replace("-", "_"))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactIOError(f"Création impossible de {out_dir} : {e}") from e

    logger = RunLogger(out_dir)
    logger.init_log_file(inv.subcommand.replace("-", "_"), {
        "config_hash": cfg.config_hash(),
        "overrides": inv.overrides,
        "seed": inv.seed,
    })
    logger.log_config(cfg.to_dict(), RunConfig().to_dict())

    print("=" * 60)
    print(f"FINGERDIFF - {inv.subcommand}")
    print("=" * 60)
    print(f"✓ Configuration résolue (hash {cfg.config_hash()[:12]})")
    print(f"✓ Sortie : {out_dir}")
    return RunContext(config, cfg, out_dir, logger)


def _require(value, flag: str):
    if value is None:
        raise ConfigError(f"Option requise : {flag}")
    return value


def _model_overridden(inv: CliInvocation, ctx: RunContext) -> bool:
    # le YAML par défaut ne compte pas : seul --config est explicite
    from_file = inv.config_path is not None and "model" in ctx.config.load_file_config(inv.config_path)
    return from_file or any(item.strip().startswith("model.") for item in inv.overrides)


def _load_model(inv: CliInvocation, ctx: RunContext):
    """Charge le checkpoint ; la configuration explicite du modèle doit lui correspondre."""
    from core.model.checkpoint import load_checkpoint
    from features.trainer import resolve_device

    device = resolve_device(ctx.cfg.train.device)
    expected = ctx.cfg.model if _model_overridden(inv, ctx) else None
    model, sidecar = load_checkpoint(_require(inv.checkpoint, "--checkpoint"), expected_config=expected, device=device)
    cfg = replace(ctx.cfg, model=model.cfg).with_clip_length(model.cfg.clip_length)
    ctx.logger.log_event("CHECKPOINT CHARGÉ", {"chemin": inv.checkpoint, "epoch": sidecar.get("epoch")})
    return model, cfg, device


def cmd_synth_data(inv: CliInvocation, ctx: RunContext) -> None:
    from core.dataset.synthetic import dataset_hash, generate_synthetic_dataset

    manifest = generate_synthetic_dataset(ctx.cfg.synth, ctx.out_dir)
    digest = dataset_hash(ctx.out_dir)
    (ctx.out_dir / "dataset_hash.txt").write_text(digest + "\n", encoding="utf-8")
    ctx.logger.log_event("JEU SYNTHÉTIQUE", {"videos": len(manifest), "dataset_hash": digest})
    print(f"✅ {len(manifest)} vidéos, dataset_hash {digest}")


def cmd_train(inv: CliInvocation, ctx: RunContext) -> None:
    from core.dataset.manifest import load_manifest
    from features.trainer import train

    manifest = load_manifest(_require(inv.manifest, "--manifest"))
    result = train(manifest, ctx.cfg.model, ctx.cfg.train, ctx.out_dir, sampler_cfg=ctx.cfg.sampler,
                   supcon_cfg=ctx.cfg.supcon, logger=ctx.logger)
    ctx.logger.log_event("ENTRAÎNEMENT TERMINÉ", {
        "last": result.last_checkpoint,
        "best": result.best_checkpoint,
        "best_val_auc": result.best_val_auc,
    })


def cmd_evaluate(inv: CliInvocation, ctx: RunContext) -> None:
    from core.dataset.manifest import load_manifest
    from features.evaluator import evaluate
    from features.report import emit_report

    manifest = load_manifest(_require(inv.manifest, "--manifest"))
    model, cfg, device = _load_model(inv, ctx)
    report, pairs = evaluate(manifest, model, cfg, device=device)
    emit_report(report, ctx.out_dir, pairs=pairs)
    ctx.logger.log_event("ÉVALUATION", {"mean_auc": report.mean_auc, "skipped": len(report.skipped_targets)})


def cmd_cross_gen(inv: CliInvocation, ctx: RunContext) -> None:
    from core.dataset.manifest import load_manifest
    from features.experiments import cross_generator_matrix
    from features.report import HEATMAP_NAME, plot_heatmap, save_table

    manifest = load_manifest(_require(inv.manifest, "--manifest"))
    matrix = cross_generator_matrix(manifest, ctx.cfg, ctx.out_dir)
    save_table(matrix, ctx.out_dir, "crossgen")
    plot_heatmap(matrix.labels, matrix.labels, np.array(matrix.auc), ctx.out_dir / HEATMAP_NAME)
    print("\n" + matrix.to_markdown())
    ctx.logger.log_event("MATRICE CROISÉE", {"labels": matrix.labels, "auc": matrix.auc})


def cmd_ablate(inv: CliInvocation, ctx: RunContext) -> None:
    from core.dataset.manifest import load_manifest
    from features.experiments import run_ablation
    from features.report import BARS_NAME, plot_condition_bars, save_table

    manifest = load_manifest(_require(inv.manifest, "--manifest"))
    axis = _require(inv.axis, "--axis")
    table = run_ablation(manifest, ctx.cfg, axis, ctx.out_dir, seeds=inv.seeds)
    save_table(table, ctx.out_dir, f"ablation_{axis}")
    plot_condition_bars([r.setting for r in table.rows], [r.median_auc for r in table.rows],
                        ctx.out_dir / BARS_NAME, axis)
    print("\n" + table.to_markdown())
    ctx.logger.log_event("ABLATION", {"axis": axis, "lignes": len(table.rows)})


def _embed(inv: CliInvocation, ctx: RunContext):
    from core.dataset.frame_reader import inspect_video
    from features.evaluator import embed_video

    model, cfg, device = _load_model(inv, ctx)
    record = inspect_video(_require(inv.video, "--video"))
    return embed_video(record, model, cfg.sampler, device).numpy(), model


def cmd_embed(inv: CliInvocation, ctx: RunContext) -> None:
    vector, model = _embed(inv, ctx)
    path = ctx.out_dir / f"{Path(inv.video).name}.embedding.json"
    payload = {
        "video": str(inv.video),
        "checkpoint": str(inv.checkpoint),
        "condition": model.cfg.condition,
        "embedding": [float(v) for v in vector],
    }
    try:
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"Écriture impossible {path} : {e}") from e
    print(f"✅ Embedding écrit : {path}")


def load_enrolled(path: str) -> np.ndarray:
    """Embedding enrôlé : JSON produit par `embed` (clé embedding ou liste) ou .npy."""
    enrolled = Path(path)
    try:
        if enrolled.suffix == ".npy":
            return np.asarray(np.load(enrolled), dtype=np.float64).ravel()
        data = json.loads(enrolled.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ArtifactIOError(f"Lecture de l'embedding enrôlé impossible {enrolled} : {e}") from e
    values = data["embedding"] if isinstance(data, dict) and "embedding" in data else data
    if not isinstance(values, list) or not values:
        raise ArtifactIOError(f"{enrolled} ne contient pas de vecteur d'embedding")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
        raise ArtifactIOError(f"{enrolled} : l'embedding doit être une liste de nombres")
    vector = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(vector)):
        raise ArtifactIOError(f"{enrolled} : l'embedding contient des valeurs non finies")
    return vector


def cmd_verify(inv: CliInvocation, ctx: RunContext) -> None:
    from features.evaluator import cosine

    enrolled = load_enrolled(_require(inv.enrolled, "--enrolled"))
    vector, _ = _embed(inv, ctx)
    if enrolled.shape != vector.shape:
        raise ConfigError(f"Dimension enrôlée {enrolled.shape} ≠ dimension du modèle {vector.shape}")
    threshold = inv.threshold if inv.threshold is not None else ctx.cfg.eval.verify_threshold
    score = cosine(vector, enrolled)
    result = {"score": score, "threshold": threshold, "decision": "accept" if score >= threshold else "reject"}
    ctx.logger.log_event("VÉRIFICATION", result)
    print(json.dumps(result))


def cmd_report(inv: CliInvocation, ctx: RunContext) -> None:
    from features.report import emit_report, load_report, load_table

    report_path = Path(_require(inv.report, "--report"))
    report = load_report(report_path)
    crossgen_path = report_path.parent / "crossgen.json"
    crossgen = load_table(crossgen_path) if crossgen_path.is_file() else None
    ablation = None
    for axis in ("condition", "clip_length"):
        candidate = report_path.parent / f"ablation_{axis}.json"
        if candidate.is_file():
            ablation = load_table(candidate)
            break
    emit_report(report, ctx.out_dir, crossgen=crossgen, ablation=ablation)
    print(f"✓ AUC moyenne : {report.mean_auc:.4f} ({len(report.per_target_auc)} cibles)")


HANDLERS: Dict[str, Callable[[CliInvocation, RunContext], None]] = {
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "cross-gen": cmd_cross_gen,
    "ablate": cmd_ablate,
    "embed": cmd_embed,
    "verify": cmd_verify,
    "report": cmd_report,
}


def dispatch(inv: CliInvocation) -> int:
    """
    Exécute une sous-commande.

    Returns:
        0 si succès ; 2 config, 3 data, 4 numeric, 5 io (ligne ERREUR sur stderr)
    """
    try:
        if inv.subcommand not in HANDLERS:
            raise ConfigError(f"Sous-commande inconnue : {inv.subcommand} (attendu : {SUBCOMMANDS})")
        ctx = _setup(inv)
        HANDLERS[inv.subcommand](inv, ctx)
        return 0
    except FingerprintError as e:
        print(f"ERREUR [{e.category}] {e}", file=sys.stderr)
        return EXIT_CODES.get(e.category, 1)
    except OSError as e:
        print(f"ERREUR [io] {e}", file=sys.stderr)
        return EXIT_CODES["io"]


def main(argv: Optional[Sequence[str]] = None) -> int:
    return dispatch(parse_invocation(argv))


if __name__ == "__main__":
    sys.exit(main())
