"""
Report emission: report.json, scored pairs, tables and SVG figures.
"""

import json
from dataclasses import asdict, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from features.evaluator import EvalReport, ScoredPair  # noqa: E402
from features.experiments import AblationTable, CrossGenMatrix  # noqa: E402
from utils.errors import ArtifactIOError  # noqa: E402

REPORT_NAME = "report.json"
PAIRS_NAME = "scored_pairs.jsonl"
HEATMAP_NAME = "crossgen_heatmap.svg"
BARS_NAME = "condition_bars.svg"

# SVG reproductibles (ids et date fixes)
matplotlib.rcParams["svg.hashsalt"] = "fingerdiff"


def _write_json(path: Path, data) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
    except OSError as e:
        raise ArtifactIOError(f"Écriture impossible {path} : {e}") from e
    return path


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"Écriture impossible {path} : {e}") from e
    return path


def _save_figure(fig, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    except OSError as e:
        raise ArtifactIOError(f"Écriture de la figure impossible {path} : {e}") from e
    finally:
        plt.close(fig)
    return path


def plot_heatmap(labels_rows: Sequence[str], labels_cols: Sequence[str], values: np.ndarray, path: Path) -> Path:
    """Heatmap AUC (lignes = entraînement, colonnes = test)."""
    fig, ax = plt.subplots(figsize=(1.2 * len(labels_cols) + 2.5, 1.0 * len(labels_rows) + 1.5))
    image = ax.imshow(values, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(labels_cols)))
    ax.set_xticklabels(labels_cols)
    ax.set_yticks(range(len(labels_rows)))
    ax.set_yticklabels(labels_rows)
    ax.set_xlabel("test")
    ax.set_ylabel("train")
    for i in range(values.shape[0]):
        for j in range(values.shape[1]):
            ax.text(j, i, f"{values[i, j]:.3f}", ha="center", va="center", color="white", fontsize=9)
    fig.colorbar(image, ax=ax, label="AUC")
    return _save_figure(fig, path)


def plot_condition_bars(settings: Sequence[str], values: Sequence[float], path: Path, xlabel: str) -> Path:
    """Barres d'AUC par réglage."""
    fig, ax = plt.subplots(figsize=(1.4 * len(settings) + 2.0, 3.5))
    ax.bar(range(len(settings)), values, color="#4c72b0")
    ax.set_xticks(range(len(settings)))
    ax.set_xticklabels(settings)
    ax.set_ylim(0.0, 1.0)
    ax.axhline(0.5, color="grey", linestyle="--", linewidth=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("AUC")
    for i, value in enumerate(values):
        ax.text(i, value + 0.02, f"{value:.3f}", ha="center", fontsize=9)
    return _save_figure(fig, path)


def write_scored_pairs(pairs: Sequence[ScoredPair], path: Union[str, Path]) -> Path:
    """Une paire par ligne (entrée de calibrate_threshold.py)."""
    text = "".join(json.dumps(p.to_dict(), ensure_ascii=False) + "\n" for p in pairs)
    return _write_text(Path(path), text)


def load_scored_pairs(path: Union[str, Path]) -> List[ScoredPair]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return [ScoredPair(**json.loads(line)) for line in f if line.strip()]
    except (OSError, json.JSONDecodeError, TypeError) as e:
        raise ArtifactIOError(f"Lecture des paires impossible {path} : {e}") from e


def save_table(table: Union[CrossGenMatrix, AblationTable], out_dir: Union[str, Path], name: str) -> List[Path]:
    """Tableau en JSON + Markdown."""
    out_path = Path(out_dir)
    return [
        _write_json(out_path / f"{name}.json", table.to_dict()),
        _write_text(out_path / f"{name}.md", table.to_markdown()),
    ]


def emit_report(
    report: EvalReport,
    out_dir: Union[str, Path],
    pairs: Optional[Sequence[ScoredPair]] = None,
    crossgen: Optional[CrossGenMatrix] = None,
    ablation: Optional[AblationTable] = None,
) -> Dict[str, Path]:
    """
    Écrit le rapport et ses figures.

    La heatmap utilise la matrice croisée si elle est fournie, sinon
    per_generator_auc sur une ligne « joint » ; sans l'un ni l'autre elle
    est omise et une note est ajoutée au rapport.

    Args:
        report: Rapport d'évaluation
        out_dir: Dossier de sortie
        pairs: Paires scorées (scored_pairs.jsonl)
        crossgen: Matrice croisée
        ablation: Table d'ablation

    Returns:
        Nom logique → chemin écrit
    """
    out_path = Path(out_dir)
    written: Dict[str, Path] = {}

    if crossgen is not None:
        values = np.array(crossgen.auc, dtype=np.float64)
        written["heatmap"] = plot_heatmap(crossgen.labels, crossgen.labels, values, out_path / HEATMAP_NAME)
        save_table(crossgen, out_path, "crossgen")
    elif report.per_generator_auc:
        labels = sorted(report.per_generator_auc)
        values = np.array([[report.per_generator_auc[g] for g in labels]], dtype=np.float64)
        written["heatmap"] = plot_heatmap(["joint"], labels, values, out_path / HEATMAP_NAME)
    else:
        note = "heatmap omise : per_generator_auc vide"
        if note not in report.notes:
            report.notes.append(note)

    if ablation is not None:
        settings = [row.setting for row in ablation.rows]
        values = [row.median_auc for row in ablation.rows]
        written["bars"] = plot_condition_bars(settings, values, out_path / BARS_NAME, ablation.axis)
        save_table(ablation, out_path, f"ablation_{ablation.axis}")
    else:
        written["bars"] = plot_condition_bars([report.condition], [report.mean_auc], out_path / BARS_NAME,
                                              "condition")

    if pairs is not None:
        written["pairs"] = write_scored_pairs(pairs, out_path / PAIRS_NAME)

    written["report"] = _write_json(out_path / REPORT_NAME, asdict(report))
    print(f"📄 Rapport écrit : {written['report']}")
    return written


def load_report(path: Union[str, Path]) -> EvalReport:
    """Relit report.json (aller-retour exact)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactIOError(f"Lecture du rapport impossible {path} : {e}") from e
    known = {f.name for f in fields(EvalReport)}
    return EvalReport(**{k: v for k, v in data.items() if k in known})


def load_table(path: Union[str, Path]) -> Union[CrossGenMatrix, AblationTable]:
    """Relit un tableau JSON (matrice croisée ou ablation)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactIOError(f"Lecture du tableau impossible {path} : {e}") from e
    if "labels" in data:
        return CrossGenMatrix.from_dict(data)
    return AblationTable.from_dict(data)
