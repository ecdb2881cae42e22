"""
Run logging: human-readable journal and line-delimited metrics.
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from change_logging.diff_analyzer import ConfigDiffAnalyzer
from utils.errors import ArtifactIOError

METRIC_FIELDS = ("step", "epoch", "lr", "loss", "grad_norm", "clipped_grad_norm", "wall_ms")


class RunLogger:
    """Journal d'un run : LOGS/<run>_<YYYYMMDD>.txt + metrics.jsonl."""

    def __init__(self, run_dir: Path):
        """
        Args:
            run_dir: Dossier du run (créé si besoin)
        """
        self.run_dir = Path(run_dir)
        self.log_file: Optional[Path] = None
        self.metrics_file = self.run_dir / "metrics.jsonl"
        self.diff_analyzer = ConfigDiffAnalyzer()

    def _append(self, text: str) -> None:
        if not self.log_file:
            return
        try:
            with open(self.log_file, "a", encoding="utf-8") as f:
                f.write(text)
        except OSError as e:
            raise ArtifactIOError(f"Écriture du journal impossible {self.log_file} : {e}") from e

    def init_log_file(self, run_name: str, run_info: Dict[str, Any]) -> Path:
        """
        Initialise le fichier de log du run.

        Args:
            run_name: Nom du run (sous-commande)
            run_info: Informations d'en-tête (config_hash, device, ...)

        Returns:
            Chemin du journal
        """
        log_dir = self.run_dir / "LOGS"
        try:
            log_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactIOError(f"Création impossible de {log_dir} : {e}") from e

        date_str = datetime.now().strftime("%Y%m%d")
        self.log_file = log_dir / f"{run_name}_{date_str}.txt"

        header = "=" * 80 + "\n"
        header += f"LOG DE RUN - {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n"
        header += f"Commande: {run_name}\n"
        for key, value in run_info.items():
            header += f"{key}: {value}\n"
        header += "=" * 80 + "\n\n"
        self._append(header)
        return self.log_file

    def log_config(self, resolved: Dict[str, Any], defaults: Dict[str, Any]) -> None:
        """
        Enregistre la configuration résolue complète et ses écarts aux valeurs par défaut.

        Args:
            resolved: RunConfig.to_dict() de la configuration utilisée
            defaults: RunConfig().to_dict()
        """
        text = "-" * 80 + "\nCONFIGURATION RÉSOLUE\n" + "-" * 80 + "\n"
        text += yaml.safe_dump(resolved, sort_keys=True, allow_unicode=True) + "\n"

        differences = self.diff_analyzer.detect_differences(defaults, resolved)
        text += "-" * 80 + "\n"
        text += f"MODIFICATIONS PAR RAPPORT AUX DÉFAUTS: {len(differences)}\n"
        text += "-" * 80 + "\n"
        for i, diff in enumerate(differences, 1):
            text += f"  [{i}] {diff['type']} {diff['cle']}\n"
            if "original" in diff:
                text += f"      AVANT: {diff['original']!r}\n"
            if "modifie" in diff:
                text += f"      APRES: {diff['modifie']!r}\n"
        if differences:
            text += "\nDIFF UNIFIÉ:\n"
            text += self.diff_analyzer.unified_diff(defaults, resolved) + "\n"
        text += "\n"
        self._append(text)

    def log_event(self, title: str, details: Optional[Dict[str, Any]] = None) -> None:
        """Ajoute une section horodatée au journal."""
        text = "-" * 80 + "\n"
        text += f"{title}\n"
        text += f"Date/Heure: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n"
        text += "-" * 80 + "\n"
        for key, value in (details or {}).items():
            text += f"  {key}: {value}\n"
        text += "\n"
        self._append(text)

    def log_metrics(self, row: Dict[str, Any]) -> None:
        """Ajoute une ligne à metrics.jsonl (champs METRIC_FIELDS)."""
        record = {key: row.get(key) for key in METRIC_FIELDS}
        try:
            self.metrics_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self.metrics_file, "a", encoding="utf-8") as f:
                f.write(json.dumps(record) + "\n")
        except OSError as e:
            raise ArtifactIOError(f"Écriture des métriques impossible {self.metrics_file} : {e}") from e
