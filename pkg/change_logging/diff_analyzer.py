"""
Diff analysis between the default and the resolved run configuration.
"""

import difflib
from typing import Any, Dict, List

import yaml


class ConfigDiffAnalyzer:
    """Analyse les différences entre deux configurations (dictionnaires par section)."""

    @staticmethod
    def _flatten(config: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
        flat = {}
        for key, value in config.items():
            name = f"{prefix}{key}"
            if isinstance(value, dict):
                flat.update(ConfigDiffAnalyzer._flatten(value, f"{name}."))
            else:
                flat[name] = value
        return flat

    @staticmethod
    def detect_differences(original: Dict[str, Any], modified: Dict[str, Any]) -> List[Dict[str, Any]]:
        """
        Détecte les clés dont la valeur a changé.

        Args:
            original: Configuration de référence (valeurs par défaut)
            modified: Configuration résolue

        Returns:
            Liste de dictionnaires {type, cle, original, modifie}, triée par clé
        """
        before = ConfigDiffAnalyzer._flatten(original)
        after = ConfigDiffAnalyzer._flatten(modified)
        differences = []
        for key in sorted(set(before) | set(after)):
            if key not in after:
                differences.append({"type": "SUPPRESSION", "cle": key, "original": before[key]})
            elif key not in before:
                differences.append({"type": "AJOUT", "cle": key, "modifie": after[key]})
            elif before[key] != after[key]:
                differences.append({
                    "type": "MODIFIE",
                    "cle": key,
                    "original": before[key],
                    "modifie": after[key],
                })
        return differences

    @staticmethod
    def unified_diff(original: Dict[str, Any], modified: Dict[str, Any]) -> str:
        """Diff texte (format unifié) des deux configurations sérialisées en YAML."""
        before = yaml.safe_dump(original, sort_keys=True, allow_unicode=True).splitlines()
        after = yaml.safe_dump(modified, sort_keys=True, allow_unicode=True).splitlines()
        return "\n".join(difflib.unified_diff(before, after, "defaut", "resolu", lineterm=""))
