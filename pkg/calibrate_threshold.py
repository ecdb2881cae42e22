"""
Script de calibration du seuil de vérification
Aide à choisir eval.verify_threshold à partir des paires scorées d'une évaluation
"""

import sys
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from sklearn.metrics import roc_curve

from features.evaluator import ScoredPair
from features.report import load_scored_pairs


def scan_thresholds(pairs: Sequence[ScoredPair]) -> List[Tuple[float, float, float, float]]:
    """
    Exactitude pour chaque seuil candidat (accept si score ≥ seuil).

    Les candidats sont les seuils de la courbe ROC (scores observés), plus
    un seuil juste au-dessus du maximum (tout rejeter). Ordre croissant.

    Returns:
        Liste (seuil, exactitude, taux d'acceptation des positifs, taux d'acceptation des négatifs)

    Raises:
        ValueError: Paires toutes positives ou toutes négatives
    """
    scores = np.array([p.score for p in pairs], dtype=np.float64)
    labels = np.array([p.is_positive for p in pairs], dtype=np.int32)
    if scores.size == 0:
        return []
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("Il faut des paires positives et négatives pour calibrer")

    fpr, tpr, thresholds = roc_curve(labels, scores, drop_intermediate=False)
    # le premier seuil (tout rejeter) vaut inf ou max+1 selon la version
    thresholds = thresholds.astype(np.float64)
    thresholds[0] = np.nextafter(scores.max(), np.inf)
    accuracy = (tpr * n_pos + (1.0 - fpr) * n_neg) / labels.size
    rows = [(float(t), float(a), float(tp), float(fp)) for t, a, tp, fp in zip(thresholds, accuracy, tpr, fpr)]
    return rows[::-1]


def best_threshold(pairs: Sequence[ScoredPair]) -> Tuple[float, float]:
    """Seuil d'exactitude maximale (le plus petit en cas d'égalité)."""
    rows = scan_thresholds(pairs)
    if not rows:
        raise ValueError("Aucune paire scorée")
    threshold, accuracy, _, _ = max(rows, key=lambda row: (row[1], -row[0]))
    return threshold, accuracy


def main() -> None:
    print("🎯 Calibration du seuil de vérification\n")
    print("=" * 60)

    file_path = sys.argv[1] if len(sys.argv) > 1 else input("\nChemin de scored_pairs.jsonl: ").strip().strip('"')
    if not file_path or not Path(file_path).exists():
        print("❌ Fichier non trouvé")
        sys.exit(1)

    print(f"\n📄 Chargement de {Path(file_path).name}...")
    pairs = load_scored_pairs(file_path)
    positives = sum(p.is_positive for p in pairs)
    print(f"   ✓ {len(pairs)} paires ({positives} positives, {len(pairs) - positives} négatives)")
    if not pairs:
        print("❌ Aucune paire")
        sys.exit(1)

    try:
        threshold, accuracy = best_threshold(pairs)
    except ValueError as e:
        print(f"❌ {e}")
        sys.exit(1)

    print("\n" + "=" * 60)
    print("📊 RÉSULTAT DE LA CALIBRATION")
    print("=" * 60)
    print(f"\n  Seuil optimal: {threshold:.4f}")
    print(f"  Exactitude: {accuracy:.2%}")

    print(f"\n💡 Ajoutez ceci dans fingerdiff_config.yaml :")
    print(f"   eval:\n     verify_threshold: {threshold:.4f}")

    rows = {round(row[0], 4): row for row in scan_thresholds(pairs)}
    print(f"\n📈 Comparaison avec différents seuils:")
    print(f"   {'Seuil':<10} {'Exactitude':<12} {'TPR':<8} {'FPR'}")
    print("   " + "-" * 50)
    for test_value in (0.3, 0.5, 0.7, 0.9):
        accepted = [p.score >= test_value for p in pairs]
        accuracy_at = np.mean([a == p.is_positive for a, p in zip(accepted, pairs)])
        print(f"   {test_value:<10} {accuracy_at:<12.2%}")
    best_row = rows.get(round(threshold, 4))
    if best_row:
        print(f"   {threshold:<10.4f} {best_row[1]:<12.2%} {best_row[2]:<8.2%} {best_row[3]:.2%} ← OPTIMAL")

    print("\n" + "=" * 60)
    print("✅ Calibration terminée !")
    print("=" * 60)


if __name__ == "__main__":
    main()
