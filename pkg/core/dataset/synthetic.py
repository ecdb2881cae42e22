"""
Synthetic avatar videos: a per-target appearance animated by a per-driver motion program.
"""

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import cv2
import numpy as np

from core.base.records import Manifest, VideoRecord
from core.dataset.manifest import save_manifest
from utils.config import SynthConfig
from utils.errors import ArtifactIOError

MANIFEST_NAME = "manifest.jsonl"
VIDEOS_DIR = "videos"
SUBPIXEL_SHIFT = 4
SUBPIXEL_SCALE = 1 << SUBPIXEL_SHIFT


def derive_seed(*parts) -> int:
    """Seed 64 bits stable (indépendant de PYTHONHASHSEED)."""
    key = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def identity_name(index: int) -> str:
    return f"id{index:03d}"


def appearance_params(motion_seed: int, target_id: str) -> Dict[str, float]:
    """Apparence statique d'une cible (mise en page, teintes, texture)."""
    rng = np.random.default_rng(derive_seed("target", motion_seed, target_id))
    return {
        "face_cx": float(rng.uniform(0.44, 0.56)),
        "face_cy": float(rng.uniform(0.46, 0.56)),
        "face_ax": float(rng.uniform(0.26, 0.34)),
        "face_ay": float(rng.uniform(0.34, 0.42)),
        "skin_b": float(rng.uniform(80, 210)),
        "skin_g": float(rng.uniform(90, 220)),
        "skin_r": float(rng.uniform(110, 235)),
        "bg_b": float(rng.uniform(20, 200)),
        "bg_g": float(rng.uniform(20, 200)),
        "bg_r": float(rng.uniform(20, 200)),
        "bg_gradient": float(rng.uniform(-60, 60)),
        "eye_spacing": float(rng.uniform(0.15, 0.21)),
        "eye_y": float(rng.uniform(-0.12, -0.06)),
        "eye_size": float(rng.uniform(0.035, 0.05)),
        "brow_offset": float(rng.uniform(0.05, 0.075)),
        "brow_length": float(rng.uniform(0.07, 0.1)),
        "mouth_y": float(rng.uniform(0.15, 0.21)),
        "mouth_width": float(rng.uniform(0.10, 0.16)),
        "texture_amplitude": float(rng.uniform(0.05, 0.2)),
        "texture_seed": int(rng.integers(0, 2**31 - 1)),
    }


def motion_params(motion_seed: int, driver_id: str) -> Dict[str, float]:
    """
    Programme de mouvement d'un conducteur.

    Fréquences, amplitudes, phases et asymétries gauche/droite des zones
    sourcils / yeux / bouche ; ne dépend que de (motion_seed, driver_id).
    """
    rng = np.random.default_rng(derive_seed("driver", motion_seed, driver_id))
    return {
        "brow_freq": float(rng.uniform(0.3, 1.6)),
        "brow_amp": float(rng.uniform(0.01, 0.035)),
        "brow_phase": float(rng.uniform(0, 2 * math.pi)),
        "brow_asym": float(rng.uniform(-0.7, 0.7)),
        "blink_period": float(rng.uniform(1.2, 4.5)),
        "blink_duration": float(rng.uniform(0.08, 0.25)),
        "blink_phase": float(rng.uniform(0, 1)),
        "eye_asym": float(rng.uniform(-0.5, 0.5)),
        "mouth_freq": float(rng.uniform(0.8, 3.2)),
        "mouth_amp": float(rng.uniform(0.01, 0.05)),
        "mouth_phase": float(rng.uniform(0, 2 * math.pi)),
        "mouth_asym": float(rng.uniform(-0.6, 0.6)),
        "sway_freq": float(rng.uniform(0.1, 0.7)),
        "sway_amp": float(rng.uniform(0.0, 0.03)),
        "sway_phase": float(rng.uniform(0, 2 * math.pi)),
        "nod_freq": float(rng.uniform(0.1, 0.9)),
        "nod_amp": float(rng.uniform(0.0, 0.025)),
        "nod_phase": float(rng.uniform(0, 2 * math.pi)),
    }


def style_params(style_tag: str) -> Dict[str, float]:
    """Perturbations de rendu propres à un « générateur » (flou, bruit, courbe de tons)."""
    rng = np.random.default_rng(derive_seed("style", style_tag))
    return {
        "blur_kernel": int(rng.choice([1, 3, 5])),
        "noise_sigma": float(rng.uniform(0.0, 6.0)),
        "gamma": float(rng.uniform(0.8, 1.25)),
    }


@dataclass(frozen=True)
class VideoPlan:
    """Une vidéo à rendre."""
    target_id: str
    driver_id: str
    style_tag: str
    index: int
    split: str

    @property
    def name(self) -> str:
        return f"{self.target_id}__{self.driver_id}__{self.style_tag}__{self.index:02d}"


def assign_splits(cfg: SynthConfig) -> Dict[str, str]:
    """Identités → split : les premières en train, puis val, puis test."""
    n_train = cfg.n_identities - cfg.n_val_identities - cfg.n_test_identities
    splits = {}
    for index in range(cfg.n_identities):
        if index < n_train:
            split = "train"
        elif index < n_train + cfg.n_val_identities:
            split = "val"
        else:
            split = "test"
        splits[identity_name(index)] = split
    return splits


def plan_videos(cfg: SynthConfig) -> List[VideoPlan]:
    """Toutes les paires (cible, conducteur) d'un même split, pour chaque style."""
    splits = assign_splits(cfg)
    plans = []
    for split in ("train", "val", "test"):
        members = [identity for identity, s in splits.items() if s == split]
        for style_tag in cfg.style_tags:
            for target_id in members:
                for driver_id in members:
                    for index in range(cfg.videos_per_pair):
                        plans.append(VideoPlan(target_id, driver_id, style_tag, index, split))
    return plans


def _texture(appearance: Dict[str, float], size: int) -> np.ndarray:
    rng = np.random.default_rng(appearance["texture_seed"])
    coarse = rng.uniform(-1.0, 1.0, size=(8, 8)).astype(np.float32)
    return cv2.resize(coarse, (size, size), interpolation=cv2.INTER_CUBIC)


def _pt(x: float, y: float, size: int) -> Tuple[int, int]:
    return int(round(x * size * SUBPIXEL_SCALE)), int(round(y * size * SUBPIXEL_SCALE))


def _axes(ax: float, ay: float, size: int) -> Tuple[int, int]:
    return max(1, int(round(ax * size * SUBPIXEL_SCALE))), max(1, int(round(ay * size * SUBPIXEL_SCALE)))


def motion_state(motion: Dict[str, float], time_s: float) -> Dict[str, float]:
    """Déformations instantanées (en unités normalisées) au temps time_s."""
    two_pi = 2 * math.pi
    brow = motion["brow_amp"] * math.sin(two_pi * motion["brow_freq"] * time_s + motion["brow_phase"])

    blink_pos = ((time_s / motion["blink_period"]) + motion["blink_phase"]) % 1.0
    blink_time = blink_pos * motion["blink_period"]
    closing = math.sin(math.pi * blink_time / motion["blink_duration"]) if blink_time < motion["blink_duration"] else 0.0
    openness = 1.0 - closing

    mouth = motion["mouth_amp"] * (0.5 + 0.5 * math.sin(two_pi * motion["mouth_freq"] * time_s + motion["mouth_phase"]))
    return {
        "dx": motion["sway_amp"] * math.sin(two_pi * motion["sway_freq"] * time_s + motion["sway_phase"]),
        "dy": motion["nod_amp"] * math.sin(two_pi * motion["nod_freq"] * time_s + motion["nod_phase"]),
        "brow_left": brow * (1.0 + motion["brow_asym"]),
        "brow_right": brow * (1.0 - motion["brow_asym"]),
        "eye_left": openness * (1.0 - 0.4 * max(motion["eye_asym"], 0.0)),
        "eye_right": openness * (1.0 - 0.4 * max(-motion["eye_asym"], 0.0)),
        "mouth_open": mouth,
        "mouth_tilt": motion["mouth_asym"] * mouth * 400.0,
    }


def render_frame(appearance: Dict[str, float], state: Dict[str, float], size: int,
                 texture: np.ndarray) -> np.ndarray:
    """Rend une frame BGR float32 (0-255) avant perturbations de style."""
    a = appearance
    ramp = np.linspace(-0.5, 0.5, size, dtype=np.float32)[:, None]
    canvas = np.empty((size, size, 3), dtype=np.float32)
    for c, key in enumerate(("bg_b", "bg_g", "bg_r")):
        canvas[:, :, c] = a[key] + a["bg_gradient"] * ramp

    cx, cy = a["face_cx"] + state["dx"], a["face_cy"] + state["dy"]
    skin = (a["skin_b"], a["skin_g"], a["skin_r"])

    mask = np.zeros((size, size), dtype=np.uint8)
    cv2.ellipse(mask, _pt(cx, cy, size), _axes(a["face_ax"], a["face_ay"], size), 0, 0, 360, 255, -1,
                cv2.LINE_AA, SUBPIXEL_SHIFT)
    face = (mask.astype(np.float32) / 255.0)[:, :, None]
    shaded = np.stack([np.full((size, size), s, dtype=np.float32) for s in skin], axis=2)
    shaded *= (1.0 + a["texture_amplitude"] * texture)[:, :, None]
    canvas = canvas * (1.0 - face) + shaded * face

    dark = (25.0, 25.0, 35.0)
    for side, sign in (("left", -1.0), ("right", 1.0)):
        ex = cx + sign * a["eye_spacing"] / 2
        ey = cy + a["eye_y"]
        eye_h = a["eye_size"] * 0.6 * state[f"eye_{side}"] + 0.004
        cv2.ellipse(canvas, _pt(ex, ey, size), _axes(a["eye_size"], eye_h, size), 0, 0, 360, dark, -1,
                    cv2.LINE_AA, SUBPIXEL_SHIFT)

        by = ey - a["brow_offset"] - state[f"brow_{side}"]
        half = a["brow_length"] / 2
        thickness = max(1, int(round(size * 0.018)))
        cv2.line(canvas, _pt(ex - half, by, size), _pt(ex + half, by, size), dark, thickness,
                 cv2.LINE_AA, SUBPIXEL_SHIFT)

    cv2.ellipse(canvas, _pt(cx, cy + a["mouth_y"], size),
                _axes(a["mouth_width"] / 2, state["mouth_open"] + 0.006, size),
                state["mouth_tilt"], 0, 360, (40.0, 30.0, 90.0), -1, cv2.LINE_AA, SUBPIXEL_SHIFT)
    return canvas


def apply_style(frame: np.ndarray, style: Dict[str, float], rng: np.random.Generator) -> np.ndarray:
    """Flou, courbe gamma et bruit du style, puis quantification uint8."""
    out = frame
    if style["blur_kernel"] > 1:
        k = int(style["blur_kernel"])
        out = cv2.GaussianBlur(out, (k, k), 0)
    out = 255.0 * np.power(np.clip(out, 0.0, 255.0) / 255.0, style["gamma"])
    if style["noise_sigma"] > 0:
        out = out + rng.normal(0.0, style["noise_sigma"], size=out.shape)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def render_video(plan: VideoPlan, cfg: SynthConfig, videos_dir: Path) -> VideoRecord:
    """
    Rend une vidéo en séquence d'images PNG + sidecar JSON.

    Args:
        plan: Vidéo à rendre
        cfg: Configuration du générateur
        videos_dir: Dossier parent des vidéos

    Returns:
        VideoRecord correspondant
    """
    video_seed = derive_seed("video", cfg.motion_seed, plan.target_id, plan.driver_id, plan.style_tag, plan.index)
    rng = np.random.default_rng(video_seed)
    low, high = cfg.frame_count_range
    num_frames = int(rng.integers(low, high + 1))
    time_offset = float(rng.uniform(0.0, 20.0))

    appearance = appearance_params(cfg.motion_seed, plan.target_id)
    motion = motion_params(cfg.motion_seed, plan.driver_id)
    style = style_params(plan.style_tag)
    texture = _texture(appearance, cfg.frame_size)

    video_dir = videos_dir / plan.name
    try:
        video_dir.mkdir(parents=True, exist_ok=True)
        for i in range(num_frames):
            state = motion_state(motion, time_offset + i / cfg.fps)
            frame = apply_style(render_frame(appearance, state, cfg.frame_size, texture), style, rng)
            if not cv2.imwrite(str(video_dir / f"frame_{i:05d}.png"), frame):
                raise ArtifactIOError(f"Écriture impossible : {video_dir / f'frame_{i:05d}.png'}")

        sidecar = {
            "appearance_params": appearance,
            "motion_params": motion,
            "style_tag": plan.style_tag,
            "style_params": style,
            "time_offset": time_offset,
            "video_seed": video_seed,
        }
        with open(videos_dir / f"{plan.name}.json", "w", encoding="utf-8") as f:
            json.dump(sidecar, f, indent=2, sort_keys=True)
    except OSError as e:
        raise ArtifactIOError(f"Écriture de la vidéo {plan.name} impossible : {e}") from e

    return VideoRecord(
        video_path=str(video_dir),
        target_id=plan.target_id,
        driver_id=plan.driver_id,
        generator=plan.style_tag,
        split=plan.split,
        num_frames=num_frames,
        fps=float(cfg.fps),
    )


def generate_synthetic_dataset(cfg: SynthConfig, out_dir: Union[str, Path]) -> Manifest:
    """
    Génère le jeu synthétique complet et son manifeste.

    Chaque vidéo a sa propre graine dérivée de (motion_seed, cible, conducteur,
    style, index), le rendu parallèle reste donc déterministe.

    Args:
        cfg: Configuration du générateur
        out_dir: Dossier de sortie

    Returns:
        Manifest écrit dans out_dir/manifest.jsonl
    """
    cfg.validate()
    out_path = Path(out_dir)
    videos_dir = out_path / VIDEOS_DIR
    try:
        videos_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactIOError(f"Création impossible de {videos_dir} : {e}") from e

    plans = plan_videos(cfg)
    print(f"🎬 Génération de {len(plans)} vidéos synthétiques ({cfg.n_identities} identités, "
          f"styles : {', '.join(cfg.style_tags)})")

    if cfg.num_workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.num_workers) as pool:
            records = list(pool.map(lambda p: render_video(p, cfg, videos_dir), plans))
    else:
        records = [render_video(plan, cfg, videos_dir) for plan in plans]

    manifest = Manifest.from_records(records)
    save_manifest(manifest, out_path / MANIFEST_NAME)
    print(f"   ✓ Manifeste écrit : {out_path / MANIFEST_NAME}")
    return manifest


def load_sidecar(record: VideoRecord) -> Dict:
    """Métadonnées d'une vidéo synthétique (apparence, mouvement, style)."""
    path = Path(record.video_path)
    with open(path.parent / f"{path.name}.json", "r", encoding="utf-8") as f:
        return json.load(f)


def dataset_hash(out_dir: Union[str, Path]) -> str:
    """SHA-256 du manifeste et de tous les fichiers de frames / sidecars."""
    root = Path(out_dir)
    digest = hashlib.sha256()
    digest.update((root / MANIFEST_NAME).read_bytes())
    for path in sorted((root / VIDEOS_DIR).rglob("*")):
        if path.is_file():
            digest.update(path.relative_to(root).as_posix().encode("utf-8"))
            digest.update(path.read_bytes())
    return digest.hexdigest()
