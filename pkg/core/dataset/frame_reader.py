"""
Frame reading for avatar videos (image-sequence directories or video containers).
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import cv2
import numpy as np
import torch

from core.base.records import VideoRecord
from utils.errors import ClipRangeError, FrameDecodeError

FRAME_SIZE = 128

# ITU-R BT.601, ordre BGR d'OpenCV
LUMA_WEIGHTS_BGR = np.array([0.114, 0.587, 0.299], dtype=np.float64)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


def list_frame_files(directory: Path) -> List[Path]:
    """Frames d'un dossier, triées par nom."""
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def to_luma(frame: np.ndarray) -> np.ndarray:
    """
    Convertit une frame (gris, BGR ou BGRA) en luminance [0, 1].

    Args:
        frame: Image OpenCV (uint8, uint16 ou flottant déjà dans [0, 1])

    Returns:
        Tableau float64 H×W
    """
    if frame.dtype == np.uint8:
        scale = 255.0
    elif frame.dtype == np.uint16:
        scale = 65535.0
    else:
        scale = 1.0
    data = frame.astype(np.float64) / scale

    if data.ndim == 3:
        if data.shape[2] == 1:
            data = data[:, :, 0]
        else:
            data = data[:, :, :3] @ LUMA_WEIGHTS_BGR
    elif data.ndim != 2:
        raise FrameDecodeError(f"Forme de frame inattendue : {frame.shape}")
    return np.clip(data, 0.0, 1.0)


def prepare_frame(frame: np.ndarray, size: int = FRAME_SIZE) -> np.ndarray:
    """Luminance + redimensionnement bilinéaire à size×size, valeurs dans [0, 1]."""
    luma = to_luma(frame).astype(np.float32)
    if luma.shape != (size, size):
        luma = cv2.resize(luma, (size, size), interpolation=cv2.INTER_LINEAR)
    return np.clip(luma, 0.0, 1.0)


def _read_directory_frames(directory: Path, indices: Sequence[int]) -> Dict[int, np.ndarray]:
    files = list_frame_files(directory)
    frames = {}
    for index in indices:
        if index >= len(files):
            raise FrameDecodeError(f"Frame {index} absente de {directory} ({len(files)} fichiers)")
        image = cv2.imread(str(files[index]), cv2.IMREAD_UNCHANGED)
        if image is None:
            raise FrameDecodeError(f"Décodage impossible : {files[index]}")
        frames[index] = image
    return frames


def _read_container_frames(path: Path, indices: Sequence[int]) -> Dict[int, np.ndarray]:
    # Lecture séquentielle : le seek des conteneurs n'est pas fiable à la frame près
    wanted = set(indices)
    last = max(wanted)
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise FrameDecodeError(f"Ouverture impossible : {path}")
    frames = {}
    try:
        for index in range(last + 1):
            if index in wanted:
                success, image = capture.read()
                if not success:
                    raise FrameDecodeError(f"Frame {index} illisible dans {path}")
                frames[index] = image
            elif not capture.grab():
                raise FrameDecodeError(f"Frame {index} illisible dans {path}")
    finally:
        capture.release()
    return frames


def read_clip_frames(record: VideoRecord, start: int, length: int, size: int = FRAME_SIZE) -> torch.Tensor:
    """
    Lit `length` frames consécutives à partir de `start`.

    Les indices au-delà de la dernière frame répètent la dernière frame.

    Args:
        record: Vidéo à lire
        start: Indice de départ (0 ≤ start < num_frames)
        length: Nombre de frames (≥ 1)
        size: Côté de sortie (128)

    Returns:
        Tenseur float32 length×1×size×size dans [0, 1]

    Raises:
        ClipRangeError: start hors de la vidéo ou length < 1
        FrameDecodeError: Échec de décodage
    """
    if length < 1:
        raise ClipRangeError(f"length doit être ≥ 1, reçu {length}")
    if not 0 <= start < record.num_frames:
        raise ClipRangeError(f"start={start} hors de [0, {record.num_frames}) pour {record.video_path}")

    last = record.num_frames - 1
    indices = [min(start + i, last) for i in range(length)]
    unique = sorted(set(indices))

    path = Path(record.video_path)
    if path.is_dir():
        raw = _read_directory_frames(path, unique)
    elif path.is_file():
        raw = _read_container_frames(path, unique)
    else:
        raise FrameDecodeError(f"Vidéo introuvable : {path}")

    prepared = {index: prepare_frame(frame, size) for index, frame in raw.items()}
    clip = np.stack([prepared[i] for i in indices])[:, None, :, :]
    return torch.from_numpy(np.ascontiguousarray(clip))


def inspect_video(path, target_id: str = "unknown", driver_id: str = "unknown",
                generator: str = "unknown", split: str = "test", fps: Optional[float] = None) -> VideoRecord:
    """
    Construit un VideoRecord pour une vidéo hors manifeste (embed / verify).

    Args:
        path: Dossier de frames ou conteneur vidéo

    Returns:
        VideoRecord avec num_frames et fps détectés
    """
    video_path = Path(path)
    if video_path.is_dir():
        num_frames = len(list_frame_files(video_path))
        detected_fps = fps or 25.0
    elif video_path.is_file():
        capture = cv2.VideoCapture(str(video_path))
        if not capture.isOpened():
            raise FrameDecodeError(f"Ouverture impossible : {video_path}")
        num_frames = int(capture.get(cv2.CAP_PROP_FRAME_COUNT))
        detected_fps = fps or float(capture.get(cv2.CAP_PROP_FPS) or 25.0)
        capture.release()
    else:
        raise FrameDecodeError(f"Vidéo introuvable : {video_path}")

    if num_frames < 1:
        raise FrameDecodeError(f"Aucune frame lisible dans {video_path}")
    return VideoRecord(
        video_path=str(video_path),
        target_id=target_id,
        driver_id=driver_id,
        generator=generator,
        split=split,
        num_frames=num_frames,
        fps=detected_fps,
    )
