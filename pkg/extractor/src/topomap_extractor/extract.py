"""Image directories + pose tables -> feature-stream files; head export.

The pose file drives everything: one whitespace-separated row per frame,
``frame_id x y``, where frame_id is the image filename inside the image
directory. Output frame order always matches pose-file order. Undecodable or
missing images are skipped with a warning and recorded in the manifest's
skip list.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .artifact_writer import write_artifact
from .model import (
    FEATURE_DIM,
    PREPROCESS_DESCRIPTION,
    Backbone,
    classification_layer,
    load_backbone,
    pooled_features,
)

log = logging.getLogger(__name__)

STREAM_KIND = "feature-stream"
HEAD_KIND = "linear-head"
UNLABELED = -1


@dataclass
class ExtractionJob:
    image_dir: Path
    pose_file: Path
    out_path: Path
    label_file: Path | None = None
    weights: str = "pretrained"
    batch_size: int = 16
    sequence_id: str = ""

    def __post_init__(self) -> None:
        self.image_dir = Path(self.image_dir)
        self.pose_file = Path(self.pose_file)
        self.out_path = Path(self.out_path)
        if self.label_file is not None:
            self.label_file = Path(self.label_file)
        if not self.sequence_id:
            self.sequence_id = self.image_dir.name
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class ExtractionResult:
    out_path: Path
    n_frames: int
    skipped: list[str] = field(default_factory=list)


def read_pose_table(path: Path) -> list[tuple[str, float, float]]:
    """Rows of (frame_id, x, y); '#' comments and blank lines ignored."""
    rows = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'frame_id x y'")
        frame_id, x, y = parts
        rows.append((frame_id, float(x), float(y)))
    if not rows:
        raise ValueError(f"{path}: no pose rows")
    for _, x, y in rows:
        if not (np.isfinite(x) and np.isfinite(y)):
            raise ValueError(f"{path}: non-finite pose")
    return rows


def read_label_table(path: Path) -> dict[str, str]:
    """frame_id -> label name."""
    table = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(maxsplit=1)
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'frame_id label'")
        table[parts[0]] = parts[1]
    return table


def extract_stream(job: ExtractionJob, backbone: Backbone | None = None) -> ExtractionResult:
    """Run the backbone over every posed image and write the stream artifact."""
    backbone = backbone or load_backbone(job.weights)
    poses = read_pose_table(job.pose_file)
    labels_by_frame = read_label_table(job.label_file) if job.label_file else {}

    tensors: list[torch.Tensor] = []
    kept: list[tuple[str, float, float]] = []
    skipped: list[str] = []
    for frame_id, x, y in poses:
        image_path = job.image_dir / frame_id
        try:
            with Image.open(image_path) as image:
                tensors.append(backbone.preprocess(image))
        except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
            log.warning("skipping %s: %s", image_path, exc)
            skipped.append(frame_id)
            continue
        kept.append((frame_id, x, y))
    if not kept:
        raise ValueError("no decodable images")

    chunks = []
    for start in range(0, len(tensors), job.batch_size):
        batch = torch.stack(tensors[start : start + job.batch_size])
        features, _ = pooled_features(backbone, batch)
        chunks.append(features.numpy())
    features = np.concatenate(chunks, axis=0)

    label_names: list[str] = []
    label_ids = []
    for frame_id, _, _ in kept:
        name = labels_by_frame.get(frame_id)
        if name is None:
            label_ids.append(UNLABELED)
        else:
            if name not in label_names:
                label_names.append(name)
            label_ids.append(label_names.index(name))

    meta = {
        "feature_dim": FEATURE_DIM,
        "frame_ids": [frame_id for frame_id, _, _ in kept],
        "labels": label_ids,
        "label_names": label_names,
        "sequence_id": job.sequence_id,
        "n_frames": len(kept),
        "extraction": {
            "backbone": "googlenet",
            "weights": backbone.weights_id,
            "weights_sha256": backbone.weights_hash,
            "preprocessing": PREPROCESS_DESCRIPTION,
            "skipped_frames": skipped,
        },
    }
    positions = np.asarray([[x, y] for _, x, y in kept], dtype=np.float64)
    write_artifact(job.out_path, STREAM_KIND, meta, {"positions": positions, "features": features})
    return ExtractionResult(out_path=job.out_path, n_frames=len(kept), skipped=skipped)


def export_head(out_path, weights: str = "pretrained", backbone: Backbone | None = None) -> Path:
    """Write the backbone's classification layer in the head artifact format."""
    backbone = backbone or load_backbone(weights)
    w, b = classification_layer(backbone)
    meta = {
        "out_dim": w.shape[0],
        "in_dim": w.shape[1],
        "class_names": backbone.class_names,
        "extraction": {
            "backbone": "googlenet",
            "weights": backbone.weights_id,
            "weights_sha256": backbone.weights_hash,
        },
    }
    out_path = Path(out_path)
    write_artifact(out_path, HEAD_KIND, meta, {"weights": w.numpy(), "bias": b.numpy()})
    return out_path
