from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from topomap_extractor.model import load_backbone

WEIGHTS = "random:0"  # offline-friendly; the checkpoint needs network access


@pytest.fixture(scope="session")
def backbone():
    return load_backbone(WEIGHTS)


def synthetic_image(seed: int, size=(320, 256)) -> Image.Image:
    """Deterministic colorful test image (gradient + seeded noise)."""
    rng = np.random.default_rng(seed)
    w, h = size
    x = np.linspace(0, 255, w, dtype=np.float64)
    y = np.linspace(0, 255, h, dtype=np.float64)[:, None]
    base = np.stack(
        [
            np.broadcast_to(x, (h, w)),
            np.broadcast_to(y, (h, w)),
            np.broadcast_to((x[::-1] + y) / 2, (h, w)),
        ],
        axis=2,
    )
    noisy = np.clip(base + rng.normal(0, 20, size=(h, w, 3)), 0, 255)
    return Image.fromarray(noisy.astype(np.uint8), mode="RGB")


@pytest.fixture()
def image_dir(tmp_path) -> Path:
    directory = tmp_path / "images"
    directory.mkdir()
    for i in range(5):
        synthetic_image(seed=i).save(directory / f"frame-{i}.png")
    return directory


def write_pose_file(path: Path, frame_ids, start=(0.0, 0.0), step=0.5) -> Path:
    lines = ["# frame_id x y"]
    for i, frame_id in enumerate(frame_ids):
        lines.append(f"{frame_id} {start[0] + i * step} {start[1]}")
    path.write_text("\n".join(lines) + "\n")
    return path
