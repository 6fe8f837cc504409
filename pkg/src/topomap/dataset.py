"""Feature streams: ingestion, synthetic generation, and frame replication.

A feature stream is the wire contract with the upstream extractor: an
ordered sequence of (capture position, feature vector) frames with optional
place labels. Streams persist through the shared manifest+blob codec
(positions and features as float32 blobs); a plain-text table format is also
accepted for hand-written fixtures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifact_io import read_artifact, write_artifact
from .errors import ConfigError, DimensionMismatchError, FormatError

_STREAM_KIND = "feature-stream"
UNLABELED = -1


@dataclass
class FeatureStream:
    """Ordered frames of one capture run.

    positions is (n, 2) float64, features (n, m) float32, labels (n,) int64
    with -1 for unlabeled frames (otherwise an index into label_names).
    """

    feature_dim: int
    positions: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    frame_ids: list[str]
    label_names: list[str] = field(default_factory=list)
    sequence_id: str = ""

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.features = np.asarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.positions.shape[0]
        if self.features.shape != (n, self.feature_dim):
            raise ValueError(
                f"features shape {self.features.shape} != ({n}, {self.feature_dim})"
            )
        if self.labels.shape != (n,):
            raise ValueError(f"labels shape {self.labels.shape} != ({n},)")
        if len(self.frame_ids) != n:
            raise ValueError(f"{len(self.frame_ids)} frame ids for {n} frames")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("non-finite position")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature value")
        labeled = self.labels[self.labels != UNLABELED]
        if labeled.size and (labeled.min() < 0 or labeled.max() >= len(self.label_names)):
            raise ValueError("label id out of range of label_names")

    def __len__(self) -> int:
        return len(self.frame_ids)


def save_stream(stream: FeatureStream, path) -> None:
    """Write a stream artifact; bytes are deterministic for identical input."""
    meta = {
        "feature_dim": stream.feature_dim,
        "frame_ids": stream.frame_ids,
        "labels": [int(v) for v in stream.labels],
        "label_names": stream.label_names,
        "sequence_id": stream.sequence_id,
        "n_frames": len(stream),
    }
    blobs = {"positions": stream.positions, "features": stream.features}
    write_artifact(path, _STREAM_KIND, meta, blobs)


def load_stream(path) -> FeatureStream:
    """Load and validate a stream artifact (inverse of save_stream)."""
    meta, blobs = read_artifact(path, _STREAM_KIND)
    n = int(meta["n_frames"])
    m = int(meta["feature_dim"])
    positions = blobs["positions"]
    features = blobs["features"]
    if positions.shape != (n, 2):
        raise DimensionMismatchError(f"positions shape {positions.shape} != ({n}, 2)")
    if features.shape != (n, m):
        raise DimensionMismatchError(f"features shape {features.shape} != ({n}, {m})")
    return FeatureStream(
        feature_dim=m,
        positions=positions.astype(np.float64),
        features=features,
        labels=np.asarray(meta["labels"], dtype=np.int64),
        frame_ids=[str(f) for f in meta["frame_ids"]],
        label_names=[str(s) for s in meta["label_names"]],
        sequence_id=str(meta["sequence_id"]),
    )


def load_stream_text(path) -> FeatureStream:
    """Read a whitespace-separated table: x y label f1 ... fm per line.

    The label column is a category name, or "-" for unlabeled. Lines starting
    with # are comments. Label names are numbered in order of first
    appearance; the sequence id is the file stem.
    """
    path = Path(path)
    positions, feats, labels = [], [], []
    label_names: list[str] = []
    label_index: dict[str, int] = {}
    frame_ids = []
    width = None
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 4:
            raise FormatError(f"{path}:{lineno}: expected 'x y label features...'")
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise FormatError(f"{path}:{lineno}: inconsistent column count")
        try:
            positions.append((float(parts[0]), float(parts[1])))
            feats.append([float(t) for t in parts[3:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        name = parts[2]
        if name == "-":
            labels.append(UNLABELED)
        else:
            if name not in label_index:
                label_index[name] = len(label_names)
                label_names.append(name)
            labels.append(label_index[name])
        frame_ids.append(f"{path.stem}:{len(frame_ids):05d}")
    if not positions:
        raise FormatError(f"{path}: no data rows")
    return FeatureStream(
        feature_dim=len(feats[0]),
        positions=np.asarray(positions),
        features=np.asarray(feats, dtype=np.float32),
        labels=np.asarray(labels),
        frame_ids=frame_ids,
        label_names=label_names,
        sequence_id=path.stem,
    )


def load_stream_any(path) -> FeatureStream:
    """Dispatch: directory -> binary artifact, file -> text table."""
    path = Path(path)
    if path.is_dir():
        return load_stream(path)
    return load_stream_text(path)


# -- synthetic environments ---------------------------------------------------


@dataclass(frozen=True)
class RoomSpec:
    """Axis-aligned room rectangle with a feature cluster.

    rect is (xmin, ymin, xmax, ymax); frames captured here draw features from
    N(feature_center, feature_std^2) and carry the room's category label.
    """

    rect: tuple[float, float, float, float]
    category: int
    feature_center: np.ndarray
    feature_std: float

    def contains(self, point) -> bool:
        x, y = point
        xmin, ymin, xmax, ymax = self.rect
        return xmin <= x <= xmax and ymin <= y <= ymax

    def distance_to(self, point) -> float:
        x, y = point
        xmin, ymin, xmax, ymax = self.rect
        dx = max(xmin - x, 0.0, x - xmax)
        dy = max(ymin - y, 0.0, y - ymax)
        return float(np.hypot(dx, dy))


@dataclass
class SynthConfig:
    """Desk-scale synthetic world: rooms, a waypoint trajectory, and noise."""

    rooms: list[RoomSpec]
    waypoints: list[tuple[float, float]]
    step_length: float
    position_noise: float
    feature_dim: int
    label_names: list[str]
    n_sequences: int = 1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.rooms:
            raise ConfigError("at least one room required")
        if len(self.waypoints) < 1:
            raise ConfigError("at least one waypoint required")
        if self.step_length <= 0:
            raise ConfigError("step_length must be > 0")
        if self.position_noise < 0:
            raise ConfigError("position_noise must be >= 0")
        for room in self.rooms:
            if room.feature_std < 0:
                raise ConfigError("feature_std must be >= 0")
            if np.asarray(room.feature_center).shape != (self.feature_dim,):
                raise ConfigError("feature_center dimension != feature_dim")
            if not 0 <= room.category < len(self.label_names):
                raise ConfigError("room category outside label_names")
        for wp in self.waypoints:
            if not any(room.contains(wp) for room in self.rooms):
                raise ConfigError(f"waypoint {wp} outside all rooms")


def synth_config_from_json(data: dict) -> SynthConfig:
    """Build a SynthConfig from its JSON document form (version 1)."""
    if not isinstance(data, dict) or data.get("version") != 1:
        raise ConfigError("synth config must be a JSON object with version 1")
    try:
        rooms = [
            RoomSpec(
                rect=tuple(float(v) for v in room["rect"]),
                category=int(room["category"]),
                feature_center=np.asarray(room["feature_center"], dtype=np.float64),
                feature_std=float(room["feature_std"]),
            )
            for room in data["rooms"]
        ]
        return SynthConfig(
            rooms=rooms,
            waypoints=[tuple(float(v) for v in wp) for wp in data["waypoints"]],
            step_length=float(data["step_length"]),
            position_noise=float(data["position_noise"]),
            feature_dim=int(data["feature_dim"]),
            label_names=[str(s) for s in data["label_names"]],
            n_sequences=int(data.get("n_sequences", 1)),
            rng_seed=int(data.get("rng_seed", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad synth config: {exc}") from exc


def _walk_waypoints(waypoints, step_length: float) -> np.ndarray:
    """Points along the waypoint polyline at step_length spacing."""
    pts = [np.asarray(waypoints[0], dtype=np.float64)]
    carry = 0.0
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        seg = b - a
        seg_len = float(np.hypot(*seg))
        if seg_len == 0.0:
            continue
        direction = seg / seg_len
        t = step_length - carry
        while t <= seg_len:
            pts.append(a + t * direction)
            t += step_length
        carry = seg_len - (t - step_length)
    return np.asarray(pts)


def _room_of(rooms: list[RoomSpec], point) -> RoomSpec:
    """Containing room, else the nearest one (trajectory may clip a gap)."""
    best = min(rooms, key=lambda r: r.distance_to(point))
    return best


def generate_synthetic(config: SynthConfig) -> list[FeatureStream]:
    """Sample n_sequences streams along the configured trajectory.

    Per frame: the noise-free path point decides the room (hence label and
    feature cluster); the stored position adds Gaussian noise. Deterministic
    per rng_seed.
    """
    path_points = _walk_waypoints(config.waypoints, config.step_length)
    streams = []
    for seq in range(config.n_sequences):
        rng = np.random.default_rng([config.rng_seed, seq])
        n = len(path_points)
        positions = path_points + rng.normal(0.0, config.position_noise, size=(n, 2))
        features = np.empty((n, config.feature_dim), dtype=np.float64)
        labels = np.empty(n, dtype=np.int64)
        for i, point in enumerate(path_points):
            room = _room_of(config.rooms, point)
            noise = rng.normal(0.0, room.feature_std, size=config.feature_dim)
            features[i] = np.asarray(room.feature_center, dtype=np.float64) + noise
            labels[i] = room.category
        sequence_id = f"synth-{seq:02d}"
        streams.append(
            FeatureStream(
                feature_dim=config.feature_dim,
                positions=positions,
                features=features.astype(np.float32),
                labels=labels,
                frame_ids=[f"{sequence_id}:{i:05d}" for i in range(n)],
                label_names=list(config.label_names),
                sequence_id=sequence_id,
            )
        )
    return streams


def replicate_frames(stream: FeatureStream, fraction: float, copies: int, rng_seed: int) -> FeatureStream:
    """Repeat a random fraction of frames ``copies`` extra times in place.

    The frames to replicate are drawn once up front (seeded); each selected
    frame is followed by its copies consecutively, preserving the relative
    order of the originals. copies=0 returns an identical stream.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    if copies < 0:
        raise ValueError(f"copies must be >= 0, got {copies}")
    n = len(stream)
    n_selected = int(round(fraction * n))
    rng = np.random.default_rng(rng_seed)
    selected = rng.choice(n, size=n_selected, replace=False)
    counts = np.ones(n, dtype=np.int64)
    counts[selected] += copies
    index = np.repeat(np.arange(n), counts)
    return FeatureStream(
        feature_dim=stream.feature_dim,
        positions=stream.positions[index],
        features=stream.features[index],
        labels=stream.labels[index],
        frame_ids=[stream.frame_ids[i] for i in index],
        label_names=list(stream.label_names),
        sequence_id=stream.sequence_id,
    )
