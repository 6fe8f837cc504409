"""Shared on-disk codec: a JSON manifest plus raw float32 blobs.

Every persistent artifact (feature stream, map, linear head, MLP model) is a
directory holding ``manifest.json`` and one ``<name>.f32`` file per array.
Blobs are little-endian float32, C order; the manifest records each blob's
shape and SHA-256 so corruption is detected before any data is used. Writes
are deterministic: identical content yields identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumMismatchError,
    DimensionMismatchError,
    FormatError,
    UnsupportedVersionError,
)

MAGIC = "topomap-artifact"
MAJOR_VERSION = 1
MINOR_VERSION = 0
MANIFEST_NAME = "manifest.json"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_artifact(path, kind: str, meta: dict, blobs: dict[str, np.ndarray]) -> None:
    """Write a manifest + blob directory at ``path`` (created if needed).

    Arrays are stored as little-endian float32; the caller accepts that
    precision for anything routed through a blob.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob_table = {}
    for name in sorted(blobs):
        arr = np.asarray(blobs[name])
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        filename = f"{name}.f32"
        (path / filename).write_bytes(data)
        blob_table[name] = {
            "file": filename,
            "dtype": "<f4",
            "shape": list(arr.shape),
            "sha256": _sha256(data),
        }
    manifest = {
        "magic": MAGIC,
        "kind": kind,
        "version": {"major": MAJOR_VERSION, "minor": MINOR_VERSION},
        "meta": meta,
        "blobs": blob_table,
    }
    text = json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    (path / MANIFEST_NAME).write_text(text, encoding="utf-8")


def read_artifact(path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Read and validate an artifact directory; returns (meta, blobs).

    Blob arrays come back as float32 with the manifest shape. Raises
    FormatError for bad magic/kind/manifest, UnsupportedVersionError for a
    foreign major version, ChecksumMismatchError when a blob digest
    disagrees, DimensionMismatchError when sizes and shapes disagree.
    """
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FormatError(f"no {MANIFEST_NAME} in {path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed manifest in {path}: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("magic") != MAGIC:
        raise FormatError(f"bad magic in {manifest_path}")
    if manifest.get("kind") != kind:
        raise FormatError(f"expected artifact kind {kind!r}, found {manifest.get('kind')!r}")
    version = manifest.get("version", {})
    if version.get("major") != MAJOR_VERSION:
        raise UnsupportedVersionError(
            f"unsupported major version {version.get('major')!r} (reader supports {MAJOR_VERSION})"
        )
    blobs: dict[str, np.ndarray] = {}
    for name, entry in manifest.get("blobs", {}).items():
        blob_path = path / entry["file"]
        if not blob_path.is_file():
            raise FormatError(f"missing blob file {blob_path}")
        data = blob_path.read_bytes()
        if _sha256(data) != entry["sha256"]:
            raise ChecksumMismatchError(f"checksum mismatch for blob {name!r} in {path}")
        if entry.get("dtype") != "<f4":
            raise FormatError(f"unsupported blob dtype {entry.get('dtype')!r}")
        shape = tuple(entry["shape"])
        expected = int(np.prod(shape, dtype=np.int64)) * 4
        if len(data) != expected:
            raise DimensionMismatchError(
                f"blob {name!r} holds {len(data)} bytes, shape {shape} needs {expected}"
            )
        blobs[name] = np.frombuffer(data, dtype="<f4").reshape(shape)
    return manifest["meta"], blobs
