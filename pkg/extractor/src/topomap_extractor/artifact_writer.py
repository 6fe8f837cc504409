"""Writer for the shared manifest+blob wire format.

This mirrors the consumer side byte for byte: a directory with a canonical
JSON ``manifest.json`` (magic, kind, version, metadata) plus little-endian
float32 blobs, each SHA-256 checksummed in the manifest. The extractor only
writes; reading and validation belong to the consumer.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = "topomap-artifact"
MAJOR_VERSION = 1
MINOR_VERSION = 0
MANIFEST_NAME = "manifest.json"


def write_artifact(path, kind: str, meta: dict, blobs: dict[str, np.ndarray]) -> None:
    """Write an artifact directory; identical input yields identical bytes."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob_table = {}
    for name in sorted(blobs):
        data = np.ascontiguousarray(blobs[name], dtype="<f4").tobytes()
        filename = f"{name}.f32"
        (path / filename).write_bytes(data)
        blob_table[name] = {
            "file": filename,
            "dtype": "<f4",
            "shape": list(np.asarray(blobs[name]).shape),
            "sha256": hashlib.sha256(data).hexdigest(),
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
