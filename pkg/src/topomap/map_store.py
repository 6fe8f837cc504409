"""Persistence of topological maps (manifest + float32 blobs).

The manifest holds hyperparameters, the node table (id, position,
consolidation count), the edge list, and build counters; the c/delta/u
matrices go to blobs in node-id order. Maps are stored finalized: the
last-winner marker is not persisted, so a loaded map starts at a sequence
boundary. The optional coverage log (frame id -> consolidating node ids)
rides along in the manifest.
"""

from __future__ import annotations

import numpy as np

from .artifact_io import read_artifact, write_artifact
from .errors import DimensionMismatchError, FormatError
from .hyperparams import Hyperparameters, Variant
from .map_builder import CoverageLog, MapNode, TopologicalMap

_MAP_KIND = "topological-map"


def save_map(topo: TopologicalMap, coverage: CoverageLog | None, path) -> None:
    """Write the map (and coverage log, if given) at ``path``.

    Features are stored at float32 precision; everything else round-trips
    exactly. Output bytes are deterministic.
    """
    nodes_table = [
        {
            "id": node.id,
            "p": [float(node.p[0]), float(node.p[1])],
            "consolidation_count": node.consolidation_count,
        }
        for node in topo.nodes
    ]
    meta = {
        "feature_dim": topo.feature_dim,
        "hyperparameters": topo.params.to_dict(),
        "variant": topo.variant.value,
        "nodes": nodes_table,
        "edges": sorted([list(edge) for edge in topo.edges]),
        "step_count": topo.step_count,
        "sequence_count": topo.sequence_count,
        "coverage": (
            [[frame_id, list(ids)] for frame_id, ids in coverage]
            if coverage is not None
            else None
        ),
    }
    blobs = {
        "c": topo.feature_matrix("c"),
        "delta": topo.feature_matrix("delta"),
        "u": topo.feature_matrix("u"),
    }
    write_artifact(path, _MAP_KIND, meta, blobs)


def load_map(path) -> tuple[TopologicalMap, CoverageLog | None]:
    """Inverse of save_map. The loaded map has no last winner."""
    meta, blobs = read_artifact(path, _MAP_KIND)
    params = Hyperparameters.from_dict(meta["hyperparameters"])
    try:
        variant = Variant(meta.get("variant", "pm"))
    except ValueError as exc:
        raise FormatError(f"unknown variant {meta.get('variant')!r}") from exc
    topo = TopologicalMap(params, int(meta["feature_dim"]), variant)
    n = len(meta["nodes"])
    for name in ("c", "delta", "u"):
        if blobs[name].shape != (n, topo.feature_dim):
            raise DimensionMismatchError(
                f"blob {name!r} shape {blobs[name].shape} != ({n}, {topo.feature_dim})"
            )
    for row, entry in enumerate(meta["nodes"]):
        if int(entry["id"]) != row:
            raise FormatError("node table ids must be dense and ordered")
        p = np.asarray(entry["p"], dtype=np.float64)
        node = MapNode(
            id=row,
            p=p,
            c=blobs["c"][row].astype(np.float64),
            delta=blobs["delta"][row].astype(np.float64),
            u=blobs["u"][row].astype(np.float64),
            consolidation_count=int(entry["consolidation_count"]),
        )
        node.p.flags.writeable = False
        topo.nodes.append(node)
    topo._positions = np.asarray([node.p for node in topo.nodes], dtype=np.float64).reshape(
        n, 2
    )
    for a, b in meta["edges"]:
        a, b = int(a), int(b)
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise FormatError(f"invalid edge [{a}, {b}]")
        topo.edges.add((min(a, b), max(a, b)))
    topo.step_count = int(meta["step_count"])
    topo.sequence_count = int(meta["sequence_count"])
    coverage = None
    if meta.get("coverage") is not None:
        coverage = [(str(frame_id), tuple(int(i) for i in ids)) for frame_id, ids in meta["coverage"]]
    return topo, coverage
