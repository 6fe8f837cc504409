import json
from pathlib import Path

import numpy as np
import pytest

from topomap.dataset import generate_synthetic
from topomap.errors import ChecksumMismatchError, FormatError
from topomap.hyperparams import Hyperparameters, Variant
from topomap.localization import localize
from topomap.map_builder import build_map
from topomap.map_store import load_map, save_map
from worlds import cell_corridor_config


def built_map(seed=0, min_nodes=50):
    config = cell_corridor_config(
        seed=seed, n_cells=64, n_sequences=2, feature_dim=12, step_length=0.3
    )
    params = Hyperparameters(lambda_=0.9, alpha=0.1, tau=1.0, gamma=0.5, beta=0.5)
    topo, coverage = build_map(generate_synthetic(config), params)
    assert len(topo) >= min_nodes
    return topo, coverage


def read_tree(path: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_round_trip_fields(tmp_path):
    topo, coverage = built_map()
    save_map(topo, coverage, tmp_path / "m")
    loaded, loaded_coverage = load_map(tmp_path / "m")
    assert loaded.feature_dim == topo.feature_dim
    assert loaded.params == topo.params
    assert loaded.variant == topo.variant
    assert loaded.edges == topo.edges
    assert loaded.step_count == topo.step_count
    assert loaded.sequence_count == topo.sequence_count
    assert loaded.last_winner is None  # maps are stored finalized
    assert loaded_coverage == coverage
    for a, b in zip(loaded.nodes, topo.nodes):
        assert a.id == b.id
        assert a.consolidation_count == b.consolidation_count
        assert np.array_equal(a.p, b.p)
        # feature vectors round-trip exactly at float32 precision
        assert np.array_equal(a.c, b.c.astype(np.float32).astype(np.float64))
        assert np.array_equal(a.delta, b.delta.astype(np.float32).astype(np.float64))
        assert np.array_equal(a.u, b.u.astype(np.float32).astype(np.float64))


def test_save_load_save_identical_bytes(tmp_path):
    topo, coverage = built_map(seed=1)
    save_map(topo, coverage, tmp_path / "a")
    loaded, loaded_coverage = load_map(tmp_path / "a")
    save_map(loaded, loaded_coverage, tmp_path / "b")
    assert read_tree(tmp_path / "a") == read_tree(tmp_path / "b")


def test_save_without_coverage(tmp_path):
    topo, _ = built_map(seed=2)
    save_map(topo, None, tmp_path / "m")
    loaded, coverage = load_map(tmp_path / "m")
    assert coverage is None
    assert len(loaded) == len(topo)


def test_blob_tampering_detected(tmp_path):
    topo, coverage = built_map(seed=3)
    save_map(topo, coverage, tmp_path / "m")
    blob = tmp_path / "m" / "c.f32"
    data = bytearray(blob.read_bytes())
    data[10] ^= 0x01
    blob.write_bytes(bytes(data))
    with pytest.raises(ChecksumMismatchError):
        load_map(tmp_path / "m")


def test_wrong_magic_rejected(tmp_path):
    topo, coverage = built_map(seed=4)
    save_map(topo, coverage, tmp_path / "m")
    manifest = tmp_path / "m" / "manifest.json"
    doc = json.loads(manifest.read_text())
    doc["magic"] = "nope"
    manifest.write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        load_map(tmp_path / "m")


def test_loaded_map_localizes_identically(tmp_path):
    topo, coverage = built_map(seed=5)
    save_map(topo, coverage, tmp_path / "m")
    loaded, _ = load_map(tmp_path / "m")
    # Quantize the original to storage precision: localization must agree
    # exactly with the loaded artifact then.
    for node in topo.nodes:
        node.c = node.c.astype(np.float32).astype(np.float64)
        node.delta = node.delta.astype(np.float32).astype(np.float64)
        node.u = node.u.astype(np.float32).astype(np.float64)
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.normal(0.0, 2.0, topo.feature_dim)
        assert localize(loaded, x, 5) == localize(topo, x, 5)


def test_loaded_map_can_resume_building(tmp_path):
    topo, coverage = built_map(seed=6)
    save_map(topo, coverage, tmp_path / "m")
    loaded, _ = load_map(tmp_path / "m")
    n_before = len(loaded)
    loaded.begin_sequence()
    out = loaded.process_observation((-50.0, -50.0), np.zeros(loaded.feature_dim))
    assert out.inserted
    assert len(loaded) == n_before + 1
    assert out.new_edge is None  # no cross-boundary persistence or edge


def test_variant_round_trips(tmp_path):
    config = cell_corridor_config(seed=7, n_sequences=1, feature_dim=6)
    params = Hyperparameters(lambda_=0.9, alpha=0.1, tau=1.0, gamma=0.5, beta=0.5)
    topo, coverage = build_map(generate_synthetic(config), params, Variant.PM_NO_VH)
    save_map(topo, coverage, tmp_path / "m")
    loaded, _ = load_map(tmp_path / "m")
    assert loaded.variant is Variant.PM_NO_VH
    assert loaded.effective_tau == 0.0
