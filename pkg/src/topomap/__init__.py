"""Topological maps that consolidate streamed visual feature vectors.

Build a map from (position, feature) observation streams, classify the
consolidated per-node vectors into objects and place categories, localize
query feature vectors on the map, and reproduce the evaluation protocols.
"""

from .dataset import FeatureStream, RoomSpec, SynthConfig, generate_synthetic, load_stream, replicate_frames, save_stream
from .hyperparams import Hyperparameters, Variant
from .localization import LocalizationIndex, RankedLocation, localize
from .map_builder import MapNode, StepOutcome, TopologicalMap, build_map
from .map_store import load_map, save_map
from .metrics import euclidean_distance, squared_euclidean, weighted_euclidean

__version__ = "0.1.0"

__all__ = [
    "FeatureStream",
    "Hyperparameters",
    "LocalizationIndex",
    "MapNode",
    "RankedLocation",
    "RoomSpec",
    "StepOutcome",
    "SynthConfig",
    "TopologicalMap",
    "Variant",
    "build_map",
    "euclidean_distance",
    "generate_synthetic",
    "load_map",
    "load_stream",
    "localize",
    "replicate_frames",
    "save_map",
    "save_stream",
    "squared_euclidean",
    "weighted_euclidean",
    "__version__",
]
