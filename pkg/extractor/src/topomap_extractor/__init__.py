"""Feature extraction for topomap: posed images -> feature streams + head."""

from .extract import ExtractionJob, ExtractionResult, export_head, extract_stream
from .model import Backbone, load_backbone, pooled_features

__version__ = "0.1.0"

__all__ = [
    "Backbone",
    "ExtractionJob",
    "ExtractionResult",
    "export_head",
    "extract_stream",
    "load_backbone",
    "pooled_features",
    "__version__",
]
