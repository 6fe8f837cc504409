"""The three distance functions every other module shares.

All sums run in float64 regardless of the input dtype; 1024-term
accumulations in float32 would lose digits the tolerances elsewhere
depend on.
"""

from __future__ import annotations

import numpy as np


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def euclidean_distance(a, b) -> float:
    """Euclidean distance between two equal-length vectors."""
    a, b = _as_f64(a), _as_f64(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def squared_euclidean(v, u) -> float:
    """Sum of squared componentwise differences (no square root)."""
    v, u = _as_f64(v), _as_f64(u)
    if v.shape != u.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs {u.shape}")
    return float(np.sum((v - u) ** 2))


def weighted_euclidean(x, c, w) -> float:
    """sqrt(sum(w_i * (x_i - c_i)^2)); reduces to euclidean for unit weights.

    Weights must be nonnegative.
    """
    x, c, w = _as_f64(x), _as_f64(c), _as_f64(w)
    if not (x.shape == c.shape == w.shape):
        raise ValueError(f"dimension mismatch: {x.shape}, {c.shape}, {w.shape}")
    if np.any(w < 0.0):
        raise ValueError("negative weight")
    return float(np.sqrt(np.sum(w * (x - c) ** 2)))
