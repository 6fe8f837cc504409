"""Rank map nodes by relevance-weighted activation of a query feature vector.

Each node derives a per-dimension relevance weight from its average-distance
vector: dimensions that varied a lot at that node count less. The activation
combines the weighted distance with the total relevance mass into a bounded
score in ]0, 1[; the highest-activation node is the estimated location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .map_builder import MapNode, TopologicalMap
from .metrics import weighted_euclidean

# exp() overflows float64 just above this; clipping keeps the sigmoid output
# strictly positive instead of underflowing to 0.
_EXP_ARG_MAX = 709.0


@dataclass(frozen=True)
class RankedLocation:
    node_id: int
    activation: float
    rank: int  # 1-based


def relevance(delta, s_slope: float) -> np.ndarray:
    """Per-dimension relevance in ]0, 1] from an average-distance vector.

    Inverse logistic of the deviation from the vector's own mean, scaled by
    its own range: all ones when the components are all equal (nothing to
    discriminate), otherwise below-average dimensions approach 1 and
    above-average dimensions approach 0.
    """
    delta = np.asarray(delta, dtype=np.float64)
    d_min = float(np.min(delta))
    d_max = float(np.max(delta))
    if d_min == d_max:
        return np.ones_like(delta)
    arg = (delta - np.mean(delta)) / (s_slope * (d_max - d_min))
    return 1.0 / (1.0 + np.exp(np.clip(arg, -_EXP_ARG_MAX, _EXP_ARG_MAX)))


def activation(x, node: MapNode, s_slope: float, epsilon: float) -> float:
    """Bounded similarity of query x to a node, in ]0, 1[."""
    w = relevance(node.delta, s_slope)
    mass = float(np.sum(w))
    d = weighted_euclidean(x, node.c, w)
    return mass / (d + mass + epsilon)


def localize(topo: TopologicalMap, x, k: int) -> list[RankedLocation]:
    """Top-k nodes by activation, rank 1 first; ties go to the lowest id."""
    if not topo.nodes:
        raise ValueError("cannot localize on an empty map")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    x = np.asarray(x, dtype=np.float64)
    s_slope = topo.params.s_slope
    epsilon = topo.params.epsilon
    scored = [(activation(x, node, s_slope, epsilon), node.id) for node in topo.nodes]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [
        RankedLocation(node_id=nid, activation=act, rank=r + 1)
        for r, (act, nid) in enumerate(scored[: min(k, len(scored))])
    ]


class LocalizationIndex:
    """Precomputed relevance matrix for batched queries over a finished map.

    Results are identical to localize(); the index just hoists the per-node
    relevance computation out of the query loop. It is tied to the map state
    at construction and refuses to answer if the map has grown or changed
    since (checked through the build step counter).
    """

    def __init__(self, topo: TopologicalMap):
        if not topo.nodes:
            raise ValueError("cannot index an empty map")
        self._topo = topo
        self._step_count = topo.step_count
        self._c = topo.feature_matrix("c")
        delta = topo.feature_matrix("delta")
        self._w = np.stack([relevance(row, topo.params.s_slope) for row in delta])
        self._mass = np.sum(self._w, axis=1)
        self._epsilon = topo.params.epsilon

    def _check_fresh(self) -> None:
        if self._topo.step_count != self._step_count:
            raise RuntimeError("map changed since the index was built; rebuild the index")

    def activations(self, x) -> np.ndarray:
        """Activation of every node for query x, indexed by node id."""
        self._check_fresh()
        x = np.asarray(x, dtype=np.float64)
        d = np.sqrt(np.sum(self._w * (x - self._c) ** 2, axis=1))
        return self._mass / (d + self._mass + self._epsilon)

    def localize(self, x, k: int) -> list[RankedLocation]:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        act = self.activations(x)
        order = np.lexsort((np.arange(len(act)), -act))[: min(k, len(act))]
        return [
            RankedLocation(node_id=int(nid), activation=float(act[nid]), rank=r + 1)
            for r, nid in enumerate(order)
        ]
