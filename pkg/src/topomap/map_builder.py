"""Incremental construction of the topological map.

Observations arrive as (position, feature vector) pairs. Nodes compete on
spatial distance; the nearest node wins. An observation farther than
``lambda_`` from every node spawns a new node whose consolidated vector
blends the previous node's (persistence); otherwise every node within
``lambda_`` consolidates the features through a habituation-gated moving
average. Edges record transitions between consecutive winners.

The update recurrences, per consolidating node j with gate
``squared_euclidean(v, u_j) >= tau``:

    c_j  <- c_j + alpha * (v - c_j)
    d_j  <- d_j + alpha * beta * (|v - c_j| - d_j)   (with the pre-update c_j)
    u_j  <- v

All node vectors are kept in float64; the build is strictly sequential and
deterministic for a given input stream and hyperparameter set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyInputError
from .hyperparams import Hyperparameters, Variant
from .metrics import squared_euclidean

# One entry per processed observation: (frame_id, ids of the nodes that the
# observation was assigned to this step -- the inserted node, or every node
# within lambda_).
CoverageLog = list[tuple[str, tuple[int, ...]]]


@dataclass(frozen=True)
class StepOutcome:
    """What a single observation did to the map.

    ``updated_ids`` lists the consolidating nodes whose habituation gate
    passed (the inserted node on an insertion step: its vectors were written
    from this observation). ``new_edge`` is set only when an edge was
    actually added; a transition that retraces an existing edge reports
    None.
    """

    winner_id: int
    inserted: bool
    consolidating_ids: tuple[int, ...]
    updated_ids: tuple[int, ...]
    new_edge: Optional[tuple[int, int]]


@dataclass
class MapNode:
    """A map node: spatial position plus three feature-space vectors.

    ``p`` is fixed at insertion. ``c`` is the consolidated feature vector,
    ``delta`` the per-dimension moving average of |v - c|, and ``u`` the
    last feature vector the node consolidated (the habituation reference).
    """

    id: int
    p: np.ndarray
    c: np.ndarray
    delta: np.ndarray
    u: np.ndarray
    consolidation_count: int = 0

    def habituation_gate(self, v: np.ndarray, tau: float) -> bool:
        """True when v is far enough from the last consolidated vector."""
        return squared_euclidean(v, self.u) >= tau

    def consolidate_features(self, v: np.ndarray, alpha: float, tau: float) -> bool:
        """Move c toward v by rate alpha if the gate passes. Does not touch u."""
        if not self.habituation_gate(v, tau):
            return False
        self.c += alpha * (v - self.c)
        self.consolidation_count += 1
        return True

    def update_delta(self, v: np.ndarray, alpha: float, beta: float, tau: float) -> bool:
        """Update the average-distance vector from the current (pre-update) c.

        Callers that also consolidate must run this first: the distance term
        |v - c| is defined against c as it was before this step's feature
        update.
        """
        if not self.habituation_gate(v, tau):
            return False
        phi = np.abs(v - self.c)
        self.delta += (alpha * beta) * (phi - self.delta)
        return True


class TopologicalMap:
    """Graph of feature-consolidating nodes, built one observation at a time.

    A finished map is safe for unlimited concurrent readers; building is
    strictly sequential.
    """

    def __init__(
        self,
        params: Hyperparameters,
        feature_dim: int,
        variant: Variant = Variant.PM,
    ):
        if feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {feature_dim}")
        self.params = params
        self.feature_dim = int(feature_dim)
        self.variant = variant
        self.nodes: list[MapNode] = []
        self.edges: set[tuple[int, int]] = set()
        self.last_winner: Optional[int] = None
        self.step_count = 0
        self.sequence_count = 0
        self._positions = np.empty((0, 2), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def effective_tau(self) -> float:
        """tau used by the gate; forced to 0 when habituation is ablated."""
        if self.variant is Variant.PM_NO_VH:
            return 0.0
        return self.params.tau

    def node_positions(self) -> np.ndarray:
        """(n, 2) array of node positions, row index == node id."""
        return self._positions.copy()

    def feature_matrix(self, which: str) -> np.ndarray:
        """(n, m) stack of per-node vectors; ``which`` is 'c', 'delta' or 'u'."""
        if which not in ("c", "delta", "u"):
            raise ValueError(f"unknown matrix {which!r}")
        if not self.nodes:
            return np.empty((0, self.feature_dim), dtype=np.float64)
        return np.stack([getattr(node, which) for node in self.nodes])

    def find_winner(self, s) -> Optional[tuple[int, float]]:
        """Nearest node to position s, or None on an empty map.

        Ties go to the lowest node id.
        """
        if not self.nodes:
            return None
        s = np.asarray(s, dtype=np.float64)
        d = np.sqrt(np.sum((self._positions - s) ** 2, axis=1))
        winner = int(np.argmin(d))
        return winner, float(d[winner])

    def insert_node(self, s, v) -> int:
        """Insert a node at position s seeded with features v.

        Only valid when the map is empty or the winner is farther than
        lambda_ (the caller enforces this). The new node blends the last
        winner's consolidated vector at rate gamma unless persistence is
        ablated or no last winner exists; an edge to the last winner is
        created; the new node becomes the last winner.
        """
        s = np.asarray(s, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if s.shape != (2,):
            raise ValueError(f"position must have shape (2,), got {s.shape}")
        if v.shape != (self.feature_dim,):
            raise ValueError(
                f"feature vector has dimension {v.shape}, map expects ({self.feature_dim},)"
            )
        node_id = len(self.nodes)
        if self.last_winner is not None and self.variant is not Variant.PM_NO_VP:
            gamma = self.params.gamma
            c = gamma * self.nodes[self.last_winner].c + (1.0 - gamma) * v
        else:
            c = v.copy()
        p = s.copy()
        p.flags.writeable = False
        node = MapNode(
            id=node_id,
            p=p,
            c=c,
            delta=np.zeros(self.feature_dim, dtype=np.float64),
            u=v.copy(),
        )
        self.nodes.append(node)
        self._positions = np.vstack([self._positions, s[np.newaxis, :]])
        if self.last_winner is not None:
            self._add_edge(self.last_winner, node_id)
        self.last_winner = node_id
        return node_id

    def _add_edge(self, a: int, b: int) -> Optional[tuple[int, int]]:
        """Add the undirected edge {a, b}; returns it if it was new."""
        if a == b:
            return None
        edge = (a, b) if a < b else (b, a)
        if edge in self.edges:
            return None
        self.edges.add(edge)
        return edge

    def process_observation(self, s, v, frame_id: str | None = None) -> StepOutcome:
        """Feed one observation through competition, insertion/consolidation,
        and transition-edge creation.

        Rejects non-finite input. ``frame_id`` is accepted for symmetry with
        the stream loop but not stored here; coverage is the caller's to log
        from the returned outcome.
        """
        s = np.asarray(s, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if s.shape != (2,):
            raise ValueError(f"position must have shape (2,), got {s.shape}")
        if v.shape != (self.feature_dim,):
            raise ValueError(
                f"feature vector has dimension {v.shape}, map expects ({self.feature_dim},)"
            )
        if not np.all(np.isfinite(s)) or not np.all(np.isfinite(v)):
            raise ValueError("non-finite observation rejected")

        d = np.sqrt(np.sum((self._positions - s) ** 2, axis=1))
        if d.size == 0 or float(np.min(d)) > self.params.lambda_:
            previous = self.last_winner
            node_id = self.insert_node(s, v)
            new_edge = None
            if previous is not None:
                pair = (previous, node_id) if previous < node_id else (node_id, previous)
                new_edge = pair  # insert_node just added it; it cannot pre-exist
            outcome = StepOutcome(
                winner_id=node_id,
                inserted=True,
                consolidating_ids=(node_id,),
                updated_ids=(node_id,),
                new_edge=new_edge,
            )
        else:
            winner_id = int(np.argmin(d))
            consolidating = tuple(int(i) for i in np.nonzero(d <= self.params.lambda_)[0])
            alpha = self.params.alpha
            beta = self.params.beta
            tau = self.effective_tau
            updated = []
            for node_id in consolidating:
                node = self.nodes[node_id]
                passed = node.update_delta(v, alpha, beta, tau)
                node.consolidate_features(v, alpha, tau)
                if passed:
                    node.u = v.copy()
                    updated.append(node_id)
            new_edge = None
            if self.last_winner is not None and winner_id != self.last_winner:
                new_edge = self._add_edge(self.last_winner, winner_id)
            self.last_winner = winner_id
            outcome = StepOutcome(
                winner_id=winner_id,
                inserted=False,
                consolidating_ids=consolidating,
                updated_ids=tuple(updated),
                new_edge=new_edge,
            )
        self.step_count += 1
        return outcome

    def begin_sequence(self) -> None:
        """Mark a sequence boundary.

        Clears the last winner so the next insertion starts from the raw
        features (no persistence source) and no transition edge is created
        across the boundary.
        """
        self.last_winner = None
        self.sequence_count += 1


def build_map(
    streams: Sequence,
    params: Hyperparameters,
    variant: Variant = Variant.PM,
    feature_dim: int | None = None,
) -> tuple[TopologicalMap, CoverageLog]:
    """Build a map from one or more feature streams, in the given order.

    Each stream is preceded by a sequence boundary. Returns the map and the
    coverage log (frame_id -> consolidating node ids, in presentation
    order).

    Args:
        streams: objects with positions (n, 2), features (n, m) and
            frame_ids, e.g. dataset.FeatureStream.
        params: hyperparameter set.
        variant: full method or an ablation.
        feature_dim: override for empty stream lists; normally inferred.
    """
    streams = list(streams)
    if not streams and feature_dim is None:
        raise EmptyInputError("no streams to build from")
    if feature_dim is None:
        feature_dim = streams[0].feature_dim
    topo = TopologicalMap(params, feature_dim, variant)
    coverage: CoverageLog = []
    extend_map(topo, streams, coverage)
    return topo, coverage


def extend_map(
    topo: TopologicalMap,
    streams: Iterable,
    coverage: CoverageLog | None = None,
) -> CoverageLog:
    """Feed further streams into an existing map (begin_sequence per stream)."""
    if coverage is None:
        coverage = []
    for stream in streams:
        if stream.feature_dim != topo.feature_dim:
            raise ValueError(
                f"stream dimension {stream.feature_dim} != map dimension {topo.feature_dim}"
            )
        topo.begin_sequence()
        features = np.asarray(stream.features, dtype=np.float64)
        positions = np.asarray(stream.positions, dtype=np.float64)
        for i in range(len(stream.frame_ids)):
            outcome = topo.process_observation(positions[i], features[i])
            coverage.append((stream.frame_ids[i], outcome.consolidating_ids))
    return coverage
