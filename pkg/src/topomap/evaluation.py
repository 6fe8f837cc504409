"""Experiment protocols over streams and maps, with machine-readable reports.

Five protocols: topology quality (distance of inputs to their nearest node),
object classification of consolidated vectors against per-image labels
(top-5 containment and a subset-softmax l1 error), place-category
cross-validation with each sequence as one fold, place classification over
time on a growing map, and image localization with optional frame
replication and ablation variants.

Every protocol is deterministic given (config, seed); reports embed both.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import (
    LinearHead,
    TrainConfig,
    head_logits,
    mlp_predict_batch,
    mlp_train,
    subset_softmax,
    topk_indices,
)
from .dataset import UNLABELED, FeatureStream, RoomSpec, replicate_frames
from .hyperparams import Hyperparameters, Variant
from .localization import LocalizationIndex
from .map_builder import CoverageLog, TopologicalMap, build_map, extend_map

log = logging.getLogger(__name__)

REPORT_FORMAT = "topomap-report"
REPORT_VERSION = 1


# -- hyperparameter sampling --------------------------------------------------


@dataclass(frozen=True)
class LhsRanges:
    """(min, max) sampling ranges for the five tuned hyperparameters.

    The spatial threshold lambda_ is deliberately absent: it shapes the
    topology directly and is fixed by hand.
    """

    alpha: tuple[float, float] = (0.001, 0.1)
    tau: tuple[float, float] = (1.0, 100.0)
    gamma: tuple[float, float] = (0.001, 0.999)
    beta: tuple[float, float] = (0.001, 0.999)
    s_slope: tuple[float, float] = (0.001, 0.1)

    def __post_init__(self) -> None:
        for name in ("alpha", "tau", "gamma", "beta", "s_slope"):
            low, high = getattr(self, name)
            if not low < high:
                raise ValueError(f"{name}: min must be < max, got ({low}, {high})")


def lhs_sample(
    ranges: LhsRanges,
    n: int,
    rng_seed: int,
    lambda_: float = 0.9,
    epsilon: float = 1e-7,
) -> list[Hyperparameters]:
    """Latin hypercube sample of n hyperparameter sets.

    Each range splits into n equal subintervals; every sample takes one
    uniform draw from a distinct subinterval per dimension, with independent
    random permutations pairing subintervals across dimensions. lambda_ and
    epsilon are fixed, not sampled.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(rng_seed)
    columns = {}
    for name in ("alpha", "tau", "gamma", "beta", "s_slope"):
        low, high = getattr(ranges, name)
        cells = rng.permutation(n)
        offsets = rng.uniform(0.0, 1.0, size=n)
        columns[name] = low + (cells + offsets) * (high - low) / n
    return [
        Hyperparameters(
            lambda_=lambda_,
            epsilon=epsilon,
            **{name: float(columns[name][i]) for name in columns},
        )
        for i in range(n)
    ]


# -- reports ------------------------------------------------------------------


@dataclass(frozen=True)
class MetricRow:
    name: str
    mean: float
    std: float
    n: int


@dataclass
class EvalReport:
    """One protocol run: config snapshot, seed, and scalar metric rows."""

    protocol: str
    seed: int
    repetitions: int
    config: dict
    metrics: list[MetricRow] = field(default_factory=list)


def write_report(report: EvalReport, path) -> None:
    """Write the report as a small self-describing TSV document."""
    lines = [
        f"# {REPORT_FORMAT}\tv{REPORT_VERSION}",
        f"# protocol\t{report.protocol}",
        f"# seed\t{report.seed}",
        f"# repetitions\t{report.repetitions}",
        f"# config\t{json.dumps(report.config, sort_keys=True)}",
        "metric\tmean\tstd\tn",
    ]
    for row in report.metrics:
        lines.append(f"{row.name}\t{row.mean!r}\t{row.std!r}\t{row.n}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _mean_std_rows(name: str, values) -> MetricRow:
    values = np.asarray(values, dtype=np.float64)
    return MetricRow(name, float(np.mean(values)), float(np.std(values)), int(values.size))


# -- topology -----------------------------------------------------------------


def nearest_node_distances(topo: TopologicalMap, positions) -> np.ndarray:
    """Distance from every position to its nearest node (brute force)."""
    if not topo.nodes:
        raise ValueError("map is empty")
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    node_pos = topo.node_positions()
    out = np.empty(positions.shape[0])
    for start in range(0, positions.shape[0], 4096):  # bounded scratch memory
        block = positions[start : start + 4096]
        diff = block[:, np.newaxis, :] - node_pos[np.newaxis, :, :]
        out[start : start + 4096] = np.min(np.sqrt(np.sum(diff**2, axis=2)), axis=1)
    return out


def eval_topology(topo: TopologicalMap, positions) -> tuple[float, float]:
    """(mean, max) distance of the presented positions to their nearest node."""
    d = nearest_node_distances(topo, positions)
    return float(np.mean(d)), float(np.max(d))


@dataclass
class TopologyResult:
    mean_dists: np.ndarray  # per repetition
    max_dists: np.ndarray
    last_map: TopologicalMap
    seed: int

    def as_report(self) -> EvalReport:
        return EvalReport(
            protocol="topology",
            seed=self.seed,
            repetitions=len(self.mean_dists),
            config={},
            metrics=[
                _mean_std_rows("mean_dist", self.mean_dists),
                _mean_std_rows("max_dist", self.max_dists),
            ],
        )


def run_topology_protocol(
    streams: list[FeatureStream],
    params: Hyperparameters,
    repetitions: int,
    rng_seed: int,
    variant: Variant = Variant.PM,
) -> TopologyResult:
    """Build one map per repetition from the sequences in seeded random order
    and measure input-to-nearest-node distances each time."""
    if not streams:
        raise ValueError("no streams")
    all_positions = np.vstack([s.positions for s in streams])
    means, maxes = [], []
    last_map = None
    for rep in range(repetitions):
        order = np.random.default_rng([rng_seed, rep]).permutation(len(streams))
        topo, _ = build_map([streams[i] for i in order], params, variant)
        mean_d, max_d = eval_topology(topo, all_positions)
        means.append(mean_d)
        maxes.append(max_d)
        last_map = topo
    return TopologyResult(np.asarray(means), np.asarray(maxes), last_map, rng_seed)


# -- object classification ----------------------------------------------------


@dataclass
class ObjectEvalInputs:
    """Per-frame head outputs plus the node -> frame coverage of one build.

    top1 and subset_probs align with the presentation order of the coverage
    log that produced node_frames.
    """

    top1: np.ndarray  # (n_frames,) full-head argmax per frame
    subset_probs: np.ndarray  # (n_frames, b) subset softmax per frame
    node_frames: dict[int, list[int]]  # node id -> frame indices covering it


def object_eval_inputs(
    stream: FeatureStream,
    coverage: CoverageLog,
    head: LinearHead,
    subset: list[int],
) -> ObjectEvalInputs:
    if len(coverage) != len(stream):
        raise ValueError("coverage log does not match the stream length")
    logits = np.asarray(stream.features, dtype=np.float64) @ head.weights.T + head.bias
    top1 = np.argmax(logits, axis=1)
    subset_probs = np.stack([subset_softmax(row, subset) for row in logits])
    node_frames: dict[int, list[int]] = {}
    for frame_idx, (_, node_ids) in enumerate(coverage):
        for node_id in node_ids:
            node_frames.setdefault(node_id, []).append(frame_idx)
    return ObjectEvalInputs(top1=top1, subset_probs=subset_probs, node_frames=node_frames)


def eval_object_top5(topo: TopologicalMap, inputs: ObjectEvalInputs, head: LinearHead) -> float:
    """Fraction of (frame, covering node) pairs whose frame top-1 label sits
    in the top-5 labels of the node's consolidated vector."""
    if not inputs.node_frames:
        raise ValueError("empty coverage")
    hits = 0
    total = 0
    for node_id, frames in inputs.node_frames.items():
        node_top5 = set(int(i) for i in topk_indices(head_logits(head, topo.nodes[node_id].c), 5))
        for frame_idx in frames:
            hits += int(inputs.top1[frame_idx]) in node_top5
            total += 1
    return hits / total


def eval_object_errmean(
    topo: TopologicalMap,
    inputs: ObjectEvalInputs,
    head: LinearHead,
    subset: list[int],
) -> float:
    """Mean l1 gap, per class and node, between a node's subset classification
    and the average subset classification of the frames it covered."""
    total, k = _object_err_tally(topo, inputs, head, subset)
    if k == 0:
        raise ValueError("no nodes with coverage")
    return total / (len(subset) * k)


def _object_err_tally(topo, inputs, head, subset) -> tuple[float, int]:
    total = 0.0
    k = 0
    for node in topo.nodes:
        frames = inputs.node_frames.get(node.id, [])
        if not frames:
            log.warning("node %d consolidated no frames; excluded from err_mean", node.id)
            continue
        o = subset_softmax(head_logits(head, node.c), subset)
        m = np.mean(inputs.subset_probs[frames], axis=0)
        total += float(np.sum(np.abs(o - m)))
        k += 1
    return total, k


@dataclass
class ObjectResult:
    top5_accuracy: float
    err_mean: float  # full method
    err_mean_no_vp: float  # persistence ablated
    n_maps: int
    seed: int

    def as_report(self) -> EvalReport:
        return EvalReport(
            protocol="objects",
            seed=self.seed,
            repetitions=self.n_maps,
            config={},
            metrics=[
                MetricRow("top5_accuracy", self.top5_accuracy, 0.0, 1),
                MetricRow("err_mean", self.err_mean, 0.0, 1),
                MetricRow("err_mean_no_vp", self.err_mean_no_vp, 0.0, 1),
            ],
        )


def run_object_protocol(
    streams: list[FeatureStream],
    params: Hyperparameters,
    head: LinearHead,
    subset: list[int],
    rng_seed: int = 0,
) -> ObjectResult:
    """One map per sequence; top-5 containment over all (frame, node) pairs
    and err_mean aggregated over the nodes of all maps, for the full method
    and the no-persistence ablation."""
    if not streams:
        raise ValueError("no streams")
    pair_hits = 0.0
    pair_total = 0
    tallies = {Variant.PM: [0.0, 0], Variant.PM_NO_VP: [0.0, 0]}
    for stream in streams:
        topo, coverage = build_map([stream], params, Variant.PM)
        inputs = object_eval_inputs(stream, coverage, head, subset)
        # Node positions, gates, and hence coverage depend only on positions
        # and u-vectors, which the persistence ablation does not change; the
        # per-frame inputs can be shared between the two builds.
        topo_no_vp, _ = build_map([stream], params, Variant.PM_NO_VP)
        for variant, variant_map in ((Variant.PM, topo), (Variant.PM_NO_VP, topo_no_vp)):
            total, k = _object_err_tally(variant_map, inputs, head, subset)
            tallies[variant][0] += total
            tallies[variant][1] += k
        for node_id, frames in inputs.node_frames.items():
            node_top5 = set(
                int(i) for i in topk_indices(head_logits(head, topo.nodes[node_id].c), 5)
            )
            pair_hits += sum(int(inputs.top1[f]) in node_top5 for f in frames)
            pair_total += len(frames)
    b = len(subset)
    return ObjectResult(
        top5_accuracy=pair_hits / pair_total,
        err_mean=tallies[Variant.PM][0] / (b * tallies[Variant.PM][1]),
        err_mean_no_vp=tallies[Variant.PM_NO_VP][0] / (b * tallies[Variant.PM_NO_VP][1]),
        n_maps=len(streams),
        seed=rng_seed,
    )


# -- place classification -----------------------------------------------------


def presented_labels(streams: list[FeatureStream]) -> np.ndarray:
    """Frame labels concatenated in presentation order."""
    return np.concatenate([s.labels for s in streams]) if streams else np.empty(0, np.int64)


def node_majority_labels(n_nodes: int, coverage: CoverageLog, frame_labels) -> np.ndarray:
    """Per-node majority vote over the labels of the frames it consolidated.

    Unlabeled frames are ignored; ties break to the lowest label id; nodes
    with no labeled coverage get -1.
    """
    frame_labels = np.asarray(frame_labels, dtype=np.int64)
    if len(coverage) != frame_labels.shape[0]:
        raise ValueError("coverage and labels must align")
    votes: dict[int, dict[int, int]] = {}
    for frame_idx, (_, node_ids) in enumerate(coverage):
        label = int(frame_labels[frame_idx])
        if label == UNLABELED:
            continue
        for node_id in node_ids:
            counts = votes.setdefault(node_id, {})
            counts[label] = counts.get(label, 0) + 1
    out = np.full(n_nodes, UNLABELED, dtype=np.int64)
    for node_id, counts in votes.items():
        best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
        out[node_id] = best[0]
    return out


def node_room_labels(topo: TopologicalMap, rooms: list[RoomSpec]) -> np.ndarray:
    """Ground-truth category per node from the room containing its position."""
    labels = np.empty(len(topo.nodes), dtype=np.int64)
    for node in topo.nodes:
        room = min(rooms, key=lambda r: r.distance_to(node.p))
        labels[node.id] = room.category
    return labels


@dataclass
class PlaceCvResult:
    """Per-fold accuracies for node classification (method) and the direct
    per-image baseline, sharing folds, training data, and seeds."""

    label_names: list[str]
    fold_overall: np.ndarray  # (n_folds,)
    fold_overall_images: np.ndarray
    fold_category: dict[int, list[float]]  # category id -> per-fold values
    fold_category_images: dict[int, list[float]]
    skipped_folds: list[int]
    seed: int

    def as_report(self) -> EvalReport:
        rows = [
            _mean_std_rows("overall", self.fold_overall),
            _mean_std_rows("overall_images", self.fold_overall_images),
        ]
        for cat in sorted(self.fold_category):
            rows.append(
                _mean_std_rows(f"category/{self.label_names[cat]}", self.fold_category[cat])
            )
        for cat in sorted(self.fold_category_images):
            rows.append(
                _mean_std_rows(
                    f"category_images/{self.label_names[cat]}",
                    self.fold_category_images[cat],
                )
            )
        return EvalReport(
            protocol="place-crossval",
            seed=self.seed,
            repetitions=len(self.fold_overall),
            config={"skipped_folds": self.skipped_folds},
            metrics=rows,
        )


def crossval_place(
    sequences: list[FeatureStream],
    mlp_config: TrainConfig,
    build_params: Hyperparameters,
    rooms: list[RoomSpec] | None = None,
    variant: Variant = Variant.PM,
) -> PlaceCvResult:
    """Sequence-as-fold cross-validation of place classification.

    Each fold holds one sequence out: the MLP trains on all labeled frames
    of the remaining sequences, a map is built from the held-out sequence,
    and every node's consolidated vector is classified. Node ground truth is
    the containing room when ``rooms`` is given (synthetic worlds), else the
    majority label of the frames the node consolidated. The IMAGES baseline
    classifies the held-out frames directly with the same trained model.
    """
    if len(sequences) < 2:
        raise ValueError("cross-validation needs at least 2 sequences")
    label_names = sequences[0].label_names
    overall, overall_images = [], []
    per_category: dict[int, list[float]] = {}
    per_category_images: dict[int, list[float]] = {}
    skipped = []
    for fold, held_out in enumerate(sequences):
        train_streams = [s for i, s in enumerate(sequences) if i != fold]
        train_x = np.vstack([s.features for s in train_streams])
        train_y = np.concatenate([s.labels for s in train_streams])
        labeled = train_y != UNLABELED
        train_x, train_y = train_x[labeled], train_y[labeled]
        held_labels = set(int(v) for v in held_out.labels if v != UNLABELED)
        if not held_labels <= set(int(v) for v in np.unique(train_y)):
            log.warning("fold %d skipped: held-out categories missing from training folds", fold)
            skipped.append(fold)
            continue
        config = dataclasses.replace(mlp_config, rng_seed=mlp_config.rng_seed + fold)
        model = mlp_train(train_x, train_y, label_names, config)

        topo, coverage = build_map([held_out], build_params, variant)
        if rooms is not None:
            truth = node_room_labels(topo, rooms)
        else:
            truth = node_majority_labels(len(topo.nodes), coverage, held_out.labels)
        known = truth != UNLABELED
        if not np.any(known):
            log.warning("fold %d skipped: no labeled node ground truth", fold)
            skipped.append(fold)
            continue
        pred = mlp_predict_batch(model, topo.feature_matrix("c"))
        _tally_fold(truth[known], pred[known], overall, per_category)

        frame_known = held_out.labels != UNLABELED
        frame_pred = mlp_predict_batch(model, np.asarray(held_out.features, dtype=np.float64))
        _tally_fold(
            held_out.labels[frame_known],
            frame_pred[frame_known],
            overall_images,
            per_category_images,
        )
    return PlaceCvResult(
        label_names=label_names,
        fold_overall=np.asarray(overall),
        fold_overall_images=np.asarray(overall_images),
        fold_category=per_category,
        fold_category_images=per_category_images,
        skipped_folds=skipped,
        seed=mlp_config.rng_seed,
    )


def _tally_fold(truth, pred, overall: list, per_category: dict) -> None:
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    overall.append(float(np.mean(pred == truth)))
    for cat in np.unique(truth):
        mask = truth == cat
        per_category.setdefault(int(cat), []).append(float(np.mean(pred[mask] == truth[mask])))


@dataclass
class OverTimeResult:
    """Accuracy matrix (repetitions x instants) of node classification after
    each mapped sequence completes."""

    accuracy: np.ndarray
    seed: int

    def as_report(self) -> EvalReport:
        rows = [
            _mean_std_rows(f"accuracy@instant{t + 1}", self.accuracy[:, t])
            for t in range(self.accuracy.shape[1])
        ]
        return EvalReport(
            protocol="place-over-time",
            seed=self.seed,
            repetitions=self.accuracy.shape[0],
            config={"instants": self.accuracy.shape[1]},
            metrics=rows,
        )


def eval_over_time(
    train_sequence: FeatureStream,
    map_sequences: list[FeatureStream],
    mlp_config: TrainConfig,
    build_params: Hyperparameters,
    repetitions: int = 10,
    rng_seed: int = 0,
    rooms: list[RoomSpec] | None = None,
    variant: Variant = Variant.PM,
) -> OverTimeResult:
    """Classify the growing map's nodes after each sequence completes.

    The MLP trains once on the training sequence; the map sequences feed one
    growing map in a reshuffled order per repetition. There are as many
    evaluation instants as map sequences.
    """
    if not map_sequences:
        raise ValueError("no map sequences")
    labeled = train_sequence.labels != UNLABELED
    model = mlp_train(
        np.asarray(train_sequence.features)[labeled],
        train_sequence.labels[labeled],
        train_sequence.label_names,
        mlp_config,
    )
    n_instants = len(map_sequences)
    accuracy = np.zeros((repetitions, n_instants))
    for rep in range(repetitions):
        order = np.random.default_rng([rng_seed, rep]).permutation(n_instants)
        topo = TopologicalMap(build_params, map_sequences[0].feature_dim, variant)
        coverage: CoverageLog = []
        labels_so_far: list[np.ndarray] = []
        for t, idx in enumerate(order):
            stream = map_sequences[int(idx)]
            extend_map(topo, [stream], coverage)
            labels_so_far.append(stream.labels)
            if rooms is not None:
                truth = node_room_labels(topo, rooms)
            else:
                truth = node_majority_labels(
                    len(topo.nodes), coverage, np.concatenate(labels_so_far)
                )
            known = truth != UNLABELED
            pred = mlp_predict_batch(model, topo.feature_matrix("c"))
            accuracy[rep, t] = float(np.mean(pred[known] == truth[known]))
    return OverTimeResult(accuracy=accuracy, seed=rng_seed)


# -- image localization ---------------------------------------------------------


@dataclass
class LocalizationResult:
    top1: float
    top5: float
    n_queries: int
    n_without_ground_truth: int
    variant: Variant
    replication: tuple[float, int]
    seed: int

    def as_report(self) -> EvalReport:
        return EvalReport(
            protocol="localization",
            seed=self.seed,
            repetitions=1,
            config={
                "variant": self.variant.value,
                "replicate_fraction": self.replication[0],
                "replicate_copies": self.replication[1],
                "n_queries": self.n_queries,
                "n_without_ground_truth": self.n_without_ground_truth,
            },
            metrics=[
                MetricRow("top1", self.top1, 0.0, self.n_queries),
                MetricRow("top5", self.top5, 0.0, self.n_queries),
            ],
        )


def eval_localization(
    build_sequences: list[FeatureStream],
    query_sequence: FeatureStream,
    build_params: Hyperparameters,
    replication: tuple[float, int] = (0.0, 0),
    variant: Variant = Variant.PM,
    rng_seed: int = 0,
    k: int = 5,
) -> LocalizationResult:
    """Build one map from the (replicated, shuffled) build sequences, then
    localize every query frame.

    Ground truth for a query frame is every node within lambda_ of its
    capture position; a frame with no such node counts as a miss. TOP-1
    scores the best-activated node, TOP-5 the best five.
    """
    if not build_sequences:
        raise ValueError("no build sequences")
    fraction, copies = replication
    seed_state = np.random.SeedSequence(rng_seed)
    ints = seed_state.generate_state(len(build_sequences) + 1)
    order = np.random.default_rng(int(ints[0])).permutation(len(build_sequences))
    prepared = [
        replicate_frames(build_sequences[int(idx)], fraction, copies, int(ints[i + 1]))
        for i, idx in enumerate(order)
    ]
    topo, _ = build_map(prepared, build_params, variant)
    index = LocalizationIndex(topo)
    node_pos = topo.node_positions()
    lambda_ = build_params.lambda_
    top1_hits = 0
    topk_hits = 0
    no_truth = 0
    queries = np.asarray(query_sequence.features, dtype=np.float64)
    for i in range(len(query_sequence)):
        d = np.sqrt(np.sum((node_pos - query_sequence.positions[i]) ** 2, axis=1))
        truth = set(int(j) for j in np.nonzero(d <= lambda_)[0])
        if not truth:
            no_truth += 1
            log.warning("query frame %s has no node within lambda", query_sequence.frame_ids[i])
            continue
        ranked = index.localize(queries[i], k)
        top1_hits += ranked[0].node_id in truth
        topk_hits += any(r.node_id in truth for r in ranked)
    n = len(query_sequence)
    return LocalizationResult(
        top1=top1_hits / n,
        top5=topk_hits / n,
        n_queries=n,
        n_without_ground_truth=no_truth,
        variant=variant,
        replication=(fraction, copies),
        seed=rng_seed,
    )
