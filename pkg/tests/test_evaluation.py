import math

import numpy as np
import pytest

from topomap.classifiers import LinearHead, TrainConfig
from topomap.dataset import UNLABELED, FeatureStream, generate_synthetic
from topomap.evaluation import (
    LhsRanges,
    crossval_place,
    eval_localization,
    eval_object_errmean,
    eval_object_top5,
    eval_over_time,
    eval_topology,
    lhs_sample,
    node_majority_labels,
    object_eval_inputs,
    run_object_protocol,
    run_topology_protocol,
    write_report,
)
from topomap.hyperparams import Hyperparameters, Variant
from topomap.map_builder import build_map
from worlds import cell_corridor_config, room_clusters_config

PARAMS = Hyperparameters(lambda_=0.9, alpha=0.1, tau=1.0, gamma=0.5, beta=0.5, s_slope=0.05)


def single_node_stream(features, position=(0.0, 0.0)):
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    return FeatureStream(
        feature_dim=features.shape[1],
        positions=np.tile(np.asarray(position, dtype=np.float64), (n, 1)),
        features=features.astype(np.float32),
        labels=np.zeros(n, dtype=np.int64),
        frame_ids=[f"f:{i:05d}" for i in range(n)],
        label_names=["only"],
        sequence_id="single",
    )


def exact_match_streams(seed=0, n_cells=10):
    """Noiseless spaced cells, each visited in its own one-frame sequence.

    Every node then holds its cluster center exactly (no persistence source
    at a sequence start), so queries that repeat the build frames match a
    node's consolidated vector verbatim. Returns (build_streams, query).
    """
    config = cell_corridor_config(
        n_cells=n_cells,
        feature_dim=12,
        seed=seed,
        position_noise=0.0,
        feature_std=0.0,
        n_sequences=1,
        cell_width=2.0,
        step_length=2.0,
        center_scale=3.0,
    )
    full = generate_synthetic(config)[0]
    slices = [
        FeatureStream(
            feature_dim=full.feature_dim,
            positions=full.positions[i : i + 1],
            features=full.features[i : i + 1],
            labels=full.labels[i : i + 1],
            frame_ids=[full.frame_ids[i]],
            label_names=full.label_names,
            sequence_id=f"cell-{i}",
        )
        for i in range(len(full))
    ]
    return slices, full


# -- Latin hypercube sampling ---------------------------------------------------


def test_lhs_single_sample_inside_ranges():
    ranges = LhsRanges()
    (sample,) = lhs_sample(ranges, 1, rng_seed=0)
    for name in ("alpha", "tau", "gamma", "beta", "s_slope"):
        low, high = getattr(ranges, name)
        assert low <= getattr(sample, name) <= high


def test_lhs_each_subinterval_occupied_once():
    n = 10
    ranges = LhsRanges()
    samples = lhs_sample(ranges, n, rng_seed=42)
    assert len(samples) == n
    for name in ("alpha", "tau", "gamma", "beta", "s_slope"):
        low, high = getattr(ranges, name)
        width = (high - low) / n
        cells = sorted(int((getattr(s, name) - low) / width) for s in samples)
        assert cells == list(range(n))


def test_lhs_alpha_deciles_of_default_range():
    samples = lhs_sample(LhsRanges(), 10, rng_seed=3)
    values = sorted(s.alpha for s in samples)
    for i, v in enumerate(values):
        assert 0.001 + i * 0.0099 <= v <= 0.001 + (i + 1) * 0.0099


def test_lhs_never_samples_lambda():
    samples = lhs_sample(LhsRanges(), 25, rng_seed=9, lambda_=0.9)
    assert all(s.lambda_ == 0.9 for s in samples)
    assert all(s.epsilon == 1e-7 for s in samples)


def test_lhs_deterministic():
    a = lhs_sample(LhsRanges(), 8, rng_seed=5)
    b = lhs_sample(LhsRanges(), 8, rng_seed=5)
    assert a == b


def test_lhs_ranges_validate():
    with pytest.raises(ValueError):
        LhsRanges(alpha=(0.5, 0.5))


# -- topology ---------------------------------------------------------------------


def test_topology_zero_when_nodes_cover_inputs():
    stream = single_node_stream(np.zeros((1, 4)))
    topo, _ = build_map([stream], PARAMS)
    mean_d, max_d = eval_topology(topo, stream.positions)
    assert (mean_d, max_d) == (0.0, 0.0)


def test_topology_matches_bruteforce_oracle():
    config = cell_corridor_config(seed=1, n_sequences=2)
    streams = generate_synthetic(config)
    topo, _ = build_map(streams, PARAMS)
    positions = np.vstack([s.positions for s in streams])
    mean_d, max_d = eval_topology(topo, positions)
    dists = []
    for s in positions:
        best = min(
            math.dist(tuple(s), tuple(node.p)) for node in topo.nodes
        )
        dists.append(best)
    assert mean_d == pytest.approx(float(np.mean(dists)), rel=1e-12)
    assert max_d == pytest.approx(float(np.max(dists)), rel=1e-12)
    assert 0.0 < mean_d < 0.9
    assert max_d <= 0.9


def test_topology_protocol_deterministic_and_bounded():
    config = cell_corridor_config(seed=2, n_sequences=3)
    streams = generate_synthetic(config)
    a = run_topology_protocol(streams, PARAMS, repetitions=3, rng_seed=7)
    b = run_topology_protocol(streams, PARAMS, repetitions=3, rng_seed=7)
    assert np.array_equal(a.mean_dists, b.mean_dists)
    assert np.array_equal(a.max_dists, b.max_dists)
    assert np.all(a.max_dists <= PARAMS.lambda_)
    report = a.as_report()
    assert {row.name for row in report.metrics} == {"mean_dist", "max_dist"}


# -- object classification -----------------------------------------------------------


def head_for_dim(dim, out_dim=6, seed=0):
    rng = np.random.default_rng(seed)
    return LinearHead(
        rng.normal(0, 0.4, size=(out_dim, dim)),
        rng.normal(0, 0.1, size=out_dim),
        [f"obj-{i}" for i in range(out_dim)],
    )


def test_object_err_exactly_zero_for_single_frame():
    stream = single_node_stream(np.array([[1.0, -2.0, 0.5, 3.0]]))
    topo, coverage = build_map([stream], PARAMS)
    head = head_for_dim(4)
    subset = [0, 1, 2]
    inputs = object_eval_inputs(stream, coverage, head, subset)
    assert eval_object_errmean(topo, inputs, head, subset) == 0.0
    assert eval_object_top5(topo, inputs, head) == 1.0


def test_object_top5_all_identical_frames():
    features = np.tile(np.array([[0.3, 1.2, -0.7, 2.0]]), (12, 1))
    stream = single_node_stream(features)
    topo, coverage = build_map([stream], PARAMS)
    head = head_for_dim(4)
    inputs = object_eval_inputs(stream, coverage, head, [0, 1])
    assert eval_object_top5(topo, inputs, head) == 1.0


def test_object_errmean_matches_hand_computation():
    # Two frames, one node, habituation off: the node consolidates both.
    v1 = np.array([1.0, 0.0])
    v2 = np.array([0.0, 2.0])
    params = PARAMS.replace(tau=0.0, alpha=0.25)
    stream = single_node_stream(np.vstack([v1, v2]))
    topo, coverage = build_map([stream], params)
    w = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, -0.5]])
    b = np.zeros(3)
    head = LinearHead(w, b, ["a", "b", "c"])
    subset = [0, 1]
    inputs = object_eval_inputs(stream, coverage, head, subset)
    got = eval_object_errmean(topo, inputs, head, subset)

    def softmax2(z0, z1):
        m = max(z0, z1)
        e0, e1 = math.exp(z0 - m), math.exp(z1 - m)
        return e0 / (e0 + e1), e1 / (e0 + e1)

    c = v1 + 0.25 * (v2 - v1)  # consolidation of the second frame
    o = softmax2(w[0] @ c, w[1] @ c)
    m1 = softmax2(w[0] @ v1, w[1] @ v1)
    m2 = softmax2(w[0] @ v2, w[1] @ v2)
    m = ((m1[0] + m2[0]) / 2, (m1[1] + m2[1]) / 2)
    expected = (abs(o[0] - m[0]) + abs(o[1] - m[1])) / (2 * 1)
    assert got == pytest.approx(expected, rel=1e-12)


def test_object_protocol_persistence_helps_in_majority_of_seeds():
    wins = 0
    seeds = range(9)
    for seed in seeds:
        config = room_clusters_config(
            n_rooms=3, seed=seed, n_sequences=3, feature_dim=16, separation=8.0, feature_std=1.5
        )
        streams = generate_synthetic(config)
        head = head_for_dim(16, out_dim=30, seed=1000 + seed)
        result = run_object_protocol(streams, PARAMS, head, list(range(13)), seed)
        wins += result.err_mean <= result.err_mean_no_vp
    assert wins > len(seeds) // 2


def test_object_inputs_requires_aligned_coverage():
    stream = single_node_stream(np.zeros((3, 2)))
    head = head_for_dim(2)
    with pytest.raises(ValueError):
        object_eval_inputs(stream, [("x", (0,))], head, [0, 1])


# -- place classification --------------------------------------------------------------


def test_node_majority_labels_tie_and_unlabeled():
    coverage = [("a", (0,)), ("b", (0,)), ("c", (0,)), ("d", (1,)), ("e", (2,))]
    labels = [1, 0, 0, 1, UNLABELED]
    out = node_majority_labels(3, coverage, labels)
    assert out[0] == 0  # two votes to one
    assert out[1] == 1
    assert out[2] == UNLABELED  # only unlabeled coverage
    tie = node_majority_labels(1, [("a", (0,)), ("b", (0,))], [1, 0])
    assert tie[0] == 0  # tie breaks to the lowest label id


@pytest.mark.parametrize("use_rooms", [True, False])
def test_crossval_separable_rooms(use_rooms):
    config = room_clusters_config(n_rooms=2, seed=0, n_sequences=3, separation=10.0)
    streams = generate_synthetic(config)
    result = crossval_place(
        streams,
        TrainConfig(epochs=150, rng_seed=0),
        PARAMS,
        rooms=config.rooms if use_rooms else None,
    )
    assert len(result.fold_overall) == 3
    assert float(np.mean(result.fold_overall)) >= 0.95
    assert len(result.fold_overall_images) == len(result.fold_overall)  # paired folds
    report = result.as_report()
    names = {row.name for row in report.metrics}
    assert "overall" in names and "overall_images" in names
    assert any(name.startswith("category/") for name in names)


def test_crossval_skips_fold_with_unknown_category(caplog):
    config = room_clusters_config(n_rooms=2, seed=1, n_sequences=3, separation=10.0)
    streams = generate_synthetic(config)
    # Hold-out sequence 0 sees a category the others never carry.
    streams[1].labels[:] = 0
    streams[2].labels[:] = 0
    result = crossval_place(streams, TrainConfig(epochs=30, rng_seed=0), PARAMS)
    assert 0 in result.skipped_folds
    assert len(result.fold_overall) == 2


def test_crossval_needs_two_sequences():
    config = room_clusters_config(seed=2, n_sequences=1)
    streams = generate_synthetic(config)
    with pytest.raises(ValueError):
        crossval_place(streams, TrainConfig(epochs=10), PARAMS)


def test_over_time_shapes_and_trend():
    config = room_clusters_config(n_rooms=2, seed=3, n_sequences=6)
    streams = generate_synthetic(config)
    result = eval_over_time(
        streams[0], streams[1:], TrainConfig(epochs=150, rng_seed=0), PARAMS,
        repetitions=5, rng_seed=0,
    )
    assert result.accuracy.shape == (5, 5)
    mean = result.accuracy.mean(axis=0)
    assert mean[-1] >= mean[0] - 0.02
    report = result.as_report()
    assert [row.name for row in report.metrics] == [
        f"accuracy@instant{t}" for t in range(1, 6)
    ]


def test_over_time_std_tends_to_shrink():
    shrunk = 0
    for seed in range(3):
        config = room_clusters_config(n_rooms=2, seed=100 + seed, n_sequences=6)
        streams = generate_synthetic(config)
        result = eval_over_time(
            streams[0], streams[1:], TrainConfig(epochs=120, rng_seed=seed), PARAMS,
            repetitions=8, rng_seed=seed,
        )
        std = result.accuracy.std(axis=0)
        shrunk += std[-1] <= std[0]
    assert shrunk >= 2  # majority of configurations


# -- localization ------------------------------------------------------------------------


def test_localization_exact_match_is_perfect():
    build, query = exact_match_streams(seed=4)
    result = eval_localization(build, query, PARAMS, (0.0, 0), Variant.PM, rng_seed=0)
    assert result.top1 == 1.0
    assert result.top5 == 1.0
    assert result.n_without_ground_truth == 0


def test_localization_top1_never_exceeds_top5():
    for seed in range(3):
        config = cell_corridor_config(seed=seed, n_sequences=3, feature_dim=16)
        streams = generate_synthetic(config)
        result = eval_localization(streams[:2], streams[2], PARAMS, (0.1, 5), Variant.PM, seed)
        assert result.top1 <= result.top5


def test_localization_counts_uncovered_queries_as_misses():
    build, query = exact_match_streams(seed=5)
    far = FeatureStream(
        feature_dim=query.feature_dim,
        positions=np.vstack([query.positions, [[500.0, 500.0]]]),
        features=np.vstack([query.features, np.zeros((1, query.feature_dim), np.float32)]),
        labels=np.concatenate([query.labels, [UNLABELED]]),
        frame_ids=query.frame_ids + ["far:00000"],
        label_names=query.label_names,
        sequence_id="far",
    )
    result = eval_localization(build, far, PARAMS, (0.0, 0), Variant.PM, rng_seed=0)
    assert result.n_without_ground_truth == 1
    assert result.top1 == pytest.approx(len(query) / (len(query) + 1))


def test_localization_deterministic():
    config = cell_corridor_config(seed=6, n_sequences=3, feature_dim=16)
    streams = generate_synthetic(config)
    a = eval_localization(streams[:2], streams[2], PARAMS, (0.1, 10), Variant.PM, 3)
    b = eval_localization(streams[:2], streams[2], PARAMS, (0.1, 10), Variant.PM, 3)
    assert (a.top1, a.top5) == (b.top1, b.top5)


def test_localization_habituation_stability_smoke():
    # Full statistics live in the acceptance suite; spot-check 3 seeds here.
    for seed in range(3):
        config = cell_corridor_config(seed=seed, n_sequences=4, feature_dim=24)
        streams = generate_synthetic(config)
        build, query = streams[:3], streams[3]
        pm0 = eval_localization(build, query, PARAMS, (0.1, 0), Variant.PM, seed)
        pm40 = eval_localization(build, query, PARAMS, (0.1, 40), Variant.PM, seed)
        assert abs(pm40.top1 - pm0.top1) <= 0.05


# -- report files ----------------------------------------------------------------------


def test_write_report_is_deterministic_text(tmp_path):
    config = cell_corridor_config(seed=7, n_sequences=2)
    streams = generate_synthetic(config)
    result = run_topology_protocol(streams, PARAMS, repetitions=2, rng_seed=1)
    write_report(result.as_report(), tmp_path / "a.tsv")
    write_report(result.as_report(), tmp_path / "b.tsv")
    a = (tmp_path / "a.tsv").read_text()
    assert a == (tmp_path / "b.tsv").read_text()
    lines = a.splitlines()
    assert lines[0].startswith("# topomap-report")
    assert "metric\tmean\tstd\tn" in lines
    assert any(line.startswith("max_dist\t") for line in lines)
