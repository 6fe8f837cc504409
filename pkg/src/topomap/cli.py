"""Command-line surface: build maps, query them, train models, run protocols.

Every command exits 0 on success; failures print one machine-parsable line
``error[<category>]: <message>`` to stderr and exit nonzero. Flags can also
be supplied through a versioned JSON run-config document (--params FILE);
explicit flags win. Logs go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import classifiers, dataset, evaluation, map_store, plotting
from .classifiers import TrainConfig
from .errors import ArtifactError, ConfigError, EmptyInputError
from .hyperparams import Hyperparameters, Variant
from .localization import LocalizationIndex
from .map_builder import TopologicalMap

log = logging.getLogger("topomap")

RUNCONFIG_VERSION = 1

# key -> type check for the run-config document
_RUNCONFIG_KEYS = {
    "version": int,
    "hyperparameters": dict,
    "seed": int,
    "variant": str,
    "protocol": str,
    "streams": list,
    "query_stream": str,
    "train_stream": str,
    "map": str,
    "head": str,
    "model": str,
    "subset": list,
    "out": str,
    "top_k": int,
    "replicate": str,
    "repetitions": int,
    "epochs": int,
    "learning_rate": float,
    "hidden_units": int,
    "lhs_ranges": dict,
}


def load_runconfig(path: str | None) -> dict:
    """Read and schema-check the run-config document (empty dict if none)."""
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    if data.get("version") != RUNCONFIG_VERSION:
        raise ConfigError(
            f"config version must be {RUNCONFIG_VERSION}, got {data.get('version')!r}"
        )
    for key, value in data.items():
        checker = _RUNCONFIG_KEYS.get(key)
        if checker is None:
            raise ConfigError(f"unknown config key {key!r}")
        if checker is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"config key {key!r} must be a number")
        elif not isinstance(value, checker):
            raise ConfigError(f"config key {key!r} must be {checker.__name__}")
    return data


def _resolve_params(config: dict, args) -> Hyperparameters:
    params = Hyperparameters.from_dict(config.get("hyperparameters", {}))
    overrides = {}
    for field_name, flag in (
        ("lambda_", "lambda_"),
        ("alpha", "alpha"),
        ("tau", "tau"),
        ("gamma", "gamma"),
        ("beta", "beta"),
        ("s_slope", "slope"),
        ("epsilon", "epsilon"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field_name] = value
    return params.replace(**overrides) if overrides else params


def _resolve(args, config: dict, key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key, default)


def _resolve_variant(args, config: dict) -> Variant:
    name = _resolve(args, config, "variant", Variant.PM.value)
    try:
        return Variant(name)
    except ValueError as exc:
        raise ConfigError(f"unknown variant {name!r}") from exc


def _resolve_streams(args, config: dict) -> list[dataset.FeatureStream]:
    paths = list(getattr(args, "streams", []) or []) or list(config.get("streams", []))
    return [dataset.load_stream_any(p) for p in paths]


def _parse_replicate(text: str) -> tuple[float, int]:
    try:
        frac, copies = text.split(":")
        return float(frac), int(copies)
    except ValueError as exc:
        raise ConfigError(f"--replicate wants FRACTION:COPIES, got {text!r}") from exc


def _load_subset(args, config: dict, head: classifiers.LinearHead) -> list[int]:
    names: tuple[str, ...] | list[str]
    if getattr(args, "subset", None):
        names = [
            line.strip()
            for line in Path(args.subset).read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.startswith("#")
        ]
    elif config.get("subset"):
        names = [str(s) for s in config["subset"]]
    else:
        names = classifiers.DEFAULT_OBJECT_SUBSET
    return classifiers.resolve_subset(head.class_names, names)


def _write_rows(out: str | None, header: list[str], rows) -> None:
    lines = ["\t".join(header)]
    lines.extend("\t".join(str(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# -- commands -------------------------------------------------------------


def cmd_build(args) -> int:
    config = load_runconfig(args.params)
    params = _resolve_params(config, args)
    variant = _resolve_variant(args, config)
    streams = _resolve_streams(args, config)
    out = _resolve(args, config, "out")
    if out is None:
        raise ConfigError("build needs --out")
    if not streams or sum(len(s) for s in streams) == 0:
        raise EmptyInputError("empty input")
    topo = TopologicalMap(params, streams[0].feature_dim, variant)
    coverage = []
    step_rows = []
    for stream in streams:
        topo.begin_sequence()
        features = np.asarray(stream.features, dtype=np.float64)
        for i in range(len(stream)):
            outcome = topo.process_observation(stream.positions[i], features[i])
            coverage.append((stream.frame_ids[i], outcome.consolidating_ids))
            if args.log_steps:
                step_rows.append(
                    [
                        stream.frame_ids[i],
                        outcome.winner_id,
                        int(outcome.inserted),
                        ",".join(map(str, outcome.consolidating_ids)),
                        ",".join(map(str, outcome.updated_ids)),
                        "-" if outcome.new_edge is None else f"{outcome.new_edge[0]}-{outcome.new_edge[1]}",
                    ]
                )
    map_store.save_map(topo, coverage, out)
    if args.log_steps:
        _write_rows(
            args.log_steps,
            ["frame_id", "winner", "inserted", "consolidating", "updated", "new_edge"],
            step_rows,
        )
    log.info("built map with %d nodes, %d edges -> %s", len(topo), len(topo.edges), out)
    return 0


def cmd_localize(args) -> int:
    config = load_runconfig(args.params)
    topo, _ = map_store.load_map(_resolve(args, config, "map"))
    query = dataset.load_stream_any(_resolve(args, config, "query_stream"))
    k = int(_resolve(args, config, "top_k", 5))
    index = LocalizationIndex(topo)
    rows = []
    features = np.asarray(query.features, dtype=np.float64)
    for i in range(len(query)):
        for loc in index.localize(features[i], k):
            rows.append([query.frame_ids[i], loc.rank, loc.node_id, repr(loc.activation)])
    _write_rows(_resolve(args, config, "out"), ["frame_id", "rank", "node_id", "activation"], rows)
    return 0


def cmd_classify_objects(args) -> int:
    config = load_runconfig(args.params)
    topo, _ = map_store.load_map(_resolve(args, config, "map"))
    head = classifiers.load_head(_resolve(args, config, "head"))
    if topo.feature_dim != head.in_dim:
        raise ConfigError(f"map dimension {topo.feature_dim} != head in_dim {head.in_dim}")
    subset = _load_subset(args, config, head)
    k = int(_resolve(args, config, "top_k", 5))
    rows = []
    for node in topo.nodes:
        logits = classifiers.head_logits(head, node.c)
        for rank, idx in enumerate(classifiers.topk_indices(logits, k), start=1):
            rows.append([node.id, "top", rank, head.class_names[idx], repr(float(logits[idx]))])
        probs = classifiers.subset_softmax(logits, subset)
        for idx, p in zip(subset, probs):
            rows.append([node.id, "subset", "-", head.class_names[idx], repr(float(p))])
    _write_rows(
        _resolve(args, config, "out"), ["node_id", "kind", "rank", "class", "value"], rows
    )
    return 0


def cmd_classify_place(args) -> int:
    config = load_runconfig(args.params)
    topo, _ = map_store.load_map(_resolve(args, config, "map"))
    model = classifiers.load_mlp(_resolve(args, config, "model"))
    if topo.feature_dim != model.in_dim:
        raise ConfigError(f"map dimension {topo.feature_dim} != model in_dim {model.in_dim}")
    rows = []
    for node in topo.nodes:
        label, probs = classifiers.mlp_predict(model, node.c)
        rows.append([node.id, label, repr(float(np.max(probs)))])
    _write_rows(_resolve(args, config, "out"), ["node_id", "label", "probability"], rows)
    return 0


def cmd_train_mlp(args) -> int:
    config = load_runconfig(args.params)
    streams = _resolve_streams(args, config)
    out = _resolve(args, config, "out")
    if out is None:
        raise ConfigError("train-mlp needs --out")
    if not streams:
        raise EmptyInputError("empty input")
    label_names = streams[0].label_names
    for s in streams:
        if s.label_names != label_names:
            raise ConfigError("streams disagree on label names")
    x = np.vstack([s.features for s in streams])
    y = np.concatenate([s.labels for s in streams])
    labeled = y != dataset.UNLABELED
    if not np.any(labeled):
        raise EmptyInputError("no labeled frames")
    train_config = TrainConfig(
        epochs=int(_resolve(args, config, "epochs", 200)),
        learning_rate=float(_resolve(args, config, "learning_rate", 1e-3)),
        rng_seed=int(_resolve(args, config, "seed", 0)),
        hidden_units=int(_resolve(args, config, "hidden_units", 20)),
    )
    model = classifiers.mlp_train(x[labeled], y[labeled], label_names, train_config)
    classifiers.save_mlp(model, out)
    log.info("trained MLP on %d frames -> %s", int(np.sum(labeled)), out)
    return 0


def cmd_synth(args) -> int:
    synth_config = dataset.synth_config_from_json(
        json.loads(Path(args.config).read_text(encoding="utf-8"))
    )
    if args.seed is not None:
        synth_config.rng_seed = args.seed
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for stream in dataset.generate_synthetic(synth_config):
        path = out_dir / stream.sequence_id
        dataset.save_stream(stream, path)
        print(path)
    return 0


PROTOCOLS = ("topology", "objects", "place-crossval", "place-over-time", "localization")


def cmd_eval(args) -> int:
    config = load_runconfig(args.params)
    params = _resolve_params(config, args)
    variant = _resolve_variant(args, config)
    seed = int(_resolve(args, config, "seed", 0))
    repetitions = int(_resolve(args, config, "repetitions", 10))
    out = Path(_resolve(args, config, "out", "report.tsv"))
    streams = _resolve_streams(args, config)
    protocol = _resolve(args, config, "protocol")
    if protocol not in PROTOCOLS:
        raise ConfigError(f"protocol must be one of {', '.join(PROTOCOLS)}; got {protocol!r}")

    if protocol == "topology":
        if not streams:
            raise EmptyInputError("empty input")
        result = evaluation.run_topology_protocol(streams, params, repetitions, seed, variant)
        report = result.as_report()
        all_positions = np.vstack([s.positions for s in streams])
        plotting.plot_map(
            result.last_map,
            out.with_name(out.stem + "-map.svg"),
            input_positions=all_positions,
            title="topology (last repetition)",
        )
    elif protocol == "objects":
        head = classifiers.load_head(_resolve(args, config, "head"))
        subset = _load_subset(args, config, head)
        result = evaluation.run_object_protocol(streams, params, head, subset, seed)
        report = result.as_report()
    elif protocol == "place-crossval":
        mlp_config = _train_config(args, config, seed)
        result = evaluation.crossval_place(streams, mlp_config, params, variant=variant)
        report = result.as_report()
    elif protocol == "place-over-time":
        train_stream = dataset.load_stream_any(_resolve(args, config, "train_stream"))
        mlp_config = _train_config(args, config, seed)
        result = evaluation.eval_over_time(
            train_stream, streams, mlp_config, params, repetitions, seed, variant=variant
        )
        report = result.as_report()
    elif protocol == "localization":
        query = dataset.load_stream_any(_resolve(args, config, "query_stream"))
        replicate = _parse_replicate(_resolve(args, config, "replicate", "0.0:0"))
        result = evaluation.eval_localization(
            streams, query, params, replicate, variant, seed, k=int(_resolve(args, config, "top_k", 5))
        )
        report = result.as_report()

    evaluation.write_report(report, out)
    plotting.render_report_figure(report, out.with_suffix(".svg"))
    log.info("report -> %s", out)
    return 0


def _train_config(args, config, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=int(_resolve(args, config, "epochs", 200)),
        learning_rate=float(_resolve(args, config, "learning_rate", 1e-3)),
        rng_seed=seed,
        hidden_units=int(_resolve(args, config, "hidden_units", 20)),
    )


def _resolve_lhs_ranges(args, config: dict) -> evaluation.LhsRanges:
    """Default ranges, overridden per hyperparameter by file or config."""
    overrides: dict = {}
    if getattr(args, "ranges", None):
        overrides = json.loads(Path(args.ranges).read_text(encoding="utf-8"))
    elif config.get("lhs_ranges"):
        overrides = config["lhs_ranges"]
    known = {"alpha", "tau", "gamma", "beta", "slope"}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown range keys: {sorted(unknown)}")
    kwargs = {
        ("s_slope" if key == "slope" else key): (float(pair[0]), float(pair[1]))
        for key, pair in overrides.items()
    }
    return evaluation.LhsRanges(**kwargs)


def cmd_lhs(args) -> int:
    config = load_runconfig(args.params)
    seed = int(_resolve(args, config, "seed", 0))
    lambda_ = args.lambda_ if args.lambda_ is not None else 0.9
    ranges = _resolve_lhs_ranges(args, config)
    samples = evaluation.lhs_sample(ranges, args.n, seed, lambda_=lambda_)
    rows = [
        [i, repr(p.alpha), repr(p.tau), repr(p.gamma), repr(p.beta), repr(p.s_slope)]
        for i, p in enumerate(samples)
    ]
    _write_rows(_resolve(args, config, "out"), ["sample", "alpha", "tau", "gamma", "beta", "slope"], rows)
    return 0


def cmd_plot(args) -> int:
    config = load_runconfig(args.params)
    topo, _ = map_store.load_map(_resolve(args, config, "map"))
    out = _resolve(args, config, "out")
    if out is None:
        raise ConfigError("plot needs --out")
    node_labels = None
    model_path = _resolve(args, config, "model")
    if model_path:
        model = classifiers.load_mlp(model_path)
        node_labels = {
            node.id: classifiers.mlp_predict(model, node.c)[0] for node in topo.nodes
        }
    input_positions = None
    streams = _resolve_streams(args, config)
    if streams:
        input_positions = np.vstack([s.positions for s in streams])
    plotting.plot_map(topo, out, node_labels=node_labels, input_positions=input_positions)
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--params", metavar="FILE", help="run-config JSON document")
    shared.add_argument("--seed", type=int, help="seed for all randomness")
    shared.add_argument("--out", help="output path ('-' for stdout where tabular)")

    hyper = argparse.ArgumentParser(add_help=False)
    hyper.add_argument("--lambda", dest="lambda_", type=float, help="spatial threshold [m]")
    hyper.add_argument("--alpha", type=float, help="feature learning rate")
    hyper.add_argument("--tau", type=float, help="habituation threshold")
    hyper.add_argument("--gamma", type=float, help="persistence rate")
    hyper.add_argument("--beta", type=float, help="distance moving-average rate")
    hyper.add_argument("--slope", type=float, help="relevance sigmoid slope")
    hyper.add_argument("--epsilon", type=float, help="activation stabilizer")
    hyper.add_argument(
        "--variant", choices=[v.value for v in Variant], help="method variant/ablation"
    )

    parser = argparse.ArgumentParser(
        prog="topomap",
        description="Topological maps with consolidated visual features.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[shared, hyper], help="build a map from streams")
    p.add_argument("streams", nargs="*", help="stream artifacts or text tables")
    p.add_argument("--log-steps", metavar="FILE", help="write per-observation outcomes")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("localize", parents=[shared], help="rank nodes for query frames")
    p.add_argument("--map", dest="map")
    p.add_argument("--query-stream", dest="query_stream")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("classify-objects", parents=[shared], help="object outputs per node")
    p.add_argument("--map", dest="map")
    p.add_argument("--head", dest="head")
    p.add_argument("--subset", metavar="FILE", help="object names, one per line")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.set_defaults(func=cmd_classify_objects)

    p = sub.add_parser("classify-place", parents=[shared], help="place label per node")
    p.add_argument("--map", dest="map")
    p.add_argument("--model", dest="model")
    p.set_defaults(func=cmd_classify_place)

    p = sub.add_parser("train-mlp", parents=[shared], help="train the place MLP")
    p.add_argument("streams", nargs="*")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--hidden-units", dest="hidden_units", type=int)
    p.set_defaults(func=cmd_train_mlp)

    p = sub.add_parser("synth", parents=[shared], help="generate synthetic streams")
    p.add_argument("--config", required=True, metavar="FILE")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", parents=[shared, hyper], help="run an experiment protocol")
    p.add_argument("--protocol", choices=list(PROTOCOLS),
                   help="also settable via the config document")
    p.add_argument("streams", nargs="*")
    p.add_argument("--query-stream", dest="query_stream")
    p.add_argument("--train-stream", dest="train_stream")
    p.add_argument("--head", dest="head")
    p.add_argument("--subset", metavar="FILE")
    p.add_argument("--replicate", metavar="FRACTION:COPIES")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("lhs", parents=[shared], help="Latin hypercube hyperparameter sets")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--ranges", metavar="FILE",
                   help='JSON range overrides, e.g. {"alpha": [0.001, 0.1]}')
    p.set_defaults(func=cmd_lhs)

    p = sub.add_parser("plot", parents=[shared], help="render a map to SVG")
    p.add_argument("--map", dest="map")
    p.add_argument("--model", dest="model", help="MLP for class colors")
    p.add_argument("streams", nargs="*", help="streams drawn as background positions")
    p.set_defaults(func=cmd_plot)
    return parser


def _error_category(exc: BaseException) -> str:
    category = getattr(exc, "category", None)
    if category:
        return category
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError)):
        return "io"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (ValueError, KeyError)):
        return "usage"
    return "internal"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ArtifactError, ConfigError, EmptyInputError, ValueError, KeyError, OSError) as exc:
        print(f"error[{_error_category(exc)}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
