"""Semantic classification of consolidated feature vectors.

Two classifiers: an imported linear head (never trained here) whose logits
feed top-k object labels and a subset softmax, and a small from-scratch MLP
(one ReLU hidden layer) trained full-batch with Adam on cross-entropy for
place categories.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .artifact_io import read_artifact, write_artifact
from .errors import DimensionMismatchError

# Object classes scored by the subset softmax when no explicit list is given.
# Each entry must resolve against the head's class vocabulary (exact class
# string or one of its comma-separated synonyms).
DEFAULT_OBJECT_SUBSET = (
    "washbasin",
    "soap dispenser",
    "toilet seat",
    "photocopier",
    "monitor",
    "desktop computer",
    "desk",
    "dining table",
    "barber chair",
    "microwave oven",
    "stove",
    "dishwasher",
    "toaster",
)


@dataclass
class LinearHead:
    """An imported linear classification layer: logits = W @ x + b."""

    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    class_names: list[str]

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        out_dim, _ = self.weights.shape
        if self.bias.shape != (out_dim,):
            raise ValueError(f"bias shape {self.bias.shape} != ({out_dim},)")
        if len(self.class_names) != out_dim:
            raise ValueError(f"{len(self.class_names)} class names for {out_dim} outputs")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


def head_logits(head: LinearHead, x) -> np.ndarray:
    """Raw logits of the head for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (head.in_dim,):
        raise ValueError(f"feature dimension {x.shape} != ({head.in_dim},)")
    return head.weights @ x + head.bias


def topk_indices(logits, k: int) -> np.ndarray:
    """Indices of the k largest logits, largest first; ties to lowest index."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    logits = np.asarray(logits, dtype=np.float64)
    order = np.argsort(-logits, kind="stable")
    return order[: min(k, logits.shape[0])]


def topk_labels(logits, k: int, class_names: list[str]) -> list[str]:
    """Names of the k largest logits, ranked."""
    return [class_names[i] for i in topk_indices(logits, k)]


def subset_softmax(logits, subset) -> np.ndarray:
    """Softmax over the selected logit indices only (max-stabilized)."""
    logits = np.asarray(logits, dtype=np.float64)
    subset = np.asarray(subset, dtype=np.int64)
    if subset.size == 0:
        raise ValueError("subset must be nonempty")
    if np.any(subset < 0) or np.any(subset >= logits.shape[0]):
        raise ValueError("subset index out of range")
    z = logits[subset]
    z = z - np.max(z)
    e = np.exp(z)
    return e / np.sum(e)


# Alternate spellings of the same ImageNet class across vocabulary variants
# (some vocabularies keep the full WordNet synonym list, others only the
# first term).
_CLASS_NAME_ALIASES = {
    "microwave oven": ("microwave",),
    "microwave": ("microwave oven",),
}


def resolve_subset(class_names: list[str], wanted=DEFAULT_OBJECT_SUBSET) -> list[int]:
    """Map object names onto head class indices.

    A wanted name matches a class whose full name equals it, that lists it
    among its comma-separated synonyms (ImageNet class strings bundle
    synonyms that way), or that equals a known alternate spelling. Raises
    ValueError naming anything unresolved.
    """
    lookup: dict[str, int] = {}
    for idx, name in enumerate(class_names):
        for candidate in [name] + [part.strip() for part in name.split(",")]:
            lookup.setdefault(candidate.lower(), idx)
    indices = []
    missing = []
    for name in wanted:
        candidates = (name.lower(), *_CLASS_NAME_ALIASES.get(name.lower(), ()))
        idx = next((lookup[c] for c in candidates if c in lookup), None)
        if idx is None:
            missing.append(name)
        else:
            indices.append(idx)
    if missing:
        raise ValueError(f"object classes not in head vocabulary: {missing}")
    return indices


@dataclass(frozen=True)
class TrainConfig:
    """Training knobs for the place MLP; epochs is the experiment-level knob."""

    epochs: int = 200
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rng_seed: int = 0
    hidden_units: int = 20

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")


@dataclass
class MlpModel:
    """One-hidden-layer ReLU MLP with a softmax output."""

    w_hidden: np.ndarray  # (hidden, in_dim)
    b_hidden: np.ndarray  # (hidden,)
    w_out: np.ndarray  # (n_classes, hidden)
    b_out: np.ndarray  # (n_classes,)
    class_names: list[str]
    train_loss: list[float] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("w_hidden", "b_hidden", "w_out", "b_out"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            setattr(self, name, arr)
        if self.w_out.shape[0] != len(self.class_names):
            raise ValueError("output rows must match class names")

    @property
    def in_dim(self) -> int:
        return self.w_hidden.shape[1]


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=1, keepdims=True)


def _forward(model_params, x: np.ndarray):
    w1, b1, w2, b2 = model_params
    z1 = x @ w1.T + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w2.T + b2
    return z1, a1, z2


def mlp_loss_and_grads(model_params, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its gradients.

    x is (n, in_dim), y is (n,) integer labels. Returns (loss, grads) with
    grads ordered like model_params.
    """
    w1, b1, w2, b2 = model_params
    n = x.shape[0]
    z1, a1, z2 = _forward(model_params, x)
    probs = _softmax_rows(z2)
    eps_floor = np.finfo(np.float64).tiny
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(n), y], eps_floor))))
    dz2 = probs.copy()
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    dw2 = dz2.T @ a1
    db2 = np.sum(dz2, axis=0)
    da1 = dz2 @ w2
    dz1 = da1 * (z1 > 0.0)
    dw1 = dz1.T @ x
    db1 = np.sum(dz1, axis=0)
    return loss, (dw1, db1, dw2, db2)


def _glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def mlp_train(features, labels, class_names: list[str], config: TrainConfig) -> MlpModel:
    """Train the place MLP full-batch with Adam; deterministic per seed.

    Every example is used in every epoch; one epoch is exactly one Adam step
    per parameter. A single-class label set trains but warns, since the
    resulting model is degenerate.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("features must be a nonempty (n, dim) array")
    if y.shape != (x.shape[0],):
        raise ValueError("labels must align with features")
    if np.any(y < 0) or np.any(y >= len(class_names)):
        raise ValueError("label id out of range")
    present = np.unique(y)
    if present.size < 2:
        warnings.warn("training labels contain a single class; model will be degenerate")

    rng = np.random.default_rng(config.rng_seed)
    hidden = config.hidden_units
    params = [
        _glorot_uniform(rng, hidden, x.shape[1]),
        np.zeros(hidden),
        _glorot_uniform(rng, len(class_names), hidden),
        np.zeros(len(class_names)),
    ]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2 = config.adam_beta1, config.adam_beta2
    losses = []
    for step in range(1, config.epochs + 1):
        loss, grads = mlp_loss_and_grads(params, x, y)
        losses.append(loss)
        for i, g in enumerate(grads):
            m[i] = b1 * m[i] + (1.0 - b1) * g
            v[i] = b2 * v[i] + (1.0 - b2) * g * g
            m_hat = m[i] / (1.0 - b1**step)
            v_hat = v[i] / (1.0 - b2**step)
            params[i] = params[i] - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return MlpModel(
        w_hidden=params[0],
        b_hidden=params[1],
        w_out=params[2],
        b_out=params[3],
        class_names=list(class_names),
        train_loss=losses,
    )


def mlp_predict(model: MlpModel, x) -> tuple[str, np.ndarray]:
    """Predicted class name and the full probability vector for one input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.in_dim,):
        raise ValueError(f"feature dimension {x.shape} != ({model.in_dim},)")
    _, _, z2 = _forward((model.w_hidden, model.b_hidden, model.w_out, model.b_out), x[np.newaxis, :])
    probs = _softmax_rows(z2)[0]
    return model.class_names[int(np.argmax(probs))], probs


def mlp_predict_batch(model: MlpModel, x) -> np.ndarray:
    """Predicted class ids for an (n, in_dim) batch."""
    x = np.asarray(x, dtype=np.float64)
    _, _, z2 = _forward((model.w_hidden, model.b_hidden, model.w_out, model.b_out), x)
    return np.argmax(z2, axis=1)


# -- persistence (manifest + float32 blobs, shared codec) --

_HEAD_KIND = "linear-head"
_MLP_KIND = "mlp-model"


def save_head(head: LinearHead, path) -> None:
    meta = {
        "out_dim": head.out_dim,
        "in_dim": head.in_dim,
        "class_names": head.class_names,
    }
    write_artifact(path, _HEAD_KIND, meta, {"weights": head.weights, "bias": head.bias})


def load_head(path) -> LinearHead:
    meta, blobs = read_artifact(path, _HEAD_KIND)
    w = blobs["weights"]
    if list(w.shape) != [meta["out_dim"], meta["in_dim"]]:
        raise DimensionMismatchError(
            f"weights shape {w.shape} != manifest ({meta['out_dim']}, {meta['in_dim']})"
        )
    return LinearHead(weights=w, bias=blobs["bias"], class_names=list(meta["class_names"]))


def save_mlp(model: MlpModel, path) -> None:
    meta = {
        "in_dim": model.in_dim,
        "hidden_units": model.w_hidden.shape[0],
        "class_names": model.class_names,
    }
    blobs = {
        "w_hidden": model.w_hidden,
        "b_hidden": model.b_hidden,
        "w_out": model.w_out,
        "b_out": model.b_out,
    }
    write_artifact(path, _MLP_KIND, meta, blobs)


def load_mlp(path) -> MlpModel:
    meta, blobs = read_artifact(path, _MLP_KIND)
    model = MlpModel(
        w_hidden=blobs["w_hidden"],
        b_hidden=blobs["b_hidden"],
        w_out=blobs["w_out"],
        b_out=blobs["b_out"],
        class_names=list(meta["class_names"]),
    )
    if model.in_dim != meta["in_dim"]:
        raise DimensionMismatchError("stored weight shape disagrees with manifest in_dim")
    return model
