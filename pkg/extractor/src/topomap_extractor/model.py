"""Backbone loading and the pooled-feature tap.

The feature vector of an image is the flattened output of the backbone's
adaptive average pool layer -- the input of the final linear classification
layer -- so in eval mode the model's own logits equal that layer applied to
the extracted features. Weights resolve from one of:

  pretrained        the ImageNet checkpoint (downloaded/cached by torchvision)
  random:<seed>     seeded random initialization, for offline testing
  <path>            a state-dict file on disk

The class vocabulary is the ImageNet category list shipped with torchvision
metadata and is available regardless of the weights source.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import torch
from torchvision import transforms
from torchvision.models import GoogLeNet_Weights, googlenet

FEATURE_DIM = 1024
N_CLASSES = 1000

# Canonical inference transforms (matches the checkpoint's published ones).
PREPROCESS_DESCRIPTION = "resize256-centercrop224-rgb-normalize(imagenet)"
_PREPROCESS = transforms.Compose(
    [
        transforms.Resize(256),
        transforms.CenterCrop(224),
        transforms.ToTensor(),
        transforms.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
    ]
)


@dataclass
class Backbone:
    model: torch.nn.Module
    weights_id: str
    weights_hash: str
    class_names: list[str]

    def preprocess(self, image) -> torch.Tensor:
        return _PREPROCESS(image.convert("RGB"))


def _state_hash(model: torch.nn.Module) -> str:
    digest = hashlib.sha256()
    state = model.state_dict()
    for key in sorted(state):
        digest.update(key.encode())
        digest.update(state[key].numpy().tobytes())
    return digest.hexdigest()


def load_backbone(weights: str = "pretrained") -> Backbone:
    """Build the backbone in eval mode with the requested weights."""
    class_names = list(GoogLeNet_Weights.IMAGENET1K_V1.meta["categories"])
    if weights == "pretrained":
        model = googlenet(weights=GoogLeNet_Weights.IMAGENET1K_V1)
    elif weights.startswith("random:"):
        seed = int(weights.split(":", 1)[1])
        torch.manual_seed(seed)
        model = googlenet(weights=None, init_weights=True)
    else:
        path = Path(weights)
        if not path.is_file():
            raise FileNotFoundError(f"weights file not found: {path}")
        model = googlenet(weights=None, init_weights=True)
        model.load_state_dict(torch.load(path, map_location="cpu", weights_only=True))
    model.eval()
    return Backbone(
        model=model,
        weights_id=weights,
        weights_hash=_state_hash(model),
        class_names=class_names,
    )


def pooled_features(backbone: Backbone, batch: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(features, logits) for a preprocessed (n, 3, 224, 224) batch.

    Features are the flattened adaptive-average-pool output; in eval mode the
    returned logits are exactly the classification layer applied to them.
    """
    captured: dict[str, torch.Tensor] = {}
    handle = backbone.model.avgpool.register_forward_hook(
        lambda module, inputs, output: captured.__setitem__("pooled", output)
    )
    try:
        with torch.no_grad():
            logits = backbone.model(batch)
    finally:
        handle.remove()
    features = torch.flatten(captured["pooled"], 1)
    return features, logits


def classification_layer(backbone: Backbone) -> tuple[torch.Tensor, torch.Tensor]:
    """(weights, bias) of the final linear layer, with a shape check."""
    fc = backbone.model.fc
    if tuple(fc.weight.shape) != (N_CLASSES, FEATURE_DIM):
        raise ValueError(
            f"classification layer has shape {tuple(fc.weight.shape)}, "
            f"expected ({N_CLASSES}, {FEATURE_DIM})"
        )
    return fc.weight.detach(), fc.bias.detach()
