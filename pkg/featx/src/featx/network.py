"""16-layer very-deep convolutional network wrapper.

Exposes the two outputs the pipeline consumes: the 4096-dimensional
penultimate-layer activation as a generic image representation, and the
softmax over the 1000-class vocabulary as per-class posteriors.

Weights load from a local state-dict file.  Without one (offline
environments), the network is built with a seed-fixed random
initialization: posteriors are then meaningless for recognition but every
format and determinism contract still holds, which is what the format
round-trip tests need.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torchvision.models import VGG16_Weights, vgg16

NETWORK_ID = "vgg16"
FEATURE_DIM = 4096
NUM_CLASSES = 1000

PREPROCESS_RECIPE = (
    "RGB; resize shorter side to 256; center crop 224x224; scale to [0,1]; "
    "normalize mean (0.485,0.456,0.406) std (0.229,0.224,0.225)"
)
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class FeatureExtractor:
    """Deterministic batched inference (thread count pinned for bitwise
    reproducibility across runs)."""

    def __init__(
        self,
        weights_path: str | Path | None = None,
        init_seed: int = 0,
        threads: int = 1,
    ):
        torch.set_num_threads(max(1, threads))
        if weights_path is not None:
            model = vgg16(weights=None)
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
            self.network_id = f"{NETWORK_ID}:{Path(weights_path).name}"
        else:
            torch.manual_seed(init_seed)
            model = vgg16(weights=None)
            self.network_id = f"{NETWORK_ID}:untrained-seed{init_seed}"
        model.eval()
        self._model = model
        self.class_names: tuple[str, ...] = tuple(
            VGG16_Weights.IMAGENET1K_V1.meta["categories"]
        )

    def preprocess(self, image) -> np.ndarray:
        """PIL image -> (3, 224, 224) float32 tensor data."""
        image = image.convert("RGB")
        w, h = image.size
        scale = 256.0 / min(w, h)
        image = image.resize(
            (max(1, round(w * scale)), max(1, round(h * scale)))
        )
        w, h = image.size
        left = (w - 224) // 2
        top = (h - 224) // 2
        image = image.crop((left, top, left + 224, top + 224))
        pixels = np.asarray(image, dtype=np.float32) / 255.0
        pixels = (pixels - _MEAN) / _STD
        return pixels.transpose(2, 0, 1)

    @torch.no_grad()
    def run(self, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(b, 3, 224, 224) inputs -> (b, 4096) features, (b, 1000) posteriors."""
        x = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
        model = self._model
        x = model.features(x)
        x = model.avgpool(x)
        x = torch.flatten(x, 1)
        penultimate = model.classifier[:-1](x)
        logits = model.classifier[-1](penultimate)
        posteriors = torch.softmax(logits, dim=1)
        return (
            penultimate.numpy().astype(np.float32),
            posteriors.numpy().astype(np.float32),
        )
