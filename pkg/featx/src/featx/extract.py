"""Batch extraction: a manifest of images in, two matrix files out.

Row order in the emitted matrices is exactly the manifest's image order.
Undecodable images keep their row: the feature row is all zeros and the
posterior row is uniform (so the file still validates as a distribution
per row), and the path is flagged in the manifest report.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .matrixio import write_matrix
from .network import FEATURE_DIM, NUM_CLASSES, PREPROCESS_RECIPE, FeatureExtractor
from .roles import load_roles

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".gif", ".webp")


@dataclass(frozen=True)
class ExtractionManifest:
    image_paths: tuple[str, ...]  # row order of the emitted matrices
    network: str
    preprocessing: str
    out_features: str
    out_posteriors: str


@dataclass(frozen=True)
class ExtractionReport:
    manifest: ExtractionManifest
    n_images: int
    failed: tuple[str, ...]  # undecodable paths (zero feature rows)

    def to_json(self) -> str:
        payload = {
            "network": self.manifest.network,
            "preprocessing": self.manifest.preprocessing,
            "out_features": self.manifest.out_features,
            "out_posteriors": self.manifest.out_posteriors,
            "n_images": self.n_images,
            "image_paths": list(self.manifest.image_paths),
            "failed": list(self.failed),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def manifest_for_directory(
    images_dir: str | Path,
    out_features: str | Path,
    out_posteriors: str | Path,
    extractor: FeatureExtractor,
) -> ExtractionManifest:
    """Manifest over a directory's images, sorted by name for stable rows."""
    images_dir = Path(images_dir)
    paths = sorted(
        str(p)
        for p in images_dir.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not paths:
        raise FileNotFoundError(f"no images found under {images_dir}")
    return ExtractionManifest(
        image_paths=tuple(paths),
        network=extractor.network_id,
        preprocessing=PREPROCESS_RECIPE,
        out_features=str(out_features),
        out_posteriors=str(out_posteriors),
    )


def extract(
    manifest: ExtractionManifest,
    extractor: FeatureExtractor,
    roles_path: str | Path | None = None,
    batch_size: int = 8,
) -> ExtractionReport:
    """Run the network over the manifest and write both matrix files."""
    n = len(manifest.image_paths)
    features = np.zeros((n, FEATURE_DIM), dtype=np.float32)
    posteriors = np.full((n, NUM_CLASSES), 1.0 / NUM_CLASSES, dtype=np.float32)
    failed: list[str] = []

    pending: list[tuple[int, np.ndarray]] = []

    def flush():
        if not pending:
            return
        batch = np.stack([tensor for _, tensor in pending])
        feats, posts = extractor.run(batch)
        for (row, _), f, p in zip(pending, feats, posts):
            features[row] = f
            posteriors[row] = p
        pending.clear()

    for row, path in enumerate(manifest.image_paths):
        try:
            with Image.open(path) as image:
                tensor = extractor.preprocess(image)
        except (OSError, UnidentifiedImageError, ValueError):
            logger.warning("undecodable image %s (row %d zeroed)", path, row)
            failed.append(path)
            features[row] = 0.0
            continue
        pending.append((row, tensor))
        if len(pending) >= batch_size:
            flush()
    flush()

    class_roles = load_roles(extractor.class_names, roles_path)
    write_matrix(manifest.out_features, features)
    write_matrix(
        manifest.out_posteriors, posteriors, extractor.class_names, class_roles
    )
    return ExtractionReport(manifest=manifest, n_images=n, failed=tuple(failed))
