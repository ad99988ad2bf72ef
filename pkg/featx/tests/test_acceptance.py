"""Acceptance: emitted files pass corpus ingestion, posterior rows are
distributions, dimensions are 4096/1000, and repeat extraction of one
image is bitwise stable."""

import json
from contextlib import contextmanager

import numpy as np
from PIL import Image

from featx.extract import ExtractionManifest, extract, manifest_for_directory
from featx.network import FEATURE_DIM, NUM_CLASSES, FeatureExtractor


@contextmanager
def criterion(name):
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def test_featx_acceptance(tmp_path):
    with criterion("featx-format-and-determinism"):
        from tagsight.corpus import ingest, load_matrix

        extractor = FeatureExtractor(weights_path=None, init_seed=0, threads=1)

        images = tmp_path / "images"
        images.mkdir()
        Image.new("RGB", (300, 240), (180, 120, 40)).save(images / "one.png")
        Image.new("RGB", (240, 300), (40, 120, 180)).save(images / "two.png")

        manifest = manifest_for_directory(
            images, tmp_path / "features.tsgm", tmp_path / "posteriors.tsgm", extractor
        )
        report = extract(manifest, extractor)
        assert report.failed == ()

        # dimensions and row sums
        feats, _, _ = load_matrix(tmp_path / "features.tsgm")
        posts, names, roles = load_matrix(tmp_path / "posteriors.tsgm")
        assert feats.shape == (2, FEATURE_DIM)
        assert posts.shape == (2, NUM_CLASSES)
        assert np.abs(posts.sum(axis=1, dtype=np.float64) - 1.0).max() <= 1e-3

        # files pass corpus ingestion unchanged
        meta = tmp_path / "metadata.jsonl"
        with open(meta, "w") as fh:
            for i in range(2):
                fh.write(
                    json.dumps(
                        {"id": f"img{i}", "tags": ["food"], "likes": 0, "comments": 0}
                    )
                    + "\n"
                )
        corpus, ingest_report = ingest(
            meta, tmp_path / "features.tsgm", tmp_path / "posteriors.tsgm"
        )
        assert len(corpus) == 2
        assert ingest_report.malformed == 0
        assert corpus.posteriors.class_roles.count("food") == 61
        assert corpus.posteriors.class_roles.count("container") == 6

        # repeat extraction of one image is bitwise stable
        blobs = []
        for run in range(2):
            single = ExtractionManifest(
                image_paths=(str(images / "one.png"),),
                network=extractor.network_id,
                preprocessing="acceptance",
                out_features=str(tmp_path / f"rf{run}.tsgm"),
                out_posteriors=str(tmp_path / f"rp{run}.tsgm"),
            )
            extract(single, extractor)
            blobs.append(
                (
                    (tmp_path / f"rf{run}.tsgm").read_bytes(),
                    (tmp_path / f"rp{run}.tsgm").read_bytes(),
                )
            )
        assert blobs[0] == blobs[1]
