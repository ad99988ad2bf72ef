import json
import unicodedata

import numpy as np
import pytest

from tagsight import corpus as cp
from tagsight.errors import DataError, RejectedTagError, ValidationError


def write_corpus_files(tmp_path, records, features, posteriors=None, classes=None):
    meta = tmp_path / "metadata.jsonl"
    with open(meta, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write((rec if isinstance(rec, str) else json.dumps(rec)) + "\n")
    feat = tmp_path / "features.tsgm"
    cp.save_matrix(feat, np.asarray(features, dtype=np.float32))
    post = None
    if posteriors is not None:
        post = tmp_path / "posteriors.tsgm"
        names, roles = classes
        cp.save_matrix(post, np.asarray(posteriors, dtype=np.float32), names, roles)
    return meta, feat, post


def simple_records(n, tags=None):
    return [
        {"id": f"p{i}", "tags": tags[i] if tags else ["food"], "likes": i, "comments": 0}
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# normalize_tag


def test_normalize_strips_prefix_and_case():
    assert cp.normalize_tag("#FoodPorn") == "foodporn"


def test_normalize_identity():
    assert cp.normalize_tag("salad") == "salad"


def test_normalize_unicode_composition():
    # Precomposed and combining-accent spellings must collapse to one form.
    composed = cp.normalize_tag("#Café")
    decomposed = cp.normalize_tag("#Café")
    assert composed == decomposed
    assert composed == unicodedata.normalize("NFC", "café")


@pytest.mark.parametrize("raw", ["", "   ", "#", "##", " # "])
def test_normalize_rejects_empty(raw):
    with pytest.raises(RejectedTagError):
        cp.normalize_tag(raw)


# ---------------------------------------------------------------------------
# matrix file round trip


def test_matrix_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((5, 7)).astype(np.float32)
    path = tmp_path / "m.tsgm"
    cp.save_matrix(path, data)
    back, names, roles = cp.load_matrix(path)
    assert names is None and roles is None
    assert np.array_equal(back, data)


def test_matrix_roundtrip_with_class_table(tmp_path):
    data = np.full((2, 3), 1.0 / 3.0, dtype=np.float32)
    path = tmp_path / "p.tsgm"
    cp.save_matrix(path, data, ["pizza", "plate", "wig"], ["food", "container", "other"])
    back, names, roles = cp.load_matrix(path)
    assert np.array_equal(back, data)
    assert names == ("pizza", "plate", "wig")
    assert roles == ("food", "container", "other")


def test_matrix_bad_magic(tmp_path):
    path = tmp_path / "bad.tsgm"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(DataError):
        cp.load_matrix(path)


def test_matrix_truncated(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "m.tsgm"
    cp.save_matrix(path, rng.standard_normal((4, 4)).astype(np.float32))
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(DataError):
        cp.load_matrix(path)


# ---------------------------------------------------------------------------
# ingest


def test_ingest_happy_path(tmp_path):
    meta, feat, _ = write_corpus_files(
        tmp_path, simple_records(3), np.zeros((3, 4096), dtype=np.float32)
    )
    corpus, report = cp.ingest(meta, feat)
    assert len(corpus) == 3
    assert corpus.features.d == 4096
    assert report.malformed == 0
    assert [p.row for p in corpus.posts] == [0, 1, 2]


def test_ingest_row_count_mismatch_is_fatal(tmp_path):
    meta, feat, _ = write_corpus_files(
        tmp_path, simple_records(3), np.zeros((2, 8), dtype=np.float32)
    )
    with pytest.raises(DataError, match="mismatch"):
        cp.ingest(meta, feat)


def test_ingest_out_of_range_lat_drops_geotag(tmp_path):
    records = [
        {"id": "a", "tags": ["food"], "lat": 91.0, "lon": 0.0, "likes": 0, "comments": 0},
        {"id": "b", "tags": ["food"], "lat": 45.0, "lon": 7.0, "likes": 0, "comments": 0},
    ]
    meta, feat, _ = write_corpus_files(tmp_path, records, np.zeros((2, 4), dtype=np.float32))
    corpus, report = cp.ingest(meta, feat)
    assert len(corpus) == 2
    assert corpus.post_for_id("a").geotag is None
    assert corpus.post_for_id("b").geotag == (45.0, 7.0)
    assert report.invalid_geotags == 1


def test_ingest_malformed_line_skipped_and_counted(tmp_path):
    records = [
        json.dumps({"id": "a", "tags": ["food"], "likes": 0, "comments": 0}),
        "this is not json",
        json.dumps({"id": "c", "tags": ["food"], "likes": 0, "comments": 0}),
    ]
    meta, feat, _ = write_corpus_files(tmp_path, records, np.zeros((3, 4), dtype=np.float32))
    corpus, report = cp.ingest(meta, feat)
    assert len(corpus) == 2
    assert report.malformed == 1
    assert report.malformed_lines == [2]
    # the malformed line still owns row 1
    assert {p.row for p in corpus.posts} == {0, 2}


def test_ingest_duplicate_ids_deduplicated(tmp_path):
    records = [
        {"id": "a", "tags": ["food"], "likes": 1, "comments": 0},
        {"id": "a", "tags": ["salad"], "likes": 2, "comments": 0},
    ]
    meta, feat, _ = write_corpus_files(tmp_path, records, np.zeros((2, 4), dtype=np.float32))
    corpus, report = cp.ingest(meta, feat)
    assert len(corpus) == 1
    assert report.duplicate_ids == 1
    assert corpus.post_for_id("a").likes == 1  # first occurrence wins


def test_ingest_too_many_tags_is_malformed(tmp_path):
    records = [{"id": "a", "tags": [f"t{i}" for i in range(31)], "likes": 0, "comments": 0}]
    meta, feat, _ = write_corpus_files(tmp_path, records, np.zeros((1, 4), dtype=np.float32))
    corpus, report = cp.ingest(meta, feat)
    assert len(corpus) == 0
    assert report.malformed == 1


def test_ingest_rejects_nonfinite_features(tmp_path):
    features = np.zeros((1, 4), dtype=np.float32)
    features[0, 2] = np.nan
    meta, feat, _ = write_corpus_files(tmp_path, simple_records(1), features)
    with pytest.raises(DataError, match="non-finite"):
        cp.ingest(meta, feat)


def test_ingest_validates_posterior_row_sums(tmp_path):
    posteriors = np.array([[0.5, 0.2]], dtype=np.float32)  # sums to 0.7
    meta, feat, post = write_corpus_files(
        tmp_path,
        simple_records(1),
        np.zeros((1, 4), dtype=np.float32),
        posteriors,
        (["pizza", "wig"], ["food", "other"]),
    )
    with pytest.raises(DataError, match="sums to"):
        cp.ingest(meta, feat, post)


def test_ingest_posterior_requires_class_table(tmp_path):
    meta, feat, _ = write_corpus_files(
        tmp_path, simple_records(1), np.zeros((1, 4), dtype=np.float32)
    )
    bare = tmp_path / "bare.tsgm"
    cp.save_matrix(bare, np.array([[0.4, 0.6]], dtype=np.float32))
    with pytest.raises(DataError, match="class table"):
        cp.ingest(meta, feat, bare)


def test_corpus_is_read_only(tmp_path):
    meta, feat, _ = write_corpus_files(
        tmp_path, simple_records(2), np.ones((2, 4), dtype=np.float32)
    )
    corpus, _ = cp.ingest(meta, feat)
    with pytest.raises(ValueError):
        corpus.features.data[0, 0] = 5.0


def test_roundtrip_identity(tmp_path):
    rng = np.random.default_rng(7)
    tags = [["food", "salad"], ["food"], ["cake", "dessert", "food"], [], ["café"]]
    records = [
        {
            "id": f"p{i}",
            "tags": tags[i],
            "lat": float(rng.uniform(-60, 60)) if i % 2 == 0 else None,
            "lon": float(rng.uniform(-170, 170)) if i % 2 == 0 else None,
            "likes": int(rng.integers(0, 100)),
            "comments": int(rng.integers(0, 10)),
        }
        for i in range(5)
    ]
    for rec in records:
        if rec["lat"] is None:
            del rec["lat"], rec["lon"]
    features = rng.standard_normal((5, 6)).astype(np.float32)
    meta, feat, _ = write_corpus_files(tmp_path, records, features)
    corpus1, _ = cp.ingest(meta, feat)

    meta2 = tmp_path / "meta2.jsonl"
    feat2 = tmp_path / "feat2.tsgm"
    cp.save_metadata(corpus1.posts, meta2)
    cp.save_matrix(feat2, corpus1.features.data)
    corpus2, _ = cp.ingest(meta2, feat2)
    assert corpus1 == corpus2


def test_zero_tag_posts_are_retained(tmp_path):
    records = [{"id": "a", "tags": [], "likes": 0, "comments": 0}]
    meta, feat, _ = write_corpus_files(tmp_path, records, np.zeros((1, 4), dtype=np.float32))
    corpus, _ = cp.ingest(meta, feat)
    assert len(corpus) == 1
    assert corpus.posts[0].tags == frozenset()


# ---------------------------------------------------------------------------
# tag index


def make_corpus(tag_lists):
    n = len(tag_lists)
    posts = [
        cp.Post(
            id=f"p{i}",
            tags=frozenset(tag_lists[i]),
            geotag=None,
            likes=0,
            comments=0,
            row=i,
        )
        for i in range(n)
    ]
    return cp.Corpus(posts, cp.FeatureMatrix(n, 2, np.zeros((n, 2), dtype=np.float32)))


def test_tag_index_hand_count():
    corpus = make_corpus([{"a", "b"}, {"a"}, {"b"}, {"a"}, {"c"}])
    index = cp.build_tag_index(corpus, top_k=2)
    assert set(index.tags) == {"a", "b"}
    assert index.frequency("a") == 3
    assert index.frequency("b") == 2
    assert index.freq_rank("a") == 1
    assert index.freq_rank("b") == 2
    assert list(index.posting("a")) == [0, 1, 3]


def test_tag_index_universal_tag_is_rank_one():
    corpus = make_corpus([{"t", "x"}, {"t"}, {"t", "y"}])
    index = cp.build_tag_index(corpus, top_k=10)
    assert index.freq_rank("t") == 1
    assert index.frequency("t") == 3


def test_tag_index_topk_larger_than_vocab():
    corpus = make_corpus([{"a"}, {"b"}])
    index = cp.build_tag_index(corpus, top_k=50)
    assert set(index.tags) == {"a", "b"}


def test_tag_index_ties_lexicographic():
    corpus = make_corpus([{"zeta", "alpha"}, {"zeta", "alpha"}])
    index = cp.build_tag_index(corpus, top_k=2)
    assert index.ranked == ("alpha", "zeta")


def test_tag_index_paper_style_frequency_order():
    # Corpus engineered so the three most frequent tags come out in the
    # well-known order food > foodporn > instafood.
    tag_lists = (
        [{"food", "foodporn", "instafood"}] * 3
        + [{"food", "foodporn"}] * 2
        + [{"food"}] * 2
        + [{"yummy"}]
    )
    corpus = make_corpus(tag_lists)
    index = cp.build_tag_index(corpus, top_k=3)
    assert index.ranked == ("food", "foodporn", "instafood")


def test_tag_index_matches_brute_force_recount():
    rng = np.random.default_rng(42)
    vocab = [f"tag{i}" for i in range(12)]
    for _ in range(10):
        tag_lists = [
            set(rng.choice(vocab, size=rng.integers(0, 5), replace=False))
            for _ in range(rng.integers(1, 30))
        ]
        corpus = make_corpus(tag_lists)
        index = cp.build_tag_index(corpus, top_k=1000)
        brute: dict[str, int] = {}
        for tags in tag_lists:
            for t in tags:
                brute[t] = brute.get(t, 0) + 1
        assert dict(index.frequencies) == brute
        for tag, posting in index.postings.items():
            expected = [i for i, tags in enumerate(tag_lists) if tag in tags]
            assert list(posting) == expected


def test_empty_corpus_rejected():
    corpus = make_corpus([set()])
    with pytest.raises(ValidationError):
        cp.build_tag_index(corpus, top_k=0)
