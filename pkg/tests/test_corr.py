import numpy as np
import pytest

from tagsight import corr, geo, synth
from tagsight.corpus import Corpus, FeatureMatrix, Post
from tagsight.errors import ValidationError


def corpus_from_indicator_rows(tag_names, indicator_rows, geotags=None):
    n = len(indicator_rows)
    posts = []
    for i, row in enumerate(indicator_rows):
        tags = frozenset(t for t, present in zip(tag_names, row) if present)
        posts.append(
            Post(
                id=f"p{i}",
                tags=tags,
                geotag=geotags[i] if geotags else None,
                likes=0,
                comments=0,
                row=i,
            )
        )
    return Corpus(posts, FeatureMatrix(n, 2, np.zeros((n, 2), dtype=np.float32)))


def test_always_cooccurring_tags_have_phi_one():
    corpus = corpus_from_indicator_rows(
        ["a", "b"], [(1, 1), (1, 1), (0, 0), (0, 0)]
    )
    matrix = corr.tag_phi_matrix(corpus, ["a", "b"])
    assert matrix.phi("a", "b") == 1.0


def test_hand_contingency_case_is_zero():
    # a=(1,1,0,0), b=(1,0,1,0): n11=n10=n01=n00=1 -> numerator 1-1=0.
    corpus = corpus_from_indicator_rows(
        ["a", "b"], [(1, 1), (1, 0), (0, 1), (0, 0)]
    )
    matrix = corr.tag_phi_matrix(corpus, ["a", "b"])
    assert matrix.phi("a", "b") == 0.0


def test_phi_matches_pearson_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(8, 40))
        t = int(rng.integers(2, 6))
        indicators = rng.integers(0, 2, size=(n, t))
        # ensure variance in every column
        indicators[0, :] = 0
        indicators[1, :] = 1
        tags = [f"t{j}" for j in range(t)]
        corpus = corpus_from_indicator_rows(tags, [tuple(r) for r in indicators])
        matrix = corr.tag_phi_matrix(corpus, tags)
        oracle = np.corrcoef(indicators.astype(np.float64), rowvar=False)
        assert np.nanmax(np.abs(matrix.values - oracle)) < 1e-12


def test_zero_variance_tags_flagged_not_zeroed():
    corpus = corpus_from_indicator_rows(
        ["always", "varies"], [(1, 1), (1, 0), (1, 1)]
    )
    matrix = corr.tag_phi_matrix(corpus, ["always", "varies"])
    assert not matrix.is_defined("always", "varies")
    assert np.isnan(matrix.phi("always", "varies"))
    assert not matrix.is_defined("always", "always")
    assert matrix.is_defined("varies", "varies")
    assert matrix.phi("varies", "varies") == 1.0


def test_matrix_is_exactly_symmetric():
    rng = np.random.default_rng(7)
    indicators = rng.integers(0, 2, size=(30, 5))
    indicators[0, :] = 0
    indicators[1, :] = 1
    tags = [f"t{j}" for j in range(5)]
    corpus = corpus_from_indicator_rows(tags, [tuple(r) for r in indicators])
    matrix = corr.tag_phi_matrix(corpus, tags)
    assert np.array_equal(matrix.values, matrix.values.T, equal_nan=True)


def test_permuting_posts_leaves_matrix_unchanged():
    rng = np.random.default_rng(8)
    indicators = rng.integers(0, 2, size=(20, 3))
    indicators[0, :] = 0
    indicators[1, :] = 1
    tags = ["a", "b", "c"]
    rows = [tuple(r) for r in indicators]
    m1 = corr.tag_phi_matrix(corpus_from_indicator_rows(tags, rows), tags)
    perm = rng.permutation(len(rows))
    m2 = corr.tag_phi_matrix(
        corpus_from_indicator_rows(tags, [rows[i] for i in perm]), tags
    )
    assert np.array_equal(m1.values, m2.values, equal_nan=True)


def test_duplicating_corpus_leaves_phi_unchanged():
    rng = np.random.default_rng(9)
    indicators = rng.integers(0, 2, size=(15, 3))
    indicators[0, :] = 0
    indicators[1, :] = 1
    tags = ["a", "b", "c"]
    rows = [tuple(r) for r in indicators]
    m1 = corr.tag_phi_matrix(corpus_from_indicator_rows(tags, rows), tags)
    m2 = corr.tag_phi_matrix(corpus_from_indicator_rows(tags, rows + rows), tags)
    assert np.allclose(m1.values, m2.values, equal_nan=True, atol=1e-15)


def test_inputs_validated():
    corpus = corpus_from_indicator_rows(["a"], [(1,), (0,)])
    with pytest.raises(ValidationError):
        corr.tag_phi_matrix(corpus, [])
    single = corpus_from_indicator_rows(["a"], [(1,)])
    with pytest.raises(ValidationError):
        corr.tag_phi_matrix(single, ["a"])


# ---------------------------------------------------------------------------
# top_correlations


def test_top_correlations_single_pair():
    corpus = corpus_from_indicator_rows(
        ["a", "b"], [(1, 1), (1, 1), (1, 0), (0, 0), (0, 0)]
    )
    matrix = corr.tag_phi_matrix(corpus, ["a", "b"])
    top = corr.top_correlations(matrix, 5, "positive")
    assert len(top) == 1
    assert top[0][:2] == ("a", "b")
    assert top[0][2] > 0


def test_top_correlations_n_exceeds_pairs():
    rng = np.random.default_rng(11)
    indicators = rng.integers(0, 2, size=(30, 3))
    indicators[0, :] = 0
    indicators[1, :] = 1
    tags = ["a", "b", "c"]
    corpus = corpus_from_indicator_rows(tags, [tuple(r) for r in indicators])
    matrix = corr.tag_phi_matrix(corpus, tags)
    top = corr.top_correlations(matrix, 100, "positive")
    n_positive = sum(
        1
        for i in range(3)
        for j in range(i + 1, 3)
        if matrix.defined[i, j] and matrix.values[i, j] > 0
    )
    assert len(top) == n_positive


def test_top_correlations_negative_sign():
    corpus = corpus_from_indicator_rows(
        ["a", "b"], [(1, 0), (1, 0), (0, 1), (0, 1)]
    )
    matrix = corr.tag_phi_matrix(corpus, ["a", "b"])
    assert corr.top_correlations(matrix, 3, "positive") == []
    neg = corr.top_correlations(matrix, 3, "negative")
    assert neg[0][2] == -1.0


def test_sweet_cluster_tops_positive_correlations():
    spec = synth.SynthSpec(
        n_posts=800,
        d=4,
        nonvisual_tags=(
            synth.NonvisualTag("coffee", 0.15),
            synth.NonvisualTag("salad", 0.15),
        ),
        clusters=(synth.TagCluster(("dessert", "cake", "chocolate"), 0.15, 0.9),),
        seed=21,
    )
    corpus, _ = synth.generate(spec)
    tags = ["dessert", "cake", "chocolate", "coffee", "salad"]
    matrix = corr.tag_phi_matrix(corpus, tags)
    top5 = {frozenset(p[:2]) for p in corr.top_correlations(matrix, 5, "positive")}
    expected = {
        frozenset({"dessert", "cake"}),
        frozenset({"dessert", "chocolate"}),
        frozenset({"cake", "chocolate"}),
    }
    assert expected <= top5


# ---------------------------------------------------------------------------
# per-continent


@pytest.fixture(scope="module")
def atlas():
    return geo.load_atlas()


def test_single_continent_corpus(atlas):
    paris = (48.8566, 2.3522)
    rng = np.random.default_rng(3)
    indicators = rng.integers(0, 2, size=(60, 2))
    indicators[0, :] = 0
    indicators[1, :] = 1
    corpus = corpus_from_indicator_rows(
        ["a", "b"], [tuple(r) for r in indicators], geotags=[paris] * 60
    )
    stats = geo.geocode_corpus(corpus, atlas)
    result = corr.per_continent_correlations(corpus, stats, ["a", "b"], min_posts=50)
    assert list(result) == ["Europe"]


def test_small_continent_omitted(atlas, caplog):
    paris = (48.8566, 2.3522)
    sydney = (-33.8688, 151.2093)
    geotags = [paris] * 60 + [sydney] * 10
    rng = np.random.default_rng(5)
    indicators = rng.integers(0, 2, size=(70, 2))
    indicators[0, :] = 0
    indicators[1, :] = 1
    corpus = corpus_from_indicator_rows(
        ["a", "b"], [tuple(r) for r in indicators], geotags=geotags
    )
    stats = geo.geocode_corpus(corpus, atlas)
    with caplog.at_level("WARNING", logger="tagsight.corr"):
        result = corr.per_continent_correlations(corpus, stats, ["a", "b"], min_posts=50)
    assert "Australia" not in result
    assert "Europe" in result
    assert any("Australia" in record.message for record in caplog.records)


def test_planted_continental_cluster_is_stronger_there():
    spec = synth.SynthSpec(
        n_posts=1200,
        d=4,
        nonvisual_tags=(
            synth.NonvisualTag("tea", 0.12),
            synth.NonvisualTag("scone", 0.12),
        ),
        clusters=(synth.TagCluster(("tea", "scone"), 0.3, 0.9, continent="Europe"),),
        geo_mixture=(("Europe", 0.5), ("Australia", 0.5)),
        seed=33,
    )
    corpus, _ = synth.generate(spec)
    atlas = geo.load_atlas()
    stats = geo.geocode_corpus(corpus, atlas)
    result = corr.per_continent_correlations(
        corpus, stats, ["tea", "scone"], min_posts=50
    )
    assert result["Europe"].phi("tea", "scone") > result["Australia"].phi("tea", "scone")


def test_matrix_csv_renders_na():
    corpus = corpus_from_indicator_rows(
        ["always", "varies"], [(1, 1), (1, 0), (1, 1)]
    )
    matrix = corr.tag_phi_matrix(corpus, ["always", "varies"])
    text = corr.matrix_to_csv(matrix)
    assert "n/a" in text
    assert text.splitlines()[0] == "tag,always,varies"
