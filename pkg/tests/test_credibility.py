import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from misinforank.classifiers import LogisticRegression
from misinforank.credibility import (
    FEATURE_NAMES,
    EnsembleModel,
    FeatureError,
    LabelError,
    Standardizer,
    TrainingError,
    TrainingSet,
    UsageError,
    credibility_score,
    credibility_scores,
    feature_vector,
    load_training_csv,
    map_labels,
    train_ensemble,
)


class FixedMember:
    """Stub member returning a constant P(1)."""

    name = "fixed"

    def __init__(self, p1):
        self.p1 = p1

    def predict_proba(self, X):
        n = np.atleast_2d(X).shape[0]
        return np.column_stack([np.full(n, 1 - self.p1), np.full(n, self.p1)])


def separable_set(n=200, margin=1.0, seed=0):
    """Two informative features with a gap of ``margin`` between classes, padded to 11 dims."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = np.zeros((n, len(FEATURE_NAMES)))
    X[:, 0] = rng.uniform(-3, 3, size=n)
    X[:, 1] = rng.uniform(-3, 3, size=n)
    side = np.where(y == 1, 1.0, -1.0)
    # project onto the direction (1, 1)/sqrt(2) with a margin
    offset = (X[:, 0] + X[:, 1]) / np.sqrt(2)
    shift = side * (np.abs(offset) + margin / 2) - offset
    X[:, 0] += shift / np.sqrt(2)
    X[:, 1] += shift / np.sqrt(2)
    X[np.arange(n), 5 + rng.integers(0, 6, size=n)] = 1.0
    return TrainingSet(X, y)


@pytest.mark.parametrize("raw,binary", [(1, 0), (2, 0), (3, 0), (4, 1), (5, 1)])
def test_label_map(raw, binary):
    assert map_labels(raw) == binary


@pytest.mark.parametrize("raw", [0, 6, -1, 2.5, True])
def test_label_map_rejects(raw):
    with pytest.raises(LabelError):
        map_labels(raw)


def test_feature_vector_encoding():
    row = {"css_definitions": 3, "text_readability": 9.5, "pr_rank": "unknown", "page_rank_integer": "unknown",
           "page_rank_decimal": "unknown", "toplevel_domain": "gov"}
    x = feature_vector(row)
    assert x.shape == (11,)
    assert list(x[:5]) == [3, 9.5, -1, -1, -1]
    assert list(x[5:]) == [1, 0, 0, 0, 0, 0]
    assert feature_vector({**row, "toplevel_domain": "io"})[-1] == 1


def test_feature_vector_missing_fields_listed():
    with pytest.raises(FeatureError, match="pr_rank.*toplevel_domain"):
        feature_vector({"css_definitions": 1, "text_readability": 2, "page_rank_integer": 1, "page_rank_decimal": 1})


def test_soft_vote_two_members():
    model = EnsembleModel([FixedMember(0.4), FixedMember(0.7)], None, FEATURE_NAMES)
    x = np.zeros((1, 11))
    assert model.predict_proba(x)[0] == pytest.approx(0.55, abs=1e-12)
    assert model.predict(x)[0] == 1


def test_soft_vote_tie_goes_to_zero():
    model = EnsembleModel([FixedMember(0.5)] * 4, None, FEATURE_NAMES)
    assert model.predict(np.zeros((3, 11))).tolist() == [0, 0, 0]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), arrays(np.float64, (5, 11), elements=st.floats(-5, 5)))
def test_soft_vote_is_argmax_of_sums(p1s, X):
    model = EnsembleModel([FixedMember(p) for p in p1s], None, FEATURE_NAMES)
    sums = model.member_probas(X).sum(axis=0)
    assert model.predict(X).tolist() == [int(s[1] > s[0]) for s in sums]


def test_separable_cv_accuracy():
    model = train_ensemble(separable_set(200, 1.0), seed=0)
    assert model.cv_accuracy >= 0.95


def test_training_deterministic():
    data = separable_set(120, 1.0, seed=3)
    assert train_ensemble(data, seed=5).to_bytes() == train_ensemble(data, seed=5).to_bytes()


def test_single_class_rejected():
    X = np.random.default_rng(0).normal(size=(10, 11))
    with pytest.raises(TrainingError):
        train_ensemble(TrainingSet(X, np.ones(10, dtype=int)))


def test_model_roundtrip(tmp_path):
    data = separable_set(80, 1.0, seed=1)
    model = train_ensemble(data, seed=2)
    model.save(tmp_path / "m.bin")
    again = EnsembleModel.load(tmp_path / "m.bin")
    assert np.array_equal(again.predict_proba(data.X), model.predict_proba(data.X))
    assert again.cv_accuracy == model.cv_accuracy
    with pytest.raises(ValueError):
        EnsembleModel.from_bytes(b"garbage")


def test_errors_untrained_and_dimension():
    with pytest.raises(UsageError):
        EnsembleModel().predict_proba(np.zeros((1, 11)))
    with pytest.raises(UsageError):
        EnsembleModel([LogisticRegression()], None, FEATURE_NAMES).predict_proba(np.zeros((1, 11)))
    model = EnsembleModel([FixedMember(0.3)], None, FEATURE_NAMES)
    with pytest.raises(FeatureError):
        model.predict_proba(np.zeros((1, 7)))


def test_standardizer_refit_invariance():
    data = separable_set(100, 1.0, seed=4)
    model = train_ensemble(data, seed=1)
    refit = Standardizer.fit(data.X)
    assert np.array_equal(refit.mean, model.standardizer.mean)
    clone = EnsembleModel(model.members, refit, model.feature_names)
    assert np.allclose(clone.predict_proba(data.X), model.predict_proba(data.X), atol=1e-9)


def test_sentinel_and_topic_independence(fixture_dir):
    model = train_ensemble(load_training_csv(fixture_dir / "cred_train.csv"), seed=0)
    row = {"doc_id": "x", "css_definitions": 4, "text_readability": 10.0, "pr_rank": "unknown",
           "page_rank_integer": "unknown", "page_rank_decimal": "unknown", "toplevel_domain": "org"}
    p = credibility_score(model, row)
    assert 0.0 <= p <= 1.0
    # no topic input at all: the same document scores identically wherever it is retrieved
    assert credibility_scores(model, [row, dict(row)]) == {"x": p}


def test_high_pagerank_gov_scores_above_mean(fixture_dir):
    data = load_training_csv(fixture_dir / "cred_train.csv")
    model = train_ensemble(data, seed=0)
    mean = model.predict_proba(data.X).mean()
    probe = {"css_definitions": 3, "text_readability": 11.0, "pr_rank": 500, "page_rank_integer": 8,
             "page_rank_decimal": 7.9, "toplevel_domain": "gov"}
    assert credibility_score(model, probe) > mean


def test_training_csv_from_pages(tmp_path, fixture_dir):
    from misinforank.corpus import PageRankCache, ingest_corpus

    docs = list(ingest_corpus(fixture_dir / "corpus.jsonl"))[:6]
    csv_path = tmp_path / "t.csv"
    csv_path.write_text("url,rank,label_raw\n" + "".join(f"{d.url},{i},{1 + i % 5}\n" for i, d in enumerate(docs)))
    data = load_training_csv(csv_path, {d.url: d for d in docs}, PageRankCache.load(fixture_dir / "pagerank.tsv"))
    assert data.X.shape == (6, 11)
    assert data.y.tolist() == [map_labels(1 + i % 5) for i in range(6)]
    with pytest.raises(FeatureError):
        load_training_csv(csv_path)
