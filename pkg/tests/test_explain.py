import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadexplain.errors import ConfigurationError, EmptyContextError
from dyadexplain.explain import (
    Explanation,
    Ranking,
    cumulative_vector,
    eval_filter,
    extract_keywords,
    fit_tfidf,
    global_rankings,
    load_resources,
    predicted_context,
    rank_reviews,
    ranking_from_scores,
    read_explanations,
    score_review,
    select_explanation,
    write_explanations,
)
from dyadexplain.head import HeadConfig, HeadParams
from dyadexplain.labeling import ActiveUserSet
from dyadexplain.text import hashed_surrogate_provider


@pytest.fixture(scope="module")
def res():
    return load_resources()


def context_of(docs, user="u", item="i"):
    """A predicted context whose rank order is the order of ``docs``."""
    n = len(docs)
    r = ranking_from_scores(user, item, {rid: 1.0 - k / (n + 1) for k, rid in enumerate(docs)})
    return predicted_context(r, n)


# ---------------------------------------------------------------- rankings


def test_ranking_order():
    r = ranking_from_scores("u", "i", {"a": 0.2, "b": 0.9, "c": 0.6})
    assert r.review_ids == ["b", "c", "a"]
    assert r.best == "b"


def test_ranking_ties_by_id():
    r = ranking_from_scores("u", "i", {"z": 0.5, "m": 0.5, "a": 0.5})
    assert r.review_ids == ["a", "m", "z"]


def test_ranking_singleton_and_empty():
    assert ranking_from_scores("u", "i", {"only": 0.3}).best == "only"
    with pytest.raises(EmptyContextError):
        ranking_from_scores("u", "i", {})


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.floats(0.001, 0.999), min_size=1, max_size=8))
def test_ranking_best_is_invariant_to_monotone_transform(scores):
    r = ranking_from_scores("u", "i", scores)
    logit = {k: math.log(p / (1 - p)) for k, p in scores.items()}
    assert ranking_from_scores("u", "i", logit).review_ids == r.review_ids
    ps = [p for _, p in r.entries]
    assert ps == sorted(ps, reverse=True)


class _Review:
    def __init__(self, rid, text):
        self.review_id = rid
        self.text = text

    def model_text(self):
        return self.text


def test_rank_reviews_uses_user_column():
    cfg = HeadConfig(hidden_size=3, dense_size=4, output_size=2, seed=0)
    params = HeadParams.init(4 * 6, cfg)
    provider = hashed_surrogate_provider(0, 6)
    users = ActiveUserSet(("u1", "u2"))
    reviews = [_Review("r1", "paella seafood"), _Review("r2", "vegan tofu"), _Review("r3", "beach bar")]
    r = rank_reviews(params, provider, users, "u2", "item", reviews)
    assert sorted(r.review_ids) == ["r1", "r2", "r3"]
    assert all(0 < p < 1 for _, p in r.entries)
    with pytest.raises(EmptyContextError):
        rank_reviews(params, provider, users, "u2", "item", [])


def test_predicted_context_lengths():
    big = ranking_from_scores("u", "i", {f"r{k:03d}": k / 200 for k in range(1, 121)})
    assert len(predicted_context(big, 50)) == 50
    assert predicted_context(big, 50).review_ids == big.review_ids[:50]
    small = ranking_from_scores("u", "i", {"a": 0.1, "b": 0.2, "c": 0.3})
    assert len(predicted_context(small, 50)) == 3
    assert len(predicted_context(big, 5)) == 5
    with pytest.raises(ValueError):
        predicted_context(small, 0)


# ---------------------------------------------------------------- filtering


def test_eval_filter_examples(res):
    assert eval_filter("The paella was amazing!!", res) == ["paella"]
    assert eval_filter("it was what it is and they were there", res) == []
    assert eval_filter("Two paellas, please", res) == ["paella"]
    assert eval_filter("PAELLA&seafood", res) == ["paella", "seafood"]


def test_missing_resource_names_path(tmp_path):
    missing = tmp_path / "nope.txt"
    with pytest.raises(ConfigurationError, match="nope.txt"):
        load_resources(stopwords=missing)


def test_bad_lemma_line(tmp_path):
    lem = tmp_path / "lem.tsv"
    lem.write_text("paellas paella\n")
    with pytest.raises(ConfigurationError):
        load_resources(lemmas=lem)


# ---------------------------------------------------------------- tf-idf


def test_tfidf_closed_form():
    m = fit_tfidf([["paella", "seafood"], ["vegan", "tofu"]], ban_top=0)
    assert np.allclose(m.idf, math.log(2))
    assert m.transform(["paella", "seafood"])[m.vocabulary["paella"]] == pytest.approx(0.693, abs=5e-4)


def test_tfidf_term_in_every_doc_has_zero_idf():
    m = fit_tfidf([["food", "a"], ["food", "b"], ["food"]], ban_top=0)
    assert m.idf[m.vocabulary["food"]] == 0.0


def test_tfidf_ban_rule():
    corpus = [["food", "paella"], ["food", "food", "vegan"], ["food", "beach"]]
    m = fit_tfidf(corpus, ban_top=1)
    assert m.banned == {"food"}
    assert m.transform(["food", "food", "food"]).sum() == 0.0
    with pytest.raises(ValueError):
        fit_tfidf([])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=6), min_size=1, max_size=8),
       st.integers(0, 3))
def test_tfidf_weights_non_negative(corpus, ban):
    m = fit_tfidf(corpus, ban_top=ban)
    assert np.all(m.weights >= 0)
    assert m.transform(["zzz"]).sum() == 0


def test_cumulative_vector_properties():
    docs = {"r1": ["paella", "food"], "r2": ["vegan", "tofu"], "r3": ["food"], "r4": ["beach"]}
    m = fit_tfidf(list(docs.values()), ban_top=1)
    one = cumulative_vector(m, context_of(["r2"]), docs)
    assert np.array_equal(one, m.transform(docs["r2"]))
    two = cumulative_vector(m, context_of(["r1", "r2"]), docs)
    support = {m.terms[j] for j in np.flatnonzero(two)}
    assert support == {"paella", "vegan", "tofu"}
    assert two[m.vocabulary["food"]] == 0.0
    a = cumulative_vector(m, context_of(["r1", "r2", "r4"]), docs)
    b = cumulative_vector(m, context_of(["r4", "r1", "r2"]), docs)
    assert np.allclose(a, b)


# ---------------------------------------------------------------- keywords and scoring


def test_keywords_tie_rule_and_sparse_warning():
    m = fit_tfidf([["a"], ["b"], ["c"]], ban_top=0)
    v = np.zeros(3)
    v[m.vocabulary["a"]], v[m.vocabulary["b"]], v[m.vocabulary["c"]] = 2.0, 2.0, 1.0
    assert extract_keywords(v, m, 2) == ["a", "b"]
    w = np.zeros(3)
    w[m.vocabulary["c"]] = 0.4
    with pytest.warns(UserWarning):
        assert extract_keywords(w, m, 3) == ["c"]


def test_score_review_values():
    toks = ["paella"] * 3 + ["beach"]
    assert score_review(toks, ["paella", "beach"], 1) == 4.0
    assert score_review(toks, ["paella", "beach"], 6) == pytest.approx(4 / math.log2(7))
    assert score_review(toks, ["paella", "beach"], 6) == pytest.approx(1.425, abs=5e-4)
    assert score_review(["tofu"], ["paella"], 3) == 0.0
    with pytest.raises(ValueError):
        score_review(toks, ["paella"], 0)


def test_select_prefers_rank_three_with_all_keywords():
    docs = {
        "r1": ["menu"], "r2": ["wine"],
        "r3": ["paella", "paella", "seafood", "seafood", "beach", "beach"],
    }
    m = fit_tfidf(list(docs.values()) + [["menu", "wine"]] * 4, ban_top=0)
    e = select_explanation(context_of(["r1", "r2", "r3"]), docs, m)
    assert set(e.keywords) == {"paella", "seafood", "beach"}
    assert (e.review_id, e.rank_position, e.fallback) == ("r3", 3, False)
    assert e.score == pytest.approx(6 / 2.0)


def test_select_fallback_and_singleton():
    docs = {"r1": ["menu"], "r2": ["menu"]}
    m = fit_tfidf([["menu"]], ban_top=1)
    e = select_explanation(context_of(["r1", "r2"]), docs, m)
    assert (e.review_id, e.fallback, e.score) == ("r1", True, 0.0)
    solo = select_explanation(context_of(["r2"]), {"r2": ["menu", "wine"]}, fit_tfidf([["wine"], ["menu"]], 0))
    assert solo.review_id == "r2" and solo.rank_position == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["paella", "beach", "tofu", "wine"]), max_size=5), min_size=1, max_size=6),
       st.integers(2, 4))
def test_selection_is_member_and_invariant_to_count_scaling(bodies, factor):
    ids = [f"r{k}" for k in range(len(bodies))]
    docs = dict(zip(ids, bodies))
    m = fit_tfidf([b or ["filler"] for b in bodies] + [["filler"]], ban_top=0)
    e = select_explanation(context_of(ids), docs, m)
    assert e.review_id in ids
    scaled = {k: v * factor for k, v in docs.items()}
    e2 = select_explanation(context_of(ids), scaled, m)
    assert e2.review_id == e.review_id


# ---------------------------------------------------------------- worked examples

SEAFOOD_REVIEW = (
    "When you see this restaurant do not be intimidated by how busy it looks. Service is very quick and "
    "friendly. Do not hesitate to ask them for advice regarding the food. I had the Lubina, which was "
    "recommended to me. The food is fresh and good. But whta won me over was the service. Eventhough the "
    "place is packed, the staff always make time for a little chat and offers service with a genuine smile. "
    "Their sangria is also delicious. And their calamari is very well prepared (no rubbery rubbish here). "
    "It is the perfect place for a layed back lunch or dinner."
)
BEACH_REVIEW = (
    "The seafood and paella at this place are unreal. I asked many locals where the best paella was, they "
    "said Salamanca. They were so right. It was a bit pricey but you get what you pay for. I've never had "
    "seafood like that anywhere near the Mediterranean. And to top it off, they a great selection of Jamon. "
    "So so so good...and it's right next next to the beach."
)
BACKGROUND = ["The food at this restaurant was fine, nice place."] * 24


def _worked(texts, res, ban_top=3):
    docs = {f"c{k}": eval_filter(t, res) for k, t in enumerate(texts)}
    corpus = list(docs.values()) + [eval_filter(t, res) for t in BACKGROUND]
    return docs, fit_tfidf(corpus, ban_top=ban_top)


def test_worked_pair_selects_rank_one(res):
    texts = [SEAFOOD_REVIEW, "The paella and seafood were superb.", "Paella with seafood, near the beach."]
    docs, m = _worked(texts, res)
    e = select_explanation(context_of(list(docs)), docs, m)
    assert set(e.keywords) == {"paella", "seafood", "service"}
    assert e.rank_position == 1


def test_worked_pair_selects_rank_six(res):
    texts = [
        "Lovely paella, great food.",
        "Fresh seafood and wine.",
        "The beach view and a cold drink at the bar.",
        "Tapas and sangria.",
        "A meal with friends.",
        BEACH_REVIEW,
    ]
    docs, m = _worked(texts, res)
    e = select_explanation(context_of(list(docs)), docs, m)
    assert e.keywords == ("paella", "seafood", "beach")
    assert e.rank_position == 6
    assert e.score == pytest.approx(5 / math.log2(7))


# ---------------------------------------------------------------- export and global rankings


def test_explanations_roundtrip(tmp_path):
    rows = [Explanation("u1", "i1", "r9", 6, 1.425, ("paella", "beach")),
            Explanation("u2", "i1", "r1", 1, 0.0, ())]
    p = tmp_path / "ex.tsv"
    write_explanations(rows, p)
    assert p.read_text().splitlines()[0] == "user_id\titem_id\treview_id\trank_position\tscore\tkeywords"
    assert read_explanations(p) == rows


def test_global_rankings():
    probs = np.array([[0.1, 0.9], [0.8, 0.2], [0.8, 0.5]])
    users = ActiveUserSet(("u1", "u2"))
    out = global_rankings(probs, ["x1", "x2", "x3"], users, [("u1", "i"), ("u2", "i"), ("ghost", "i")], k=2)
    assert out == [["x2", "x3"], ["x1", "x3"], []]


def test_ranking_dataclass_len():
    r = Ranking("u", "i", (("a", 0.9), ("b", 0.1)))
    assert len(r) == 2
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert predicted_context(r, 1).review_ids == ["a"]
