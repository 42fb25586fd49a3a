"""Keyword extraction and explanation choice for one (user, restaurant) pair.

A hand-written predicted context of six reviews is ranked in the given
order. The review at rank 6 covers the context's keywords best, so it
beats the rank-1 review despite the logarithmic rank discount.

    python3 demos/explain_a_pair.py
"""

import math

from dyadexplain.explain import (
    eval_filter,
    fit_tfidf,
    load_resources,
    predicted_context,
    ranking_from_scores,
    score_review,
    select_explanation,
)

CONTEXT = [
    "Lovely paella, great food.",
    "Fresh seafood and wine.",
    "The beach view and a cold drink at the bar.",
    "Tapas and sangria.",
    "A meal with friends.",
    "The seafood and paella at this place are unreal. Everyone told us the best paella was here, "
    "and the seafood tasted like the sea itself. Right next to the beach.",
]
CITY = ["The food at this restaurant was fine, nice place."] * 24


def main():
    res = load_resources()  # bundled stopwords, noun lexicon and lemma table
    docs = {f"rev{k + 1}": eval_filter(t, res) for k, t in enumerate(CONTEXT)}
    tfidf = fit_tfidf(list(docs.values()) + [eval_filter(t, res) for t in CITY], ban_top=3)
    print("banned as too common:", sorted(tfidf.banned))

    scores = {rid: 0.9 - 0.1 * k for k, rid in enumerate(docs)}
    pc = predicted_context(ranking_from_scores("diner", "Casa_Playa", scores), n=6)
    e = select_explanation(pc, docs, tfidf, k=3)
    print("keywords:", list(e.keywords))
    for pos, rid in enumerate(pc.review_ids, start=1):
        s = score_review(docs[rid], e.keywords, pos)
        print(f"  #{pos} {rid}: {docs[rid]} -> {s:.3f}")
    print(f"selected {e.review_id} at rank #{e.rank_position} (score {e.score:.3f} = 5 / log2(7) = {5 / math.log2(7):.3f})")


if __name__ == "__main__":
    main()
