import os
from pathlib import Path

import pytest

from dyadexplain.dyadic import DyadicDataset, Interaction, write_reviews

os.environ.setdefault("MPLBACKEND", "Agg")


def mk(user, item, score, rid=None, text=None, title="", city="C"):
    rid = rid or f"{user}-{item}-{score}"
    return Interaction(user, item, score, rid, text or f"{user} on {item}", title, city)


@pytest.fixture
def g1() -> DyadicDataset:
    """Toy graph: u1->r1 (5), u2->r1 (4), u2->r2 (5), u3->r2 (2)."""
    return DyadicDataset([
        mk("u1", "r1", 5, "rev1"),
        mk("u2", "r1", 4, "rev2"),
        mk("u2", "r2", 5, "rev3"),
        mk("u3", "r2", 2, "rev4"),
    ], "C")


@pytest.fixture
def g1_file(tmp_path, g1) -> Path:
    p = tmp_path / "g1.tsv"
    write_reviews(g1, p)
    return p


@pytest.fixture(scope="session")
def tiny_synth(tmp_path_factory):
    """A small synthetic corpus on disk for fast pipeline tests."""
    from dyadexplain.synth import SynthSpec, generate_synthetic

    out = tmp_path_factory.mktemp("tiny")
    return generate_synthetic(SynthSpec(n_users=30, n_items=12, n_groups=3, vocab_per_group=10,
                                        ratio=6.0, seed=3), out)


@pytest.fixture
def tiny_cfg(tiny_synth):
    from dyadexplain.config import PipelineConfig

    return PipelineConfig.desk(
        dataset=str(tiny_synth.reviews_path), lexicon=str(tiny_synth.nouns_path),
        lemmas=str(tiny_synth.lemmas_path), active_users=10, hidden_size=4, dense_size=8,
        max_epochs=3, input_length=24, cluster_k=(2, 3), top_n=3,
    )
