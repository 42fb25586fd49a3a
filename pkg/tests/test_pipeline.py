import csv
import json

import pytest

from dyadexplain.errors import ConfigurationError, StageError
from dyadexplain.pipeline import (
    A_MANIFEST,
    STAGES,
    density_experiment,
    load_result,
    run_pipeline,
    run_stage,
    sha256,
    sweep_active_users,
)
from dyadexplain.synth import SynthSpec

EXPECTED = {
    "dataset.tsv", "stats.json", "targets.tsv", "split.tsv", "train_oversampled.txt", "head.bin",
    "history.csv", "scores.npy", "rankings.tsv", "metrics.csv", "explanations.tsv", "ccr.csv",
    "ccr_table.csv", "cluster_tags.tsv", "config.txt", "manifest.json",
}


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory, tiny_synth):
    from dyadexplain.config import PipelineConfig

    cfg = PipelineConfig.desk(
        dataset=str(tiny_synth.reviews_path), lexicon=str(tiny_synth.nouns_path),
        lemmas=str(tiny_synth.lemmas_path), active_users=10, hidden_size=4, dense_size=8,
        max_epochs=3, input_length=24, cluster_k=(2, 3), top_n=3,
    )
    out = tmp_path_factory.mktemp("run")
    return cfg, out, run_pipeline(cfg, out)


def test_artifact_checklist(tiny_run):
    _, out, res = tiny_run
    names = {p.name for p in out.iterdir()}
    assert EXPECTED <= names
    assert {"clusters_k2.svg", "clusters_k3.svg"} <= names
    assert 0 <= res.metrics["auc_roc"] <= 1
    assert [int(r["k"]) for r in res.ccr] == [2, 3]


def test_manifest_lists_every_artifact_with_hash(tiny_run):
    cfg, out, _ = tiny_run
    m = json.loads((out / A_MANIFEST).read_text())
    assert m["status"] == "ok" and m["failed_stage"] is None
    on_disk = {p.name for p in out.iterdir() if p.is_file() and p.name != A_MANIFEST}
    assert set(m["artifacts"]) == on_disk
    for name, digest in m["artifacts"].items():
        assert sha256(out / name) == digest
    assert m["seeds"]["head"] == cfg.stage_seed("head")
    assert "numpy" in m["versions"]


def test_rerun_is_bit_identical(tiny_run, tmp_path):
    cfg, out, _ = tiny_run
    run_pipeline(cfg, tmp_path)
    for name in ("metrics.csv", "explanations.tsv", "ccr.csv", "head.bin", "rankings.tsv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes(), name


@pytest.mark.parametrize("stage", ["label", "train", "eval", "explain", "ccr"])
def test_single_stage_rerun_reproduces_output(tiny_run, tmp_path, stage):
    cfg, out, _ = tiny_run
    run = tmp_path / "copy"
    run.mkdir()
    for p in out.iterdir():
        if p.is_file():
            (run / p.name).write_bytes(p.read_bytes())
    before = {p.name: sha256(p) for p in run.iterdir() if p.name != A_MANIFEST}
    run_stage(cfg, run, stage)
    after = {p.name: sha256(p) for p in run.iterdir() if p.name != A_MANIFEST}
    assert before == after


def test_missing_stopword_file_names_path(tiny_cfg, tmp_path):
    bad = tiny_cfg.replace(stopwords=str(tmp_path / "missing_stopwords.txt"))
    with pytest.raises(ConfigurationError, match="missing_stopwords.txt"):
        run_pipeline(bad, tmp_path / "run")


def test_stage_failure_names_stage_and_keeps_partial_state(tiny_run, tmp_path):
    cfg, out, _ = tiny_run
    run = tmp_path / "broken"
    run.mkdir()
    for name in ("dataset.tsv", "targets.tsv", "targets.tsv.users", "split.tsv", "train_oversampled.txt",
                 "config.txt"):
        (run / name).write_bytes((out / name).read_bytes())
    (run / "head.bin").write_bytes(b"PTERHEAD1 1 1 1 1\n")
    with pytest.raises(StageError) as info:
        run_pipeline(cfg, run, stages=("rank",))
    assert info.value.stage == "rank"
    m = json.loads((run / A_MANIFEST).read_text())
    assert m["status"] == "failed" and m["failed_stage"] == "rank"


def test_unknown_stage(tiny_cfg, tmp_path):
    with pytest.raises(ConfigurationError):
        run_stage(tiny_cfg, tmp_path, "dance")
    assert STAGES[0] == "ingest" and STAGES[-1] == "report"


def test_load_result_reads_written_files(tiny_run):
    _, out, res = tiny_run
    again = load_result(out)
    assert again.metrics == res.metrics
    assert again.mean_delta == pytest.approx(res.mean_delta)


def test_sweep_rows_and_files(tiny_cfg, tmp_path):
    rows = sweep_active_users(tiny_cfg, [4, 6, 8], tmp_path)
    assert [r["active_users"] for r in rows] == [4, 6, 8]
    with open(tmp_path / "sweep.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3
    assert (tmp_path / "sweep.svg").read_text().startswith("<?xml")
    one = sweep_active_users(tiny_cfg, [5], tmp_path / "one")
    assert len(one) == 1
    with pytest.raises(ConfigurationError):
        sweep_active_users(tiny_cfg, [], tmp_path / "none")


def test_sweep_records_failures(tiny_cfg, tmp_path):
    rows = sweep_active_users(tiny_cfg.replace(dataset=str(tmp_path / "gone.tsv")), [3], tmp_path)
    assert rows[0]["error"]


def test_density_table_sorted_densest_first(tiny_cfg, tmp_path):
    specs = [SynthSpec(n_users=30, n_items=12, n_groups=3, vocab_per_group=10, ratio=r, seed=0)
             for r in (1.6, 2.1)]
    rows = density_experiment(specs, tiny_cfg.replace(active_users=8), tmp_path)
    assert len(rows) == 2
    assert rows[0]["ratio"] > rows[1]["ratio"]
    with open(tmp_path / "density.csv") as fh:
        assert [float(r["ratio"]) for r in csv.DictReader(fh)] == sorted((r["ratio"] for r in rows), reverse=True)
    with pytest.raises(ConfigurationError):
        density_experiment(specs[:1], tiny_cfg, tmp_path)
