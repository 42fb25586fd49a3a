"""End-to-end runs whose stages hand off through files in one run directory.

Each stage reads the artifacts of earlier stages from disk and writes its own,
so any stage can be re-run in isolation and reproduce its output exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import PipelineConfig
from .dyadic import DyadicDataset, dataset_stats, filter_positive, ingest_reviews, write_reviews
from .errors import ConfigurationError, DyadExplainError, StageError
from .evaluation.ccr import ccr_evaluation, context_points, fit_clusters, interaction_pairs
from .evaluation.clustering import centroid_tags, pca_2d, assign_many
from .evaluation.metrics import ClassMetricsReport, classification_metrics
from .explain import (
    eval_filter,
    fit_tfidf,
    load_resources,
    predicted_context,
    ranking_from_scores,
    select_explanation,
    write_explanations,
)
from .head import EmbeddingCache, load_head, predict_embedded, save_head, train
from .labeling import (
    Partitions,
    build_targets,
    mlros_oversample,
    read_targets,
    select_active_users,
    split,
    write_targets,
)
from .text import hashed_surrogate_provider, load_precomputed_provider

log = logging.getLogger(__name__)

STAGES = ("ingest", "label", "train", "rank", "eval", "explain", "ccr", "report")

A_DATASET = "dataset.tsv"
A_STATS = "stats.json"
A_TARGETS = "targets.tsv"
A_SPLIT = "split.tsv"
A_OVERSAMPLED = "train_oversampled.txt"
A_HEAD = "head.bin"
A_HISTORY = "history.csv"
A_SCORES = "scores.npy"
A_SCORE_IDS = "scores_ids.txt"
A_RANKINGS = "rankings.tsv"
A_METRICS = "metrics.csv"
A_EXPLANATIONS = "explanations.tsv"
A_CCR = "ccr.csv"
A_CCR_TABLE = "ccr_table.csv"
A_TAGS = "cluster_tags.tsv"
A_CONFIG = "config.txt"
A_MANIFEST = "manifest.json"


# --------------------------------------------------------------------------
# shared loaders


@lru_cache(maxsize=8)
def _provider(kind: str, seed: int, width: int, embeddings: str | None):
    if kind == "surrogate":
        return hashed_surrogate_provider(seed, width)
    return load_precomputed_provider(embeddings)


def make_provider(cfg: PipelineConfig):
    return _provider(cfg.provider, cfg.provider_seed, cfg.provider_width, cfg.embeddings)


def _need(run: Path, name: str) -> Path:
    p = run / name
    if not p.is_file():
        raise FileNotFoundError(f"missing artifact {p}; run the earlier stages first")
    return p


def _dataset(cfg, run: Path) -> DyadicDataset:
    return ingest_reviews(_need(run, A_DATASET), cfg.format)


def _partitions(cfg, run: Path, d: DyadicDataset, oversampled: bool = True) -> Partitions:
    m = read_targets(_need(run, A_TARGETS), d, cfg.include_title)
    by_id = {s.review_id: s for s in m.samples}
    parts = {"train": [], "validation": [], "test": []}
    with open(_need(run, A_SPLIT), encoding="utf-8") as fh:
        for line in fh:
            rid, part = line.rstrip("\n").split("\t")
            parts[part].append(by_id[rid])
    train_set = parts["train"]
    if oversampled:
        with open(_need(run, A_OVERSAMPLED), encoding="utf-8") as fh:
            train_set = [by_id[ln.rstrip("\n")] for ln in fh if ln.strip()]
    return Partitions(train_set, parts["validation"], parts["test"], cfg.stage_seed("split"), m.users)


def _resources(cfg):
    return load_resources(cfg.stopwords, cfg.lexicon, cfg.lemmas)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else repr(float(x)) if isinstance(x, float) else str(x)


# --------------------------------------------------------------------------
# stages


def stage_ingest(cfg: PipelineConfig, run: Path):
    d = ingest_reviews(cfg.dataset, cfg.format, cfg.city)
    write_reviews(d, run / A_DATASET, cfg.format)
    st = dataset_stats(d)
    with open(run / A_STATS, "w", encoding="utf-8") as fh:
        json.dump({"city": d.city, "discarded_rows": d.discarded, **_jsonable(asdict(st))}, fh, indent=1, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def stage_label(cfg: PipelineConfig, run: Path):
    d = _dataset(cfg, run)
    if cfg.positive_only:
        d = filter_positive(d)
    users = select_active_users(d, cfg.active_users)
    m = build_targets(d, users, discard_zero=cfg.discard_zero, include_title=cfg.include_title)
    write_targets(m, run / A_TARGETS)
    parts = split(m, cfg.split, cfg.stage_seed("split"))
    with open(run / A_SPLIT, "w", encoding="utf-8") as fh:
        for name in ("train", "validation", "test"):
            for s in getattr(parts, name):
                fh.write(f"{s.review_id}\t{name}\n")
    grown = mlros_oversample(parts.train, cfg.mlros_pct, cfg.stage_seed("mlros"), cfg.mlros_min_mean_ir)
    with open(run / A_OVERSAMPLED, "w", encoding="utf-8") as fh:
        fh.writelines(f"{s.review_id}\n" for s in grown)


def stage_train(cfg: PipelineConfig, run: Path):
    d = _dataset(cfg, run)
    parts = _partitions(cfg, run, d)
    hc = replace(cfg.head_config(), output_size=len(parts.users))
    params, hist = train(parts, make_provider(cfg), hc, EmbeddingCache(make_provider(cfg), hc.max_tokens))
    save_head(params, run / A_HEAD)
    _write_csv(run / A_HISTORY, ["epoch", "train_loss", "val_loss", "best"],
               [[e + 1, repr(tl), repr(vl), int(e + 1 == hist.best_epoch)]
                for e, (tl, vl) in enumerate(zip(hist.train_loss, hist.val_loss))])


def _scored_samples(parts: Partitions):
    seen, out = set(), []
    for s in list(parts.test) + list(parts.validation):
        if s.review_id not in seen:
            seen.add(s.review_id)
            out.append(s)
    return out


def stage_rank(cfg: PipelineConfig, run: Path):
    d = _dataset(cfg, run)
    parts = _partitions(cfg, run, d, oversampled=False)
    params = load_head(_need(run, A_HEAD))
    cache = EmbeddingCache(make_provider(cfg), cfg.input_length)
    samples = _scored_samples(parts)
    P = predict_embedded(params, [cache.get(s.review_id, s.text) for s in samples])
    np.save(run / A_SCORES, P.astype(np.float64))
    (run / A_SCORE_IDS).write_text("".join(f"{s.review_id}\n" for s in samples), encoding="utf-8")
    ctx = _EvalContext(cfg, run, d, parts, need_docs=False)
    with open(run / A_RANKINGS, "w", encoding="utf-8") as fh:
        fh.write("user_id\titem_id\trank\treview_id\tprobability\n")
        for (user, item) in ctx.val_pairs:
            cand = ctx.candidates(user, item)
            if not cand:
                continue
            r = ctx.ranker(user, item, cand)
            for pos, (rid, p) in enumerate(r.entries, start=1):
                fh.write(f"{user}\t{item}\t{pos}\t{rid}\t{p:.9g}\n")


class _EvalContext:
    """Scores, candidate pools and filtered documents shared by the evaluation stages."""

    def __init__(self, cfg, run, d, parts, need_docs=True):
        self.cfg = cfg
        ids = _need(run, A_SCORE_IDS).read_text(encoding="utf-8").split()
        self.P = np.load(_need(run, A_SCORES))
        self.row = {rid: i for i, rid in enumerate(ids)}
        self.col = parts.users.column_index
        self.parts = parts
        self.d = d
        pool_ids = [s.review_id for s in _scored_samples(parts)]
        self.pool_by_item: dict[str, list] = {}
        for rid in pool_ids:
            it = d.review(rid)
            self.pool_by_item.setdefault(it.item, []).append(it)
        self.val_pairs = self._pairs(parts.validation)
        self.test_pairs = self._pairs(parts.test)
        if need_docs:
            res = _resources(cfg)
            positive = [it for it in d if it.positive]
            self.docs = {it.review_id: eval_filter(it.model_text(cfg.include_title), res) for it in positive}
            self.tfidf = fit_tfidf([self.docs[it.review_id] for it in positive], cfg.ban_top)

    def _pairs(self, samples):
        recs = [self.d.review(s.review_id) for s in samples]
        return interaction_pairs(r for r in recs if r.user in self.col)

    def candidates(self, user, item):
        return sorted(it.review_id for it in self.pool_by_item.get(item, []) if it.user != user)

    def ranker(self, user, item, cand):
        j = self.col[user]
        return ranking_from_scores(user, item, {rid: self.P[self.row[rid], j] for rid in cand})


def stage_eval(cfg: PipelineConfig, run: Path):
    d = _dataset(cfg, run)
    parts = _partitions(cfg, run, d, oversampled=False)
    ids = _need(run, A_SCORE_IDS).read_text(encoding="utf-8").split()
    P = np.load(_need(run, A_SCORES))
    row = {rid: i for i, rid in enumerate(ids)}
    test_rows = [row[s.review_id] for s in parts.test]
    Y = np.stack([s.target for s in parts.test]) if parts.test else np.zeros((0, P.shape[1]))
    rep = classification_metrics(P[test_rows], Y, cfg.threshold)
    cols = ClassMetricsReport.columns()
    _write_csv(run / A_METRICS, ["seed", "active_users", "n_test"] + cols,
               [[cfg.seed, len(parts.users), len(parts.test)] + [_fmt(getattr(rep, c)) for c in cols]])


def stage_explain(cfg: PipelineConfig, run: Path):
    d = _dataset(cfg, run)
    parts = _partitions(cfg, run, d, oversampled=False)
    ctx = _EvalContext(cfg, run, d, parts)
    out = []
    for user, item in ctx.val_pairs:
        cand = ctx.candidates(user, item)
        if not cand:
            continue
        pc = predicted_context(ctx.ranker(user, item, cand), cfg.top_n)
        out.append(select_explanation(pc, ctx.docs, ctx.tfidf, cfg.keywords_k, cfg.log_base))
    write_explanations(out, run / A_EXPLANATIONS)


def stage_ccr(cfg: PipelineConfig, run: Path):
    d = _dataset(cfg, run)
    parts = _partitions(cfg, run, d, oversampled=False)
    ctx = _EvalContext(cfg, run, d, parts)
    X, keys = context_points(ctx.test_pairs, ctx.candidates, ctx.ranker, ctx.tfidf, ctx.docs,
                             cfg.top_n, cfg.normalise_vectors)
    usable = [k for k in cfg.cluster_k if k <= len(X)]
    if len(usable) < len(cfg.cluster_k):
        log.warning("only %d test contexts; skipping k values %s", len(X),
                    [k for k in cfg.cluster_k if k > len(X)])
    clusters = fit_clusters(X, usable, cfg.stage_seed("cluster"), cfg.cluster_max_iter)
    reports, _ = ccr_evaluation(ctx.val_pairs, ctx.candidates, ctx.ranker, clusters, ctx.tfidf, ctx.docs,
                                cfg.top_n, cfg.stage_seed("ccr"), cfg.keywords_k, cfg.normalise_vectors)
    by_k = {r.k: r for r in reports}
    rows = []
    for k in cfg.cluster_k:
        r = by_k.get(k)
        if r is None:
            rows.append([cfg.seed, k, "nan", "nan", "nan", 0, 1])
        else:
            rows.append([cfg.seed, k, _fmt(r.ccr_ap), _fmt(r.ccr_ar), _fmt(r.delta), r.n_comparisons, int(r.empty)])
    _write_csv(run / A_CCR, ["seed", "k", "ccr_ap", "ccr_ar", "delta", "n_comparisons", "empty"], rows)
    _write_csv(run / A_CCR_TABLE, ["dataset", "metric"] + [f"k={k}" for k in cfg.cluster_k], [
        [d.city or "dataset", "CCR(A,P)"] + [r[2] for r in rows],
        [d.city or "dataset", "CCR(A,R)"] + [r[3] for r in rows],
        [d.city or "dataset", "delta(P-R)"] + [r[4] for r in rows],
        [d.city or "dataset", "#A"] + [r[5] for r in rows],
    ])
    with open(run / A_TAGS, "w", encoding="utf-8") as fh:
        fh.write("k\tcentroid\tsize\ttags\n")
        for k, m in clusters.items():
            sizes = np.bincount(m.labels, minlength=k)
            for j, tags in enumerate(centroid_tags(m, ctx.tfidf, cfg.tag_top)):
                fh.write(f"{k}\t{j}\t{sizes[j]}\t{','.join(tags)}\n")
    if len(X) >= 2 and clusters:
        from .report import cluster_scatter_svg

        xy = pca_2d(X, cfg.stage_seed("cluster"))
        for k, m in clusters.items():
            cluster_scatter_svg(xy, assign_many(m, X), centroid_tags(m, ctx.tfidf, cfg.tag_top),
                                run / f"clusters_k{k}.svg", title=f"{d.city or 'dataset'}: k={k}")


def stage_report(cfg: PipelineConfig, run: Path, status: str = "ok", failed: str | None = None):
    write_manifest(cfg, run, status, failed)


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "label": stage_label,
    "train": stage_train,
    "rank": stage_rank,
    "eval": stage_eval,
    "explain": stage_explain,
    "ccr": stage_ccr,
    "report": stage_report,
}


def write_manifest(cfg: PipelineConfig, run: Path, status: str = "ok", failed: str | None = None) -> Path:
    artifacts = {}
    for p in sorted(run.iterdir()):
        if p.is_file() and p.name != A_MANIFEST:
            artifacts[p.name] = sha256(p)
    manifest = {
        "status": status,
        "failed_stage": failed,
        "seeds": {s: cfg.stage_seed(s) for s in ("split", "mlros", "head", "ccr", "cluster")}
        | {"run": cfg.seed, "provider": cfg.provider_seed},
        "versions": {"dyadexplain": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "artifacts": artifacts,
    }
    path = run / A_MANIFEST
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def run_stage(cfg: PipelineConfig, run, stage: str) -> None:
    """Run one stage against an existing run directory; failures become StageError."""
    if stage not in STAGE_FUNCS:
        raise ConfigurationError(f"unknown stage {stage!r}")
    run = Path(run)
    run.mkdir(parents=True, exist_ok=True)
    try:
        STAGE_FUNCS[stage](cfg, run)
    except ConfigurationError:
        raise
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - every stage failure is reported uniformly
        raise StageError(stage, exc) from exc


# --------------------------------------------------------------------------
# whole runs


@dataclass
class RunResult:
    run_dir: Path
    metrics: dict = field(default_factory=dict)
    ccr: list = field(default_factory=list)

    @property
    def mean_delta(self) -> float:
        vals = [r["delta"] for r in self.ccr if not math.isnan(r["delta"])]
        return float(np.mean(vals)) if vals else math.nan


def _read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _as_number(v: str):
    try:
        return float(v)
    except ValueError:
        return v


def load_result(run) -> RunResult:
    run = Path(run)
    res = RunResult(run)
    if (run / A_METRICS).is_file():
        res.metrics = {k: _as_number(v) for k, v in _read_csv(run / A_METRICS)[0].items()}
    if (run / A_CCR).is_file():
        res.ccr = [{k: _as_number(v) for k, v in r.items()} for r in _read_csv(run / A_CCR)]
    return res


def run_pipeline(cfg: PipelineConfig, out_dir, stages: Sequence[str] = STAGES) -> RunResult:
    """Execute ``stages`` in order into ``out_dir`` and return the headline numbers.

    Resource files are checked before any work. A failing stage leaves its
    predecessors' artifacts in place, writes a manifest marked failed and
    raises StageError naming the stage.
    """
    cfg.validate()
    _resources(cfg)
    run = Path(out_dir)
    run.mkdir(parents=True, exist_ok=True)
    cfg.save(run / A_CONFIG)
    for stage in stages:
        log.info("stage %s -> %s", stage, run)
        try:
            run_stage(cfg, run, stage)
        except StageError:
            write_manifest(cfg, run, "failed", stage)
            raise
    return load_result(run)


# --------------------------------------------------------------------------
# experiment sweeps


SWEEP_COLUMNS = ("active_users", "auc_pr", "auc_roc", "recall", "precision", "f_measure", "error")


def _sweep_one(args):
    cfg, value, out = args
    try:
        res = run_pipeline(cfg.replace(active_users=value), out, stages=STAGES[:5] + ("report",))
        m = res.metrics
        return {"active_users": value, **{c: m[c] for c in SWEEP_COLUMNS[1:-1]}, "error": ""}
    except DyadExplainError as exc:
        return {"active_users": value, **{c: math.nan for c in SWEEP_COLUMNS[1:-1]}, "error": str(exc)}


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def sweep_active_users(cfg: PipelineConfig, values: Sequence[int], out_dir, workers: int = 1) -> list[dict]:
    """One pipeline per active-user count; writes sweep.csv and sweep.svg. Failures are recorded."""
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, int(v), out / f"active_users_{int(v)}") for v in values]
    rows = _map(_sweep_one, jobs, workers)
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, [[_fmt(r[c]) for c in SWEEP_COLUMNS] for r in rows])
    from .report import sweep_svg

    sweep_svg(rows, out / "sweep.svg")
    return rows


DENSITY_COLUMNS = ("dataset", "ratio", "f_measure", "auc_pr", "delta", "seed", "error")


def _density_one(args):
    from .synth import achieved_ratio, generate_synthetic

    cfg, spec, out, name = args
    gen = generate_synthetic(spec, out / "data")
    ratio = achieved_ratio(gen.dataset)
    run_cfg = cfg.replace(dataset=str(gen.reviews_path), city=spec.city,
                          lexicon=str(gen.nouns_path), lemmas=str(gen.lemmas_path))
    try:
        res = run_pipeline(run_cfg, out / "run")
        return {"dataset": name, "ratio": ratio, "f_measure": res.metrics["f_measure"],
                "auc_pr": res.metrics["auc_pr"], "delta": res.mean_delta, "seed": cfg.seed, "error": ""}
    except DyadExplainError as exc:
        return {"dataset": name, "ratio": ratio, "f_measure": math.nan, "auc_pr": math.nan,
                "delta": math.nan, "seed": cfg.seed, "error": str(exc)}


def density_experiment(specs: Sequence, cfg: PipelineConfig, out_dir, workers: int = 1) -> list[dict]:
    """Generate each synthetic corpus, run it, and tabulate density against quality (densest first)."""
    if len(specs) < 2 or len({s.ratio for s in specs}) < 2:
        raise ConfigurationError("density experiment needs at least two specs with distinct ratios")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, s, out / f"ratio_{s.ratio:g}_seed{s.seed}", f"synthetic-r{s.ratio:g}-s{s.seed}")
            for s in specs]
    rows = _map(_density_one, jobs, workers)
    rows.sort(key=lambda r: -r["ratio"])
    _write_csv(out / "density.csv", DENSITY_COLUMNS, [[_fmt(r[c]) for c in DENSITY_COLUMNS] for r in rows])
    return rows
