"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``[ACC nn] PASS|FAIL`` line with its measured
values and elapsed time, then asserts. The synthetic planted-preference
fixture (100 users, 4 taste groups, 40 items, ~2000 positive reviews) is run
under the desk preset (surrogate width 16, hidden size 8).
"""

import math
import time
import warnings

import numpy as np
import pytest

from dyadexplain.config import PipelineConfig
from dyadexplain.dyadic import filter_positive
from dyadexplain.evaluation.ccr import ccr
from dyadexplain.evaluation.clustering import kmeanspp_fit
from dyadexplain.evaluation.metrics import classification_metrics, random_ranking, rank_scores_at_k, roc_auc
from dyadexplain.head import HeadConfig, HeadParams, PARAM_ORDER, loss_and_gradients
from dyadexplain.labeling import build_targets, minority_labels, mlros_oversample, select_active_users, split
from dyadexplain.pipeline import density_experiment, run_pipeline, sweep_active_users
from dyadexplain.synth import SynthSpec, generate_synthetic

from test_labeling import _imbalanced, brute_targets, random_graph
from test_metrics import _close, oracle

SEEDS = range(5)
pytestmark = pytest.mark.slow


def verdict(capsys, number, title, ok, detail, elapsed, limit):
    within = elapsed <= limit
    ok = bool(ok) and within
    with capsys.disabled():
        print(f"\n[ACC {number:02d}] {'PASS' if ok else 'FAIL'} {title}: {detail} "
              f"({elapsed:.1f}s, limit {limit:.0f}s)")
    assert within, f"took {elapsed:.1f}s, limit {limit}s"
    return ok


def fixture_config(data, seed, **kw):
    return PipelineConfig.desk(dataset=str(data.reviews_path), lexicon=str(data.nouns_path),
                               lemmas=str(data.lemmas_path), seed=seed, **kw)


@pytest.fixture(scope="module")
def fixture_runs(tmp_path_factory):
    """Full pipeline on the planted-preference fixture for five seeds."""
    root = tmp_path_factory.mktemp("fixture")
    t0 = time.perf_counter()
    runs = []
    for s in SEEDS:
        data = generate_synthetic(SynthSpec(seed=s), root / f"data{s}")
        runs.append((data, run_pipeline(fixture_config(data, s), root / f"run{s}")))
    return runs, time.perf_counter() - t0


def test_01_labeling_oracle(capsys):
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        d = filter_positive(random_graph(rng))
        if not len(d):
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            users = select_active_users(d, int(rng.integers(1, 16)))
        got = [(s.review_id, tuple(int(x) for x in s.target)) for s in build_targets(d, users).samples]
        mismatches += got != brute_targets(d, users)
    ok = verdict(capsys, 1, "labeling oracle", mismatches == 0, f"{mismatches}/50 graphs differ",
                 time.perf_counter() - t0, 10)
    assert ok


def test_02_gradient_check(capsys):
    t0 = time.perf_counter()
    cfg = HeadConfig(hidden_size=4, dense_size=5, output_size=6, dropout_rate=0.0, seed=3)
    params = HeadParams.init(16, cfg)
    rng = np.random.default_rng(0)
    E = rng.normal(size=(5, 16))
    y = (rng.random(6) < 0.5).astype(float)
    _, grads = loss_and_gradients(params, E, y, cfg)
    sizes = np.array([getattr(params, n).size for n in PARAM_ORDER])
    ends = np.cumsum(sizes)
    worst = 0.0
    for c in rng.choice(ends[-1], size=100, replace=False):
        t = int(np.searchsorted(ends, c, side="right"))
        flat = getattr(params, PARAM_ORDER[t]).reshape(-1)
        j = c - (ends[t] - sizes[t])
        old = flat[j]
        flat[j] = old + 1e-6
        up, _ = loss_and_gradients(params, E, y, cfg)
        flat[j] = old - 1e-6
        down, _ = loss_and_gradients(params, E, y, cfg)
        flat[j] = old
        numeric = (up - down) / 2e-6
        analytic = grads[PARAM_ORDER[t]].reshape(-1)[j]
        if abs(numeric) > 1e-9 or abs(analytic) > 1e-9:
            worst = max(worst, abs(analytic - numeric) / max(abs(numeric), abs(analytic)))
    ok = verdict(capsys, 2, "gradient check", worst < 1e-4, f"max relative error {worst:.2e} on 100 coordinates",
                 time.perf_counter() - t0, 30)
    assert ok


def test_03_planted_preference_auc(capsys, fixture_runs):
    runs, elapsed = fixture_runs
    aucs = [r.metrics["auc_roc"] for _, r in runs]
    mean = float(np.mean(aucs))
    ok = verdict(capsys, 3, "planted-preference AUC-ROC", mean >= 0.75,
                 f"mean {mean:.3f} over seeds {[round(a, 3) for a in aucs]} (need >= 0.75)", elapsed, 600)
    assert ok


def test_04_ccr_improvement(capsys, fixture_runs):
    runs, elapsed = fixture_runs
    deltas = [next(c["delta"] for c in r.ccr if int(c["k"]) == 5) for _, r in runs]
    mean = float(np.mean(deltas))
    ok = verdict(capsys, 4, "CCR delta at k=5", mean >= 5.0,
                 f"mean {mean:.1f} pp over seeds {[round(d, 1) for d in deltas]} (need >= 5)", elapsed, 300)
    assert ok


def _at_most_one_inversion(values):
    return sum(b > a for a, b in zip(values, values[1:])) <= 1


def test_05_active_user_sweep_trend(capsys, tmp_path):
    t0 = time.perf_counter()
    data = generate_synthetic(SynthSpec(seed=0), tmp_path / "data")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = sweep_active_users(fixture_config(data, 0), [25, 50, 100, 200], tmp_path / "sweep")
    pr = [r["auc_pr"] for r in rows]
    prec = [r["precision"] for r in rows]
    ok = not any(r["error"] for r in rows) and _at_most_one_inversion(pr) and _at_most_one_inversion(prec)
    ok = verdict(capsys, 5, "active-user sweep trend", ok,
                 f"AUC-PR {[round(x, 3) for x in pr]}, precision {[round(x, 3) for x in prec]}",
                 time.perf_counter() - t0, 1200)
    assert ok


def test_06_density_trend(capsys, tmp_path):
    t0 = time.perf_counter()
    wins, pairs = 0, []
    for s in SEEDS:
        specs = [SynthSpec(n_users=500, ratio=r, seed=s) for r in (1.6, 2.1)]
        rows = density_experiment(specs, PipelineConfig.desk(seed=s), tmp_path / f"s{s}")
        dense, sparse = rows
        pairs.append((round(dense["f_measure"], 3), round(sparse["f_measure"], 3)))
        wins += dense["f_measure"] > sparse["f_measure"]
    ok = verdict(capsys, 6, "density trend", wins >= 4,
                 f"denser wins {wins}/5, F (dense, sparse) {pairs}", time.perf_counter() - t0, 1200)
    assert ok


def test_07_metric_oracle(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    bad = 0
    for _ in range(100):
        n = int(rng.integers(1, 101))
        scores = np.round(rng.random(n), int(rng.integers(1, 3)))
        labels = (rng.random(n) < rng.random()).astype(int)
        got = classification_metrics(scores, labels).as_dict()
        bad += any(not _close(got[k], v) for k, v in oracle(scores, labels).items())
    constant = roc_auc(np.full(40, 0.3), np.r_[1, 0, rng.integers(0, 2, 38)])
    ok = verdict(capsys, 7, "metric oracle", bad == 0 and constant == 0.5,
                 f"{bad}/100 instances differ, constant scorer AUC-ROC {constant}", time.perf_counter() - t0, 10)
    assert ok


def test_08_ranking_closed_forms(capsys):
    t0 = time.perf_counter()
    pool = [f"x{i}" for i in range(20)]
    s = rank_scores_at_k(pool[:2] + ["r"] + pool[2:], {"r"}, 10)
    closed = (math.isclose(s["ndcg"], 0.5) and math.isclose(s["precision"], 0.1)
              and s["recall"] == 1.0 and math.isclose(s["f1"], 2 / 11))
    m, trials = 37, 1000
    items = [f"i{k}" for k in range(m)]
    hits = sum("i0" in random_ranking(items, seed=t, k=10) for t in range(trials))
    p = min(10, m) / m
    z = abs(hits / trials - p) / math.sqrt(p * (1 - p) / trials)
    ok = verdict(capsys, 8, "ranking closed forms", closed and z <= 3,
                 f"NDCG {s['ndcg']:.3f} P {s['precision']:.2f} R {s['recall']:.2f} F1 {s['f1']:.4f}; "
                 f"RAND hit rate {hits / trials:.3f} vs {p:.3f} (z={z:.2f})", time.perf_counter() - t0, 30)
    assert ok


def test_09_mlros_contract(capsys):
    t0 = time.perf_counter()
    problems = []
    for n in (10, 100, 1000):
        samples = _imbalanced(int(n / 0.7) + 1, seed=n)
        parts = split(samples, seed=n)
        train = parts.train[:n]
        val_ids = [x.review_id for x in parts.validation]
        test_ids = [x.review_id for x in parts.test]
        out = mlros_oversample(train, 20, seed=1)
        Y = np.stack([x.target for x in train])
        mino = minority_labels(Y)
        if len(out) != math.ceil(1.2 * n):
            problems.append(f"n={n}: size {len(out)}")
        if out[:n] != train or any(x not in train or not x.target[mino].any() for x in out[n:]):
            problems.append(f"n={n}: bad clone")
        if [x.review_id for x in parts.validation] != val_ids or [x.review_id for x in parts.test] != test_ids:
            problems.append(f"n={n}: held-out partitions changed")
    ok = verdict(capsys, 9, "ML-ROS contract", not problems, "; ".join(problems) or "sizes 12, 120, 1200",
                 time.perf_counter() - t0, 10)
    assert ok


def test_10_determinism(capsys, tmp_path):
    t0 = time.perf_counter()
    data = generate_synthetic(SynthSpec(seed=0), tmp_path / "data")
    a = run_pipeline(fixture_config(data, 0), tmp_path / "a")
    b = run_pipeline(fixture_config(data, 0), tmp_path / "b")
    same = all((a.run_dir / f).read_bytes() == (b.run_dir / f).read_bytes()
               for f in ("metrics.csv", "explanations.tsv"))
    ok = verdict(capsys, 10, "determinism", same, "metrics.csv and explanations.tsv bit-identical" if same
                 else "outputs differ", time.perf_counter() - t0, 600)
    assert ok


def test_11_kmeans_properties(capsys):
    t0 = time.perf_counter()
    X = np.random.default_rng(0).normal(size=(200, 4))
    monotone, self_ccr = True, []
    for k in (3, 5, 7, 9):
        m = kmeanspp_fit(X, k, seed=k)
        tr = m.inertia_trace
        monotone &= all(b <= a + 1e-9 for a, b in zip(tr, tr[1:]))
        self_ccr.append(ccr(m, X, X))
    ok = verdict(capsys, 11, "k-means properties", monotone and all(c == 100.0 for c in self_ccr),
                 f"inertia non-increasing: {monotone}, CCR(X,X) {self_ccr}", time.perf_counter() - t0, 10)
    assert ok
