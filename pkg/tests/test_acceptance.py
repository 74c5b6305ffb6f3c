"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

Criterion 8 trains 20 desk-profile runs and takes roughly a quarter of an hour
on one core.  Set LEVELMOEL_ACCEPTANCE_RUNS to a directory holding earlier
desk runs (laid out as <mode>/seed_<s>/trial_00) to reuse them.
"""

import itertools
import os
import time
from pathlib import Path

import numpy as np
import pytest

from levelmoel.cli import main
from levelmoel.experiment import build_config, reevaluate_manifest, run_experiment
from levelmoel.gan import init_population, mean_tpjs_to_corpus, warm_start
from levelmoel.indicators import NADIR, hypervolume, hypervolume_mc
from levelmoel.levels import Level, extract_patterns, load_bundled_corpus
from levelmoel.metrics import content_diversity_CD, dtw, player_diversity_PD, tpjs, transform
from levelmoel.moea import hv_contributions, knee_point, nondominated_indices, nondominated_sort, sde_survival_select
from levelmoel.nn import MlpParams, channel_softmax, d_hinge_gradients, d_hinge_loss, g_lsq_gradients, g_minmax_gradients, generator_loss
from levelmoel.report import compute_indicators, find_runs, load_run, run_labels
from levelmoel.sim import _simulate_cached, is_playable, simulate

from conftest import flat_level
from test_metrics import brute_dtw, random_count_pair, random_trace
from test_moea import brute_fronts, hv_inclusion_exclusion
from test_nn import SHAPE, check_fd, small_nets
from test_sim import random_platform_level

DTW_TOL = 1e-9
MEAN_TOL = 1e-12
GRAD_TOL = 1e-4
MC_REL_TOL = 0.01
MC_SAMPLES = 1_000_000
WARM_DROP = 0.20
WARM_BUDGET_S = 300
MOEL_BUDGET_S = 2 * 3600
MODES = ("P", "P+PD", "P+CD", "P+PD+CD")
SEEDS = range(5)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        return ok
    return emit


def test_criterion_1_metric_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    dtw_err = 0.0
    for _ in range(50):
        a, b = random_trace(rng, rng.integers(1, 7)), random_trace(rng, rng.integers(1, 7))
        dtw_err = max(dtw_err, abs(dtw(a, b) - brute_dtw(a.points, b.points)))

    traces = [random_trace(rng, rng.integers(1, 12)) for _ in range(8)]
    loop = [dtw(traces[i], traces[j]) for i in range(8) for j in range(8) if i < j]
    pd_err = abs(player_diversity_PD(traces) - sum(loop) / len(loop))
    levels = [random_platform_level(rng) for _ in range(8)]
    pats = [extract_patterns(lv, 2) for lv in levels]
    loop = [tpjs(pats[i], pats[j]) for i in range(8) for j in range(8) if i < j]
    cd_err = abs(content_diversity_CD(levels) - sum(loop) / len(loop))

    js_ok = True
    for _ in range(10_000):
        p, q, equal = random_count_pair(rng)
        pq = tpjs(p, q)
        js_ok &= 0.0 <= pq <= 1.0 and pq == tpjs(q, p) and (pq == 0.0) == equal
    elapsed = time.perf_counter() - t0
    ok = dtw_err <= DTW_TOL and pd_err <= MEAN_TOL and cd_err <= MEAN_TOL and js_ok and elapsed < 10
    assert report(1, ok, f"dtw err {dtw_err:.1e}, PD err {pd_err:.1e}, CD err {cd_err:.1e}, "
                         f"TPJS properties {'hold' if js_ok else 'violated'}, {elapsed:.1f}s")


def test_criterion_2_transform_exactness(report):
    cases = list(itertools.product((0.0, 1.0), (0.0, 200.0), (0.0, 1.0)))
    f = lambda o: (o.f_P, o.f_PD, o.f_CD)
    bad = [c for c in cases if f(transform(*c)) != (1 - c[0], (200 - c[1]) / 100, 1 - c[2])]
    ok = not bad and f(transform(1.0, 200.0, 1.0)) == (0.0, 0.0, 0.0) and f(transform(0.0, 0.0, 0.0)) == (1.0, 2.0, 1.0)
    assert report(2, ok, f"{len(cases) - len(bad)}/{len(cases)} boundary combinations exact")


def test_criterion_3_gradients(report):
    worst = {"hinge": 0.0, "minmax": 0.0, "lsq": 0.0}
    for draw in range(10):
        rng = np.random.default_rng(1000 + draw)
        G, D = small_nets(rng)
        D = MlpParams([w * 3 for w in D.weights], [b + rng.normal(0, 0.5, b.shape) for b in D.biases])
        real = np.eye(3)[rng.integers(0, 3, size=(4, 3, 4))]
        fake = channel_softmax(rng.standard_normal((4, *SHAPE)))
        _, gd = d_hinge_gradients(D, real, fake)
        worst["hinge"] = max(worst["hinge"], check_fd(lambda p: d_hinge_loss(p, real, fake), D, gd, rng))
        z = rng.standard_normal((4, 6))
        for kind, fn in (("minmax", g_minmax_gradients), ("lsq", g_lsq_gradients)):
            _, gg = fn(G, D, z, SHAPE)
            worst[kind] = max(worst[kind], check_fd(lambda p: generator_loss(p, D, z, SHAPE, kind), G, gg, rng))
    # relative error floor of 1e-6 in the denominator, see check_fd
    ok = all(v < GRAD_TOL for v in worst.values())
    assert report(3, ok, "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" (< {GRAD_TOL})")


def test_criterion_4_hypervolume(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        m = int(rng.choice([2, 3]))
        F = rng.random((int(rng.integers(1, 9)), m))
        exact = hypervolume(F, NADIR)
        # sampling box starts at the ideal corner of the set, it holds the whole dominated region
        est = hypervolume_mc(F, NADIR, samples=MC_SAMPLES, rng=rng, lower=F.min(axis=0))
        worst = max(worst, abs(est - exact) / exact)
    mono = True
    for _ in range(200):
        m = int(rng.choice([2, 3]))
        F = rng.random((int(rng.integers(1, 8)), m)) * 1.2
        mono &= hypervolume(np.vstack([F, rng.random(m) * 1.2]), NADIR) >= hypervolume(F, NADIR)
    single = hypervolume([[0.0, 0.0]], NADIR)
    ok = worst <= MC_REL_TOL and mono and abs(single - 1.21) < 1e-12
    assert report(4, ok, f"worst MC rel dev {worst:.2%} (<= 1%), monotone {mono}, single point {single:.12g}")


def test_criterion_5_sorting_selection(report):
    rng = np.random.default_rng(5)
    sort_ok = 0
    for _ in range(20):
        F = rng.integers(0, 6, size=(int(rng.integers(1, 201)), 3)).astype(float)
        sort_ok += nondominated_sort(F) == brute_fronts(F)
    knee_ok = 0
    nadir = [NADIR] * 3
    for _ in range(30):
        F = rng.dirichlet(np.ones(3), size=int(rng.integers(1, 11)))
        F = F[nondominated_indices(F)]
        full = hv_inclusion_exclusion(F, nadir)
        contrib = [full - hv_inclusion_exclusion(np.delete(F, i, axis=0), nadir) for i in range(len(F))]
        knee_ok += knee_point(F, nadir) == int(np.argmax(contrib)) and np.allclose(hv_contributions(F, nadir), contrib, atol=1e-12)
    dup_ok = 0
    for _ in range(50):
        m, n = int(rng.integers(2, 4)), int(rng.integers(3, 12))
        F = rng.dirichlet(np.ones(m), size=n)
        d = int(rng.integers(n))
        removed = set(range(n + 1)) - set(sde_survival_select(np.vstack([F, F[d]]), n))
        dup_ok += len(removed) == 1 and removed <= {d, n}
    ok = sort_ok == 20 and knee_ok == 30 and dup_ok == 50
    assert report(5, ok, f"sort {sort_ok}/20, knee {knee_ok}/30, duplicate removed first {dup_ok}/50")


def test_criterion_6_simulator(report, vocab):
    flat = flat_level(vocab=vocab)
    gap = flat.cells.copy()
    gap[-1, 10:17] = vocab.index("-")
    wall = flat.cells.copy()
    wall[:, 5] = vocab.index("X")
    basic = is_playable(flat, vocab) and not is_playable(Level(gap), vocab) and not is_playable(Level(wall), vocab)

    rng = np.random.default_rng(6)
    lv = random_platform_level(rng, 14, 28, vocab)
    first = simulate(lv, vocab)
    same = 0
    for _ in range(100):
        _simulate_cached.cache_clear()
        same += simulate(Level(lv.cells.copy()), vocab) == first

    flips, pairs = 0, 0
    while pairs < 200:
        base = random_platform_level(rng, vocab=vocab)
        if is_playable(base, vocab):
            continue
        cells = base.cells.copy()
        cells[rng.integers(0, base.height), rng.integers(0, base.width)] = vocab.index("E")
        flips += is_playable(Level(cells), vocab)
        pairs += 1
    ok = basic and same == 100 and flips == 0
    assert report(6, ok, f"flat/gap/wall {'as expected' if basic else 'WRONG'}, "
                         f"identical reruns {same}/100, hazard flips {flips}/200")


def test_criterion_7_warm_start_signal(report, vocab):
    t0 = time.perf_counter()
    corpus = load_bundled_corpus(vocab)
    cfg = build_config({"profile": "desk", "pop_size": "4", "warm_epochs": "30"}).train
    drops = []
    for seed in SEEDS:
        start, _ = init_population(cfg, vocab, np.random.default_rng([seed, 0, 1]))
        trained, _ = warm_start(corpus, cfg, vocab, np.random.default_rng([seed, 0, 1]))
        before = mean_tpjs_to_corpus([m.generator for m in start], corpus, cfg.n_samples, cfg, vocab, np.random.default_rng([seed, 7]))
        after = mean_tpjs_to_corpus([m.generator for m in trained], corpus, cfg.n_samples, cfg, vocab, np.random.default_rng([seed, 7]))
        drops.append((before - after) / before)
    elapsed = time.perf_counter() - t0
    med = float(np.median(drops))
    ok = med >= WARM_DROP and elapsed < WARM_BUDGET_S
    assert report(7, ok, f"median TPJS drop {med:.1%} (>= 20%), per seed "
                         + " ".join(f"{d:.0%}" for d in drops) + f", {elapsed:.0f}s")


def _desk_runs(root: Path) -> float:
    t0 = time.perf_counter()
    for mode in MODES:
        for seed in SEEDS:
            out = root / mode / f"seed_{seed}"
            if (out / "trial_00" / "manifest.json").is_file():
                continue
            cfg = build_config({"profile": "desk", "mode": mode, "seed": str(seed), "output": str(out), "save_samples": "false"})
            run_experiment(cfg, progress=lambda s: None)
    return time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_8_moel_direction(report, tmp_path_factory):
    root = Path(os.environ.get("LEVELMOEL_ACCEPTANCE_RUNS") or tmp_path_factory.mktemp("moel"))
    elapsed = _desk_runs(root)
    runs = [load_run(p) for p in find_runs([root])]
    res = compute_indicators(runs)
    first, final = {}, {}
    for run, label in zip(runs, run_labels(runs)):
        hv = {r["generation"]: r["HV"] for r in res.rows if r["run"] == label}
        first[run.mode, run.seed] = hv[min(hv)]
        final[run.mode, run.seed] = hv[max(hv)]
    med = {m: float(np.median([final[m, s] for s in SEEDS])) for m in MODES}
    tri = "P+PD+CD"
    a = med[tri] >= float(np.median([first[tri, s] for s in SEEDS]))
    wins = {m: sum(final[tri, s] >= final[m, s] for s in SEEDS) for m in MODES if m != tri}
    b = all(w >= 4 for w in wins.values())
    c = med["P"] < min(v for m, v in med.items() if m != "P")
    ok = a and b and c and elapsed < MOEL_BUDGET_S
    assert report(8, ok, f"(a) {a} (b) {b} wins {wins} (c) {c}; median final HV "
                         + ", ".join(f"{m} {v:.4f}" for m, v in med.items()) + f"; {elapsed / 60:.1f} min")


def test_criterion_9_reproducibility(report, tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert main(["-q", "train", "--profile", "desk", "--generations", "3", "--seed", "21",
                     "--mode", "P+PD+CD", "--save-samples", "false", "--output", str(d)]) == 0
    same = all((dirs[0] / "trial_00" / f).read_bytes() == (dirs[1] / "trial_00" / f).read_bytes()
               for f in ("objectives.csv", "evaluations.csv"))
    pairs = reevaluate_manifest(dirs[0] / "trial_00")
    exact = sum(logged == fresh for logged, fresh in pairs)
    ok = same and exact == len(pairs) > 0
    assert report(9, ok, f"objective CSVs byte-identical {same}, manifest re-evaluation exact {exact}/{len(pairs)}")
