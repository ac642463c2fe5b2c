"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

The end-to-end criteria (1 to 4) share cached synthetic-port runs; the first
test that needs a run pays for it.
"""

import functools
import math
from pathlib import Path

import numpy as np
import pytest

from berthloc import geohash
from berthloc.cli import main, replay
from berthloc.divergence import PortArea, evaluate, kl_divergence_mc
from berthloc.geo import haversine
from berthloc.geometry import convex_hull, min_area_rect
from berthloc.ingest import load_raw
from berthloc.mixture import EMTrace, FitOptions, n_parameters, run_em, select_n_components
from berthloc.pipeline import Hyperparameters, ablation_config, cmd_evaluate, cmd_localize, restrict
from berthloc.preprocess import preprocess_full, preprocess_splits
from berthloc.stopdetect import dbscan
from berthloc.synth import demo_port, score_against_truth, write_outputs
from berthloc.tuner import SearchSpace, TpeOptions, TuningTrial, branin, optimize, random_search, tpe_suggest
from berthloc.seeding import derive_rng
from berthloc.stopdetect import DbscanParams
from berthloc.types import GeoPoint
from helpers_models import four_clusters, gaussian
from oracles import dbscan_bruteforce, gaussian_bhattacharyya, gaussian_kl, hull_bruteforce, min_rect_sweep

# end-to-end settings
E2E_TRIALS = 40
E2E_RANGE = (3, 12)
ABLATION_TRIALS, ABLATION_WARM = 12, 8
SEEDS = (0, 1, 2)


def verdict(n: int, ok: bool, detail: str) -> None:
    print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


@functools.lru_cache(maxsize=None)
def synthetic_port(seed: int):
    root = Path(f"/tmp/berthloc-acceptance/seed{seed}")
    root.mkdir(parents=True, exist_ok=True)
    spec = demo_port(seed=seed)
    _, truth = write_outputs(spec, root / "ais.jsonl", root / "truth.geojson")
    config = spec.port_config(ncomponents_range=E2E_RANGE, rng_seed=seed, mci_samples=10_000, mci_reruns=50)
    return config, truth, load_raw(root / "ais.jsonl", config)


def _tune(raw, config, trials, warm):
    from berthloc.tuner import tune
    pair = preprocess_splits(raw)
    result = tune(pair.split_a, pair.split_b, config, trials=trials, warm_start=warm)
    return pair, Hyperparameters.from_tuning(result)


@functools.lru_cache(maxsize=None)
def full_run(seed: int):
    """Tuned (40 trials), localized and evaluated synthetic port, with the baseline."""
    config, truth, raw = synthetic_port(seed)
    pair, hp = _tune(raw, config, E2E_TRIALS, config.tpe_warm_start)
    berths = cmd_localize(config, preprocess_full(raw), hp).berths
    report = cmd_evaluate(config, pair, hp, raw)
    return hp, score_against_truth(berths, truth), report


@functools.lru_cache(maxsize=None)
def ablation_bd(seed: int, axis: str, value) -> float:
    config, _, raw = synthetic_port(seed)
    cfg = ablation_config(config, axis, value)
    pair, hp = _tune(restrict(raw, cfg), cfg, ABLATION_TRIALS, ABLATION_WARM)
    return cmd_evaluate(cfg, pair, hp).methods[0].mean


@pytest.mark.acceptance
def test_c01_end_to_end_recovery():
    hp, score, _ = full_run(0)
    ok = score.recall >= 0.8 and score.precision >= 0.6 and 5 <= hp.n_components <= 9
    verdict(1, ok, f"recall={score.recall:.2f} precision={score.precision:.2f} n_components={hp.n_components} "
                   f"eps={hp.epsilon:.1f} min_points={hp.min_points}")


@pytest.mark.acceptance
def test_c02_split_consistency():
    _, _, report = full_run(0)
    m = report.by_method("gmm_geohash")
    verdict(2, m.estimate is not None and m.estimate.reruns == 50 and m.mean < 1.5,
            f"BD mean={m.mean:.3f} std={m.std:.3f} over 50 reruns x 10000 samples")


@pytest.mark.acceptance
def test_c03_beats_baseline():
    pairs = []
    for seed in SEEDS:
        report = full_run(seed)[2]
        pairs.append((report.by_method("gmm_geohash").mean, report.by_method("steenari").mean))
    verdict(3, all(p < b for p, b in pairs), "proposed vs baseline BD per seed: "
            + ", ".join(f"{p:.3f}<{b:.3f}" for p, b in pairs))


@pytest.mark.acceptance
def test_c04_ablation_directions():
    aug = [(ablation_bd(s, "aug_points", 0), ablation_bd(s, "aug_points", 2)) for s in SEEDS]
    poi = [(ablation_bd(s, "poi", 3 * 86400.0), ablation_bd(s, "poi", 30 * 86400.0)) for s in SEEDS]
    ok = all(a > b for a, b in aug) and all(a > b for a, b in poi)
    verdict(4, ok, "aug 0 vs 2: " + ", ".join(f"{a:.3f}>{b:.3f}" for a, b in aug)
            + "; poi 3d vs 30d: " + ", ".join(f"{a:.3f}>{b:.3f}" for a, b in poi))


def test_c05_dbscan_oracle():
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(1, 201))
        centers = rng.uniform(-300, 300, (int(rng.integers(1, 6)), 2))
        pts = centers[rng.integers(len(centers), size=n)] + rng.normal(scale=rng.uniform(5, 60), size=(n, 2))
        dist = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
        eps, minpts = float(rng.uniform(5, 70)), int(rng.integers(2, 26))
        labels = dbscan(dist, eps, minpts)
        core, expected = dbscan_bruteforce(dist.tolist(), eps, minpts)
        core = np.array(core, dtype=bool)
        got = {frozenset(np.flatnonzero(core & (labels == c)).tolist()) for c in set(labels[core].tolist())}
        mismatches += got != expected
    verdict(5, mismatches == 0, f"{100 - mismatches}/100 instances match brute force")


def test_c06_em_monotone():
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(100):
        X = four_clusters(i, n=int(rng.integers(20, 80)), spread=float(rng.uniform(0.3, 4)))
        trace = EMTrace()
        run_em(X, int(rng.integers(1, 9)), FitOptions(tolerance=1e-12, max_iterations=300), derive_rng(6, i), trace)
        ll = np.array(trace.log_likelihoods)
        starts = [0] + list(trace.reseed_iterations)
        for s, e in zip(starts, starts[1:] + [len(ll)]):
            if e - s > 1:
                worst = min(worst, float(np.diff(ll[s:e]).min()))
    verdict(6, worst >= -1e-9, f"largest per-iteration decrease {-worst:.2e} nats over 100 initializations")


def test_c07_mdl():
    formula_ok = all(n_parameters(k) == 6 * k - 1 for k in range(1, 301))
    hits = 0
    for seed in range(20):
        report = select_n_components(four_clusters(seed), four_clusters(seed + 1000), (2, 10), FitOptions(seed=seed))
        hits += report.selected_n_components == 4
    verdict(7, formula_ok and hits >= 18, f"N_M formula exact={formula_ok}; true K selected in {hits}/20 seeds")


def test_c08_divergence_oracles():
    p, q = gaussian((0, 0)), gaussian((1, 0))
    kl_true = gaussian_kl([0, 0], np.eye(2), [1, 0], np.eye(2))
    bd_true = gaussian_bhattacharyya([0, 0], np.eye(2), [1, 0], np.eye(2))
    kl = kl_divergence_mc(p, q, 10_000, 8)
    # holds all but about 1e-8 of both densities' mass
    area = PortArea.from_ring([(-6, -6), (7, -6), (7, 6), (-6, 6)])
    bd = evaluate(p, q, area, 10_000, 200, 8).mean
    self_bd = evaluate(p, p, area, 10_000, 50, 9).mean
    ok = abs(kl - kl_true) <= 0.05 and abs(bd - bd_true) <= 0.01 and self_bd < 0.05
    verdict(8, ok, f"KL={kl:.4f} (closed form {kl_true:.3f}); BD={bd:.4f} (closed form {bd_true:.3f}); "
                   f"BD(p,p)={self_bd:.4f}")


def test_c09_geometry_oracles():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 51))
        pts = rng.normal(size=(n, 2)) * rng.uniform(0.5, 50, 2) + rng.uniform(-100, 100, 2)
        oracle, _ = min_rect_sweep(pts)
        worst = max(worst, abs(min_area_rect(pts).area - oracle) / oracle)
    hull_ok = 0
    for _ in range(30):
        pts = np.round(rng.uniform(-10, 10, (int(rng.integers(3, 31)), 2)), 1)
        hull_ok += {tuple(p) for p in convex_hull(pts)} == hull_bruteforce(pts)
    verdict(9, worst <= 1e-9 and hull_ok == 30,
            f"max relative rectangle area error {worst:.1e} over 100 sets; hull matches on {hull_ok}/30")


def test_c10_tpe_quality():
    tpe_best, rnd_best = [], []
    for seed in range(20):
        res = optimize(lambda p, i: (branin(p), 0), TpeOptions(trials=100, warm_start=30, seed=seed))
        tpe_best.append(res.best.objective)
        rnd_best.append(min(random_search(branin, 100, seed + 10_000)))
    space = SearchSpace()
    rng = np.random.default_rng(10)
    history = [TuningTrial(i, DbscanParams(float(e), int(m)), 5, float(o), 0.0) for i, (e, m, o) in
               enumerate(zip(rng.choice(space.epsilon, 60), rng.choice(space.min_points, 60), rng.normal(size=60)))]
    opts = TpeOptions(warm_start=10, candidates=4)
    in_bounds = 0
    for i in range(10_000):
        prop = tpe_suggest(history[: 5 + i % 56], space, opts, derive_rng(10, i))
        in_bounds += (space.epsilon[0] <= prop.epsilon <= space.epsilon[1]
                      and space.min_points[0] <= prop.min_points <= space.min_points[1])
    tpe_med, rnd_med = float(np.median(tpe_best)), float(np.median(rnd_best))
    verdict(10, tpe_med < rnd_med and in_bounds == 10_000,
            f"median best TPE={tpe_med:.4f} vs random={rnd_med:.4f}; {in_bounds}/10000 proposals in bounds")


def test_c11_determinism(small_port, tmp_path):
    w = tmp_path
    small_port["config"].save(w / "config.json")
    steps = [
        ["ingest", "--input", str(small_port["root"] / "ais.jsonl"), "--config", str(w / "config.json"),
         "--out", str(w / "raw.jsonl")],
        ["preprocess", "--in", str(w / "raw.jsonl"), "--out-a", str(w / "a.jsonl"), "--out-b", str(w / "b.jsonl"),
         "--out-full", str(w / "full.jsonl")],
        ["tune", "--split-a", str(w / "a.jsonl"), "--split-b", str(w / "b.jsonl"), "--out", str(w / "trials.jsonl")],
        ["localize", "--in", str(w / "full.jsonl"), "--trials-file", str(w / "trials.jsonl"),
         "--out", str(w / "berths.geojson")],
        ["evaluate", "--split-a", str(w / "a.jsonl"), "--split-b", str(w / "b.jsonl"), "--raw", str(w / "raw.jsonl"),
         "--trials-file", str(w / "trials.jsonl"), "--out", str(w / "eval.json"), "--csv", str(w / "eval.csv")],
    ]
    assert all(main(argv) == 0 for argv in steps)
    first = {name: (w / name).read_bytes() for name in ("berths.geojson", "eval.csv")}
    codes = [replay(w / "berths.geojson.manifest.json"), replay(w / "eval.json.manifest.json")]
    same = {name: (w / name).read_bytes() == data for name, data in first.items()}
    verdict(11, codes == [0, 0] and all(same.values()), f"replay exit codes {codes}; byte-identical {same}")


def test_c12_geohash():
    h = geohash.encode(GeoPoint(57.64911, 10.40744), 9)
    rng = np.random.default_rng(12)
    worst = 0.0
    for lat, lon in zip(rng.uniform(-85, 85, 1000), rng.uniform(-180, 180, 1000)):
        c = geohash.decode(geohash.encode(GeoPoint(float(lat), float(lon)), 9))
        worst = max(worst, float(haversine(lat, lon, c.lat, c.lon)))
    verdict(12, h == "u4pruydqq" and worst < 3.5, f"encode={h}; max displacement {worst:.3f} m over 1000 points")
