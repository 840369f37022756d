"""Acceptance suite: one test per release criterion, each printing a
PASS line with its measured numbers. Run with ``pytest tests/test_acceptance.py -v -s``.

Everything here runs on synthetic fixtures only.
"""
from __future__ import annotations

import json
import time
from collections import Counter

import numpy as np
from scipy.stats import spearmanr

from compass import (
    BlobSpec,
    DriftScript,
    EmbeddingMatrix,
    MonitorState,
    SamplerConfig,
    assign,
    build_reference,
    fit_density,
    fit_kmeans,
    fit_taylor_butina,
    gen_blobs,
    gen_drift_stream,
    incremental_density_assign,
    incremental_kmeans_update,
    js_divergence,
    mismatch_profile,
    run_sampling,
    select_anchors,
    tabulate_counts,
)
from compass._util import unit_rows
from compass.clustering import CoverageError, dbcv_score, silhouette_score
from conftest import make_pipeline_dataset
from oracles import adjusted_rand_index, brute_dbcv, brute_silhouette, sign_test_p_value


def _report(criterion: str, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: PASS ({detail})", flush=True)


def _fitted_pipeline(seed=0, **kwargs):
    ds, _, _ = make_pipeline_dataset(seed=seed, **kwargs)
    k = len(kwargs.get("n_target", (1,) * 5))
    model, _ = fit_kmeans(ds.embeddings, k_range=(k, k, 1), seeds_per_k=3, rng_seed=seed)
    asn = assign(ds.embeddings, model)
    profile = mismatch_profile(tabulate_counts(ds, asn))
    return ds, asn, profile


def _cluster_distribution(counts, extra: Counter, k: int) -> np.ndarray:
    vec = np.asarray(counts, dtype=float) + np.array([extra.get(i, 0) for i in range(k)])
    return vec / vec.sum()


def test_c1_distribution_matching():
    """Sampling at B=0.8 must at least halve the train-vs-eval divergence,
    averaged over 100 seeds, in under 10 seconds."""
    start = time.perf_counter()
    ds, asn, profile = _fitted_pipeline(seed=0)
    k = profile.k
    eval_dist = np.asarray(profile.n_eval, float)
    eval_dist /= eval_dist.sum()
    js_pre = js_divergence(
        _cluster_distribution(profile.n_t, Counter(), k), eval_dist
    )
    ratios = []
    for seed in range(100):
        plan = run_sampling(ds, asn, profile, SamplerConfig(budget=0.8, seed=seed))
        per_cluster = Counter(s.cluster for s in plan.selections)
        js_post = js_divergence(
            _cluster_distribution(profile.n_t, per_cluster, k), eval_dist
        )
        ratios.append(js_post / js_pre)
    elapsed = time.perf_counter() - start
    mean_ratio = float(np.mean(ratios))
    assert mean_ratio <= 0.5, f"mean post/pre divergence ratio {mean_ratio:.3f} exceeds 0.5"
    assert elapsed < 10.0, f"criterion took {elapsed:.1f}s"
    _report("C1 distribution-matching",
            f"js ratio {mean_ratio:.3f} over 100 seeds in {elapsed:.1f}s")


def test_c2_budget_expectation():
    """Mean selection count over 10,000 seeded runs within 1% of B*|target|;
    exactly zero when every cluster weight is zero."""
    ds, asn, profile = _fitted_pipeline(
        seed=1, n_target=(6, 4), n_eval=(20, 20), n_aux=(60, 60), dim=6
    )
    target = 0.8 * 10
    total = 0
    for seed in range(10_000):
        total += len(run_sampling(ds, asn, profile, SamplerConfig(budget=0.8, seed=seed)).selections)
    mean = total / 10_000
    assert abs(mean - target) / target < 0.01, f"mean {mean:.3f} vs {target}"

    ds0, asn0, profile0 = _fitted_pipeline(
        seed=2, n_target=(6, 4), n_eval=(0, 0), n_aux=(60, 60), dim=6
    )
    assert profile0.no_eval_signal
    for seed in range(50):
        plan = run_sampling(ds0, asn0, profile0, SamplerConfig(budget=0.8, seed=seed))
        assert len(plan.selections) == 0
    _report("C2 budget-expectation", f"mean {mean:.4f} vs target {target}; zero-signal exact")


def test_c3_curriculum_ordering():
    """Selection order correlates positively with centroid distance (early
    picks prototypical, late picks boundary) in at least 90 of 100 seeds."""
    ds, asn, profile = _fitted_pipeline(
        seed=3, n_target=(30,), n_eval=(30,), n_aux=(90,), dim=6, spread=0.25
    )
    data = unit_rows(ds.embeddings.data)
    row_of = {r.id: i for i, r in enumerate(ds.records)}
    centroid = asn.source_model.centroids[0]
    positives = 0
    quotas_seen = []
    for seed in range(100):
        plan = run_sampling(ds, asn, profile, SamplerConfig(budget=0.9, seed=seed))
        quotas_seen.append(sum(plan.quotas))
        assert sum(plan.quotas) >= 20, "fixture must allocate a quota of at least 20"
        dists = [1.0 - float(data[row_of[s.example_id]] @ centroid) for s in plan.selections]
        if spearmanr(np.arange(len(dists)), dists).statistic > 0:
            positives += 1
    assert positives >= 90, f"positive Spearman in only {positives}/100 seeds"
    _report("C3 curriculum-ordering", f"{positives}/100 seeds positive, quota >= 20")


def _duplicate_rich_fixture():
    """Single-cluster pool: 8 near-duplicate triplets close to the centroid
    plus 20 dispersed singles."""
    from compass import Assignment, ClusterModel, Dataset, ExampleRecord

    rng = np.random.default_rng(17)
    dim = 6
    centroid = unit_rows(rng.normal(size=dim))
    rows, recs = [], []
    for g in range(8):
        base = unit_rows(centroid + rng.normal(scale=0.05, size=dim))
        for j in range(3):
            rows.append(unit_rows(base + rng.normal(scale=0.005, size=dim)))
            recs.append(ExampleRecord(id=f"dup-{g}-{j}", lang="sw", role="aux"))
    for i in range(20):
        rows.append(unit_rows(centroid + rng.normal(scale=0.35, size=dim)))
        recs.append(ExampleRecord(id=f"single-{i}", lang="sw", role="aux"))
    for i in range(20):
        rows.append(unit_rows(centroid + rng.normal(scale=0.05, size=dim)))
        recs.append(ExampleRecord(id=f"t-{i}", lang="sw", role="target"))
    for i in range(30):
        rows.append(unit_rows(centroid + rng.normal(scale=0.2, size=dim)))
        recs.append(ExampleRecord(id=f"e-{i}", lang="sw", role="eval"))
    data = np.vstack(rows).astype(np.float32)
    ds = Dataset(tuple(recs), EmbeddingMatrix(data))
    model = ClusterModel(method="kmeans", k=1, centroids=centroid[None, :])
    asn = Assignment(labels=np.zeros(len(ds), dtype=np.int64), source_model=model)
    profile = mismatch_profile(tabulate_counts(ds, asn))
    return ds, asn, profile


def test_c4_diversity_penalty():
    """Paired over 100 seeds, the penalty strictly reduces the number of
    selected high-similarity pairs (sign test p < 0.01)."""
    ds, asn, profile = _duplicate_rich_fixture()
    data = unit_rows(ds.embeddings.data)
    row_of = {r.id: i for i, r in enumerate(ds.records)}

    def high_sim_pairs(plan) -> int:
        idx = [row_of[s.example_id] for s in plan.selections]
        sub = data[idx] @ data[idx].T
        return int(np.sum(np.triu(sub > 0.90, k=1)))

    wins = losses = 0
    for seed in range(100):
        on = high_sim_pairs(run_sampling(ds, asn, profile,
                                         SamplerConfig(budget=0.8, delta=0.2, seed=seed)))
        off = high_sim_pairs(run_sampling(ds, asn, profile,
                                          SamplerConfig(budget=0.8, delta=0.0, seed=seed)))
        if on < off:
            wins += 1
        elif on > off:
            losses += 1
    p_value = sign_test_p_value(wins, losses)
    assert p_value < 0.01, f"sign test p={p_value:.4g} (wins {wins}, losses {losses})"
    _report("C4 diversity-penalty", f"wins {wins}, losses {losses}, p={p_value:.2e}")


def _drift_mixtures(k: int = 8, delta: float = 0.24):
    """Four phase mixtures over k clusters: each phase owns one signature
    bin with mass delta; the rest is shared uniformly by four common bins,
    so every pair of phases sits at divergence exactly delta."""
    common = (1.0 - delta) / 4.0
    mixes = []
    for sig in range(4):
        m = [0.0] * k
        m[sig] = delta
        for j in range(4, 8):
            m[j] = common
        mixes.append(tuple(m))
    return mixes


def _run_trigger_protocol(theta: float, stream, stream_labels, increment: int,
                          ref_counts, phase_tags):
    state = MonitorState(build_reference(ref_counts, np.zeros(len(ref_counts))),
                         n_clusters=len(ref_counts), window_size=1000, theta_js=theta)
    fires = false_pos = 0
    last_update_phase = phase_tags[0]
    for i, (rec, lbl) in enumerate(zip(stream.records, stream_labels)):
        state.observe(rec.id, int(lbl))
        if (i + 1) % increment == 0:
            if state.check_trigger().fired:
                fires += 1
                if phase_tags[i] == last_update_phase:
                    false_pos += 1
                state.complete_update_cycle()  # reference <- window empirical
                last_update_phase = phase_tags[i]
    return fires, false_pos


def test_c5_trigger_table_reproduction():
    """Phased drift with 500-sample increments: theta 0.15 fires on each of
    the four transitions and nowhere else; theta 0.05 over-fires with a high
    false-positive share; theta 0.30 barely fires. Under 30 seconds."""
    start = time.perf_counter()
    ds, truth = gen_blobs(BlobSpec(n_clusters=8, points_per_cluster=30, dim=12,
                                   spread=0.03, seed=5))
    model, _ = fit_kmeans(ds.embeddings, k_range=(8, 8, 1), seeds_per_k=4, rng_seed=5)
    fitted = assign(ds.embeddings, model).labels
    remap = {gt: int(np.bincount(fitted[truth == gt]).argmax()) for gt in range(8)}
    mixes = []
    for m in _drift_mixtures():
        out = [0.0] * 8
        for gt, p in enumerate(m):
            out[remap[gt]] += p
        mixes.append(tuple(out))
    phases = tuple(
        (tag, mix, 2000)
        for tag, mix in zip(("T1", "T2", "T3", "T4", "T5"),
                            (mixes[0], mixes[1], mixes[2], mixes[3], mixes[0]))
    )
    script = DriftScript(phases=phases, increment=500)
    stream = gen_drift_stream(script, model, seed=42, spread=0.02)
    stream_labels = assign(stream.embeddings, model).labels
    ref_counts = np.round(np.asarray(mixes[0]) * 100).astype(int)

    results = {
        theta: _run_trigger_protocol(theta, stream, stream_labels, 500,
                                     ref_counts, stream.phase_tags)
        for theta in (0.05, 0.15, 0.30)
    }
    elapsed = time.perf_counter() - start

    fires_15, fp_15 = results[0.15]
    assert fires_15 == 4 and fp_15 == 0, f"theta=0.15 gave {results[0.15]}"
    fires_05, fp_05 = results[0.05]
    assert fires_05 > 4, f"theta=0.05 fired only {fires_05} times"
    assert fp_05 / fires_05 >= 0.30, f"theta=0.05 FP rate {fp_05 / fires_05:.2f}"
    fires_30, _ = results[0.30]
    assert fires_30 <= 1, f"theta=0.30 fired {fires_30} times"
    assert elapsed < 30.0, f"criterion took {elapsed:.1f}s"
    _report("C5 trigger-table",
            f"0.15 -> {results[0.15]}, 0.05 -> {results[0.05]}, "
            f"0.30 -> {results[0.30]} in {elapsed:.1f}s")


def test_c6_clustering_oracles():
    """Validity indices match brute-force references; k-means recovers
    planted blobs almost always; sphere exclusion never under-covers."""
    rng = np.random.default_rng(12)
    X = unit_rows(rng.normal(size=(200, 6)))
    labels = rng.integers(-1, 4, size=200)
    sil_gap = abs(silhouette_score(X, labels) - brute_silhouette(X, labels))
    dbcv_gap = abs(dbcv_score(X, labels) - brute_dbcv(X, labels))
    assert sil_gap < 1e-9, f"silhouette gap {sil_gap:.2e}"
    assert dbcv_gap < 1e-6, f"dbcv gap {dbcv_gap:.2e}"

    recovered = 0
    for seed in range(100):
        ds, truth = gen_blobs(BlobSpec(n_clusters=3, points_per_cluster=20, dim=8,
                                       spread=0.05, seed=seed))
        model, _ = fit_kmeans(ds.embeddings, k_range=(3, 3, 1), seeds_per_k=3, rng_seed=seed)
        if adjusted_rand_index(assign(ds.embeddings, model).labels, truth) >= 0.99:
            recovered += 1
    assert recovered >= 95, f"blob recovery in only {recovered}/100 seeds"

    covered = attempted = 0
    for seed in range(20):
        ds, _ = gen_blobs(BlobSpec(n_clusters=3, points_per_cluster=15, dim=8,
                                   spread=0.04 + 0.01 * (seed % 4), seed=seed))
        try:
            model, _ = fit_taylor_butina(ds.embeddings)
        except CoverageError:
            continue
        attempted += 1
        if model.params["coverage"] >= 0.95:
            covered += 1
    assert attempted > 0 and covered == attempted
    _report("C6 clustering-oracles",
            f"sil gap {sil_gap:.1e}, dbcv gap {dbcv_gap:.1e}, "
            f"ARI {recovered}/100, butina coverage {covered}/{attempted}")


def test_c7_incremental_consistency():
    """Full-rate single-batch centroid updates equal one Lloyd mean step
    exactly; frozen-tree assignment agrees with a batch refit on a
    stationary stream of 500 points."""
    ds, _ = gen_blobs(BlobSpec(n_clusters=3, points_per_cluster=25, dim=8, spread=0.05, seed=9))
    model, _ = fit_kmeans(ds.embeddings, k_range=(3, 3, 1), seeds_per_k=3, rng_seed=9)
    labels = assign(ds.embeddings, model).labels
    updated = incremental_kmeans_update(model, ds.embeddings.data, labels, eta=1.0)
    data = unit_rows(ds.embeddings.data)
    for k in range(3):
        assert np.array_equal(updated.centroids[k], unit_rows(data[labels == k].mean(axis=0)))

    base_ds, base_truth = gen_blobs(BlobSpec(n_clusters=3, points_per_cluster=40, dim=8,
                                             spread=0.05, seed=21))
    dmodel, _ = fit_density(base_ds.embeddings,
                            grid={"min_cluster_size": [10], "min_samples": [5]})
    base_labels = assign(base_ds.embeddings, dmodel).labels
    mass = np.bincount(base_labels[base_labels >= 0], minlength=dmodel.k).astype(float)
    mixture = tuple(mass / mass.sum())
    script = DriftScript(phases=(("a", mixture, 250), ("b", mixture, 250)))
    stream = gen_drift_stream(script, dmodel, seed=9, spread=0.05)
    incremental = incremental_density_assign(dmodel, stream.embeddings.data).labels

    combined = EmbeddingMatrix(
        np.vstack([base_ds.embeddings.data, stream.embeddings.data]).astype(np.float32))
    refit, _ = fit_density(combined, grid={"min_cluster_size": [10], "min_samples": [5]})
    refit_labels = assign(combined, refit).labels
    mapping = {}
    for c in range(refit.k):
        members = np.nonzero(refit_labels[: len(base_ds)] == c)[0]
        if members.size:
            votes = base_labels[members]
            mapping[c] = int(np.bincount(votes[votes >= 0] + 1).argmax() - 1)
    mapped = np.array([mapping.get(c, -1) if c >= 0 else -1 for c in refit_labels[len(base_ds):]])
    agreement = float(np.mean(mapped == incremental))
    assert agreement >= 0.90, f"incremental/batch agreement {agreement:.3f}"
    _report("C7 incremental-consistency",
            f"full-rate update exact; stream agreement {agreement:.3f}")


def test_c8_anchor_exactness():
    """Every anchor is a per-cluster nearest-to-centroid member under the
    proportional allocation, and buffers nest across fractions."""
    ds, _, _ = make_pipeline_dataset(seed=8)
    model, _ = fit_kmeans(ds.embeddings, k_range=(5, 5, 1), seeds_per_k=3, rng_seed=1)
    asn = assign(ds.embeddings, model)
    data = unit_rows(ds.embeddings.data)

    previous: set[str] = set()
    for fraction in (0.01, 0.05, 0.10, 0.20):
        buf = select_anchors(ds, asn, model, fraction=fraction)
        ids = set(buf.ids())
        assert previous.issubset(ids), f"buffer at {fraction} not nested"
        previous = ids
        by_cluster: dict[int, list[str]] = {}
        for a in buf.anchors:
            by_cluster.setdefault(a.cluster, []).append(a.example_id)
        for k, chosen in by_cluster.items():
            members = np.nonzero(asn.labels == k)[0]
            dists = 1.0 - data[members] @ model.centroids[k]
            ranked = sorted(zip(dists, (ds.records[i].id for i in members)))
            expected = {rid for _, rid in ranked[: len(chosen)]}
            assert set(chosen) == expected, f"cluster {k} anchors not argmin at {fraction}"
    _report("C8 anchor-exactness", "argmin verified, buffers nested at 1/5/10/20%")


def test_c9_cli_determinism(tmp_path):
    """Every subcommand, re-run with identical inputs and seed, writes
    byte-identical artifacts."""
    from compass import dataio
    from compass.cli import main

    ds, _, _ = make_pipeline_dataset(seed=4)
    dataio.write_records(ds.records, tmp_path / "records.jsonl")
    dataio.write_embeddings(ds.embeddings, tmp_path / "embeddings.bin")
    config = {
        "seed": 7,
        "paths": {
            "records": str(tmp_path / "records.jsonl"),
            "embeddings": str(tmp_path / "embeddings.bin"),
            "stream_records": str(tmp_path / "stream_records.jsonl"),
            "stream_embeddings": str(tmp_path / "stream_embeddings.bin"),
            "out_dir": str(tmp_path),
        },
        "clustering": {"method": "kmeans", "k_min": 5, "k_max": 5, "k_step": 1,
                       "seeds_per_k": 3},
        "registry": {"entries": {"sw": "adapter-sw"}, "base_model": "base"},
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2))
    inputs = {"config.json", "records.jsonl", "embeddings.bin"}

    def run_everything() -> dict[str, bytes]:
        for cmd in ("ingest", "cluster", "mismatch", "sample"):
            assert main([cmd, "--config", str(cfg_path)]) == 0
        model = dataio.load_cluster_model(tmp_path / "cluster_model.json")
        mixture = (0.2,) * 5
        stream = gen_drift_stream(
            DriftScript(phases=(("a", mixture, 600), ("b", mixture, 600))),
            model, seed=7, spread=0.02)
        dataio.write_records(stream.records, tmp_path / "stream_records.jsonl")
        dataio.write_embeddings(stream.embeddings, tmp_path / "stream_embeddings.bin")
        assert main(["monitor", "--config", str(cfg_path)]) in (0, 3)
        for cmd in ("anchors", "recipe"):
            assert main([cmd, "--config", str(cfg_path)]) == 0
        return {
            f.name: f.read_bytes()
            for f in sorted(tmp_path.iterdir())
            if f.is_file() and f.name not in inputs
        }

    first = run_everything()
    for name in first:
        (tmp_path / name).unlink()
    second = run_everything()
    assert set(first) == set(second)
    mismatched = [name for name in first if first[name] != second[name]]
    assert not mismatched, f"non-identical artifacts: {mismatched}"
    _report("C9 cli-determinism", f"{len(first)} artifacts byte-identical across reruns")
