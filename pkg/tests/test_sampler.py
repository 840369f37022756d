from __future__ import annotations

import numpy as np
import pytest

from compass import (
    Assignment,
    ClusterModel,
    Dataset,
    EmbeddingMatrix,
    ExampleRecord,
    SamplerConfig,
    build_manifest,
    compute_quotas,
    instance_scores,
    mismatch_profile,
    run_sampling,
    tabulate_counts,
)
from compass._util import stable_rng, unit_rows
from compass.mismatch import ClusterCounts
from compass.sampler import SamplingError, WEIGHT_FLOOR
from conftest import make_pipeline_dataset


class TestComputeQuotas:
    def test_zero_weight_zero_quota(self):
        rng = stable_rng(0, "q")
        q = compute_quotas([0.0, 1.0], budget=0.8, target_size=10, rng=rng)
        assert q[0] == 0

    def test_integral_raw_value_is_exact(self):
        rng = stable_rng(1, "q")
        q = compute_quotas([1.0], budget=1.0, target_size=7, rng=rng)
        assert q.tolist() == [7]

    def test_all_zero_weights_all_zero_quotas(self):
        rng = stable_rng(2, "q")
        assert compute_quotas([0.0, 0.0], budget=0.8, target_size=10, rng=rng).tolist() == [0, 0]

    def test_monte_carlo_expectation(self):
        # raw quotas [4.8, 3.2]: realized values must stay within the floor
        # and ceiling, and the mean over many draws must approach the raw
        totals = np.zeros(2)
        n_runs = 10_000
        for seed in range(n_runs):
            q = compute_quotas([0.6, 0.4], budget=0.8, target_size=10, rng=stable_rng(seed, "q"))
            assert q[0] in (4, 5) and q[1] in (3, 4)
            totals += q
        means = totals / n_runs
        assert np.all(np.abs(means - np.array([4.8, 3.2])) / np.array([4.8, 3.2]) < 0.01)


def _two_centroid_model():
    return ClusterModel(method="kmeans", k=2,
                        centroids=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))


def _scored_fixture():
    """Three candidates in cluster 0 with dist-to-own-centroid 0.25 and
    margins chosen so the middle one's boundary score is exactly 0.4."""
    t = np.sqrt(0.4375)
    s_values = [0.65, -0.13, -0.65]  # margins 0.10, 0.88, 1.40
    rows = np.array([[0.75, s, np.sqrt(max(0.4375 - s * s, 0.0))] for s in s_values])
    rows = unit_rows(rows)
    recs = tuple(ExampleRecord(id=f"a{i}", lang="sw", role="aux") for i in range(3))
    ds = Dataset(recs, EmbeddingMatrix(rows.astype(np.float32)))
    model = _two_centroid_model()
    asn = Assignment(labels=np.zeros(3, dtype=np.int64), source_model=model)
    return ds, asn


class TestInstanceScores:
    def test_zero_distance_gives_unit_prototype_score(self):
        model = _two_centroid_model()
        rows = model.centroids[0][None, :].astype(np.float32)
        ds = Dataset((ExampleRecord(id="a0", lang="sw", role="aux"),), EmbeddingMatrix(rows))
        asn = Assignment(labels=np.zeros(1, dtype=np.int64), source_model=model)
        assert instance_scores(ds, [0], asn, k=0, alpha=0.0)[0] == pytest.approx(1.0)

    def test_alpha_endpoints_select_pure_scores(self):
        ds, asn = _scored_fixture()
        s0 = instance_scores(ds, [0, 1, 2], asn, k=0, alpha=0.0)
        s1 = instance_scores(ds, [0, 1, 2], asn, k=0, alpha=1.0)
        half = instance_scores(ds, [0, 1, 2], asn, k=0, alpha=0.5)
        assert np.allclose(half, 0.75 * s0 + 0.25 * s1)

    def test_blend_arithmetic(self):
        ds, asn = _scored_fixture()
        # middle candidate: prototype 1/(1+0.25)=0.8, boundary 0.4 by
        # construction -> blend at alpha=0.5 is 0.75*0.8 + 0.25*0.4 = 0.7
        s = instance_scores(ds, [0, 1, 2], asn, k=0, alpha=0.5)
        assert s[1] == pytest.approx(0.7, abs=1e-6)  # rows stored as float32

    def test_boundary_score_favors_boundary_candidates(self):
        ds, asn = _scored_fixture()
        s1 = instance_scores(ds, [0, 1, 2], asn, k=0, alpha=1.0)
        # candidate 0 has the smallest margin to the other centroid
        assert s1[0] == pytest.approx(1.0) and s1[2] == pytest.approx(0.0)

    def test_single_cluster_boundary_defaults_half(self):
        model = ClusterModel(method="kmeans", k=1, centroids=np.array([[1.0, 0.0, 0.0]]))
        rows = unit_rows(np.array([[0.9, 0.1, 0.0], [0.8, -0.2, 0.1]]))
        recs = tuple(ExampleRecord(id=f"a{i}", lang="sw", role="aux") for i in range(2))
        ds = Dataset(recs, EmbeddingMatrix(rows.astype(np.float32)))
        asn = Assignment(labels=np.zeros(2, dtype=np.int64), source_model=model)
        assert np.allclose(instance_scores(ds, [0, 1], asn, k=0, alpha=1.0), 0.5)

    def test_wrong_cluster_rejected(self):
        ds, asn = _scored_fixture()
        with pytest.raises(SamplingError):
            instance_scores(ds, [0], asn, k=1, alpha=0.0)


def _profile_for(ds, asn):
    return mismatch_profile(tabulate_counts(ds, asn))


class TestRunSampling:
    def test_zero_quotas_empty_plan(self):
        ds, _, _ = make_pipeline_dataset(n_eval=(0, 0, 0, 0, 0))
        from compass import assign, fit_kmeans

        model, _ = fit_kmeans(ds.embeddings, k_range=(5, 5, 1), seeds_per_k=3, rng_seed=0)
        asn = assign(ds.embeddings, model)
        plan = run_sampling(ds, asn, _profile_for(ds, asn), SamplerConfig(seed=1))
        assert plan.selections == ()

    def test_deterministic_for_fixed_seed(self, pipeline_dataset):
        ds, _, _ = pipeline_dataset
        from compass import assign, fit_kmeans

        model, _ = fit_kmeans(ds.embeddings, k_range=(5, 5, 1), seeds_per_k=3, rng_seed=0)
        asn = assign(ds.embeddings, model)
        profile = _profile_for(ds, asn)
        p1 = run_sampling(ds, asn, profile, SamplerConfig(seed=42))
        p2 = run_sampling(ds, asn, profile, SamplerConfig(seed=42))
        assert p1 == p2

    def test_only_aux_records_selected(self, pipeline_dataset):
        ds, _, _ = pipeline_dataset
        from compass import assign, fit_kmeans

        model, _ = fit_kmeans(ds.embeddings, k_range=(5, 5, 1), seeds_per_k=3, rng_seed=0)
        asn = assign(ds.embeddings, model)
        plan = run_sampling(ds, asn, _profile_for(ds, asn), SamplerConfig(seed=3))
        roles = {r.id: r.role for r in ds.records}
        assert plan.selections
        assert all(roles[s.example_id] == "aux" for s in plan.selections)

    def test_replacement_caps_at_three_picks(self):
        model = ClusterModel(method="kmeans", k=1, centroids=np.array([[1.0, 0.0, 0.0]]))
        rows = unit_rows(np.array([[1.0, 0.0, 0.0], [0.9, 0.3, 0.0]]))
        recs = (ExampleRecord(id="t0", lang="sw", role="target"),
                ExampleRecord(id="a0", lang="sw", role="aux"))
        ds = Dataset(recs, EmbeddingMatrix(rows.astype(np.float32)))
        asn = Assignment(labels=np.zeros(2, dtype=np.int64), source_model=model)
        counts = ClusterCounts(n_t=(1,), n_aux=(1,), n_eval=(5,), noise={})
        profile = mismatch_profile(counts)
        plan = run_sampling(ds, asn, profile,
                            SamplerConfig(budget=5.0, seed=0, replacement_mode=True))
        assert [s.pick_count for s in plan.selections] == [1, 2, 3]
        assert all(s.example_id == "a0" for s in plan.selections)
        assert plan.underfilled and plan.shortfall == (2,)

    def test_underfilled_without_replacement(self):
        model = ClusterModel(method="kmeans", k=1, centroids=np.array([[1.0, 0.0, 0.0]]))
        rows = unit_rows(np.array([[1.0, 0.0, 0.0], [0.9, 0.3, 0.0]]))
        recs = (ExampleRecord(id="t0", lang="sw", role="target"),
                ExampleRecord(id="a0", lang="sw", role="aux"))
        ds = Dataset(recs, EmbeddingMatrix(rows.astype(np.float32)))
        asn = Assignment(labels=np.zeros(2, dtype=np.int64), source_model=model)
        profile = mismatch_profile(ClusterCounts(n_t=(1,), n_aux=(1,), n_eval=(5,), noise={}))
        plan = run_sampling(ds, asn, profile, SamplerConfig(budget=3.0, seed=0))
        assert len(plan.selections) == 1
        assert plan.underfilled and plan.shortfall == (2,)

    def test_selection_total_bounded_by_quota_sum(self, pipeline_dataset):
        ds, _, _ = pipeline_dataset
        from compass import assign, fit_kmeans

        model, _ = fit_kmeans(ds.embeddings, k_range=(5, 5, 1), seeds_per_k=3, rng_seed=0)
        asn = assign(ds.embeddings, model)
        plan = run_sampling(ds, asn, _profile_for(ds, asn), SamplerConfig(seed=5))
        assert len(plan.selections) == sum(plan.quotas)
        assert sum(plan.quotas) <= int(np.ceil(0.8 * plan.target_size)) + len(plan.quotas)

    def test_diversity_penalty_lifts_dissimilar_candidate(self):
        # pool: two near-duplicates plus one dissimilar candidate, quota 2.
        # with the penalty on, the dissimilar item must enter the selection
        # more often than in the penalty-free ablation.
        base = unit_rows(np.array([
            [1.0, 0.00, 0.0],
            [1.0, 0.02, 0.0],   # near-duplicate of the first (sim > 0.99)
            [0.88, 0.47, 0.0],  # dissimilar (sim ~ 0.89 to the duplicates)
        ]))
        centroid = unit_rows(np.array([[1.0, 0.1, 0.0]]))[0]
        model = ClusterModel(method="kmeans", k=1, centroids=centroid[None, :])
        recs = (ExampleRecord(id="t0", lang="sw", role="target"),
                ExampleRecord(id="dup-a", lang="sw", role="aux"),
                ExampleRecord(id="dup-b", lang="sw", role="aux"),
                ExampleRecord(id="lone", lang="sw", role="aux"))
        rows = np.vstack([centroid[None, :], base]).astype(np.float32)
        ds = Dataset(recs, EmbeddingMatrix(rows))
        asn = Assignment(labels=np.zeros(4, dtype=np.int64), source_model=model)
        profile = mismatch_profile(ClusterCounts(n_t=(1,), n_aux=(3,), n_eval=(5,), noise={}))

        hits = {0.0: 0, 0.2: 0}
        n_runs = 2000
        for seed in range(n_runs):
            for delta in hits:
                cfg = SamplerConfig(budget=2.0, delta=delta, seed=seed)
                plan = run_sampling(ds, asn, profile, cfg)
                ids = plan.selected_ids()
                assert len(ids) == 2
                if "lone" in ids:
                    hits[delta] += 1
        assert hits[0.2] > hits[0.0]

    def test_penalized_weight_never_increases_with_more_neighbors(self):
        scores = np.array([0.9, 0.5, 0.1])
        for p in range(4):
            w_now = np.maximum(scores - 0.2 * p, WEIGHT_FLOOR)
            w_next = np.maximum(scores - 0.2 * (p + 1), WEIGHT_FLOOR)
            assert np.all(w_next <= w_now)

    def test_profile_model_mismatch_rejected(self, pipeline_dataset):
        ds, _, _ = pipeline_dataset
        from compass import assign, fit_kmeans

        model, _ = fit_kmeans(ds.embeddings, k_range=(5, 5, 1), seeds_per_k=3, rng_seed=0)
        asn = assign(ds.embeddings, model)
        bad_profile = mismatch_profile(ClusterCounts(n_t=(1,), n_aux=(1,), n_eval=(1,), noise={}))
        with pytest.raises(SamplingError):
            run_sampling(ds, asn, bad_profile)

    def test_manifest_lists_target_and_selected(self, pipeline_dataset):
        ds, _, _ = pipeline_dataset
        from compass import assign, fit_kmeans

        model, _ = fit_kmeans(ds.embeddings, k_range=(5, 5, 1), seeds_per_k=3, rng_seed=0)
        asn = assign(ds.embeddings, model)
        plan = run_sampling(ds, asn, _profile_for(ds, asn), SamplerConfig(seed=1))
        manifest = build_manifest(plan, ds)
        assert len(manifest["target_ids"]) == plan.target_size
        assert manifest["selected_ids"] == plan.selected_ids()

    def test_curriculum_orders_centroid_distance_upward(self):
        # single-cluster pool with ample quota: early picks should sit
        # nearer the centroid than late picks in most seeded runs
        from scipy.stats import spearmanr

        positives = 0
        for seed in range(20):
            ds, _, _ = make_pipeline_dataset(
                seed=seed, n_target=(30,), n_eval=(30,), n_aux=(80,), dim=6, spread=0.25)
            from compass import assign, fit_kmeans

            model, _ = fit_kmeans(ds.embeddings, k_range=(1, 1, 1), seeds_per_k=2, rng_seed=seed)
            asn = assign(ds.embeddings, model)
            plan = run_sampling(ds, asn, _profile_for(ds, asn),
                                SamplerConfig(budget=0.9, seed=seed))
            if len(plan.selections) < 20:
                continue
            emb = {r.id: i for i, r in enumerate(ds.records)}
            data = unit_rows(ds.embeddings.data)
            dists = [1.0 - float(data[emb[s.example_id]] @ model.centroids[s.cluster])
                     for s in plan.selections]
            rho = spearmanr(np.arange(len(dists)), dists).statistic
            if rho > 0:
                positives += 1
        assert positives >= 14
