import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sceneselect import learners, sampling
from sceneselect.dataset import generate_dataset, part_indices
from sceneselect.errors import ConfigError
from sceneselect.profiling import build_repository, segment_semantic_scenes, train_scene_encoder
from sceneselect.sampling import (
    SamplingConfig,
    adaptive_sampling,
    probe_suitability,
    random_sampling,
    thompson_round,
    well_sampled_threshold,
)

from conftest import small_generator_config
from test_profiling import quick_profiling_cfg, quick_train_cfg


@pytest.fixture(scope="module")
def small_repo():
    ds = generate_dataset(small_generator_config(num_cells=4, clips_per_cell=2, frames_per_clip=60))
    scenes = segment_semantic_scenes(ds)
    enc = train_scene_encoder(ds, scenes, 8, quick_train_cfg())
    repo = build_repository(ds, scenes, enc, quick_profiling_cfg(n=4, delta=0.0))
    return ds, repo


class TestThreshold:
    def test_frozen_reference_values(self):
        # high-precision evaluation of the bound (50 decimal digits): 753.76803...
        assert well_sampled_threshold(100, 0.95) == pytest.approx(753.768033, abs=1e-5)
        assert well_sampled_threshold(50, 0.9) == pytest.approx(305.080089, abs=1e-5)

    def test_limit_theta_to_zero(self):
        assert well_sampled_threshold(5, 1e-280) < 1e-10

    def test_monotone_in_theta(self):
        values = [well_sampled_threshold(40, t) for t in (0.5, 0.9, 0.99)]
        assert values[0] < values[1] < values[2]

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(min_value=2, max_value=10_000),
        st.floats(min_value=0.01, max_value=0.99),
    )
    def test_positive_and_finite(self, g, theta):
        value = well_sampled_threshold(g, theta)
        assert math.isfinite(value) and value > 0

    def test_singleton_scene(self):
        assert well_sampled_threshold(1, 0.9) == 0.0

    def test_invalid_inputs(self):
        with pytest.raises(ConfigError):
            well_sampled_threshold(0, 0.9)
        with pytest.raises(ConfigError):
            well_sampled_threshold(10, 1.0)
        with pytest.raises(ConfigError):
            well_sampled_threshold(10, 0.0)


def two_arm_state(a0=(3.0, 2.0), a1=(1.0, 1.0), gammas=((0, 1, 2), (3, 4, 5))):
    arms = [
        sampling.ArmState(0, a0[0], a0[1], set(), np.array(gammas[0]), well_sampled_threshold(3, 0.9)),
        sampling.ArmState(1, a1[0], a1[1], set(), np.array(gammas[1]), well_sampled_threshold(3, 0.9)),
    ]
    return sampling.SamplingState(arms=arms, pools=[[], []], theta=0.9, kappa=10, seed=0)


class TestThompsonRound:
    def test_update_rule_exact(self):
        # seed chosen so the (3,2) arm wins the draw
        state = two_arm_state()
        rng = np.random.default_rng(1)
        chosen = thompson_round(state, rng)
        if chosen == 0:
            assert (state.arms[0].alpha, state.arms[0].beta) == (4.0, 2.0)
            assert (state.arms[1].alpha, state.arms[1].beta) == (1.0, 2.0)
        else:
            assert (state.arms[1].alpha, state.arms[1].beta) == (2.0, 1.0)
            assert (state.arms[0].alpha, state.arms[0].beta) == (3.0, 3.0)

    def test_dominant_arm_wins_monte_carlo(self):
        rng = np.random.default_rng(7)
        wins = 0
        for _ in range(1000):
            state = two_arm_state(a0=(100.0, 1.0), a1=(1.0, 100.0))
            if thompson_round(state, rng) == 0:
                wins += 1
        assert wins > 990

    def test_all_frozen_returns_none(self):
        state = two_arm_state()
        for arm in state.arms:
            arm.exhausted = True
        before = [(a.alpha, a.beta) for a in state.arms]
        assert thompson_round(state, np.random.default_rng(0)) is None
        assert [(a.alpha, a.beta) for a in state.arms] == before

    def test_update_conservation(self):
        state = two_arm_state()
        rng = np.random.default_rng(3)
        for _ in range(25):
            active = [a for a in state.arms if a.active]
            total = sum(a.alpha + a.beta for a in active)
            if thompson_round(state, rng) is None:
                break
            still = [a for a in state.arms if a in active]
            assert sum(a.alpha + a.beta for a in still) == total + len(active)


class TestProbe:
    def test_constant_model(self, small_ds):
        m = learners.new_classifier(small_ds.schema.feature_dim, 4, small_ds.schema.num_classes, 0)
        for arr in (m.W1, m.W2):
            arr[...] = 0.0
        m.b2[:] = 0.0
        m.b2[0] = 10.0  # always predicts class 0
        hit = next(s for s in small_ds.samples if s.label == 0)
        miss = next(s for s in small_ds.samples if s.label != 0)
        assert probe_suitability(m, hit) is True
        assert probe_suitability(m, miss) is False

    def test_probe_is_pure(self, small_ds):
        m = learners.new_classifier(small_ds.schema.feature_dim, 4, small_ds.schema.num_classes, 1)
        s = small_ds.samples[0]
        first = probe_suitability(m, s)
        for _ in range(3):
            assert probe_suitability(m, s) == first


class TestAdaptive:
    def test_zero_budget(self, small_repo):
        ds, repo = small_repo
        state = adaptive_sampling(ds, repo, SamplingConfig(0.9, 0, 1))
        assert all(len(pool) == 0 for pool in state.pools)

    def test_budget_respected_and_pools_aligned(self, small_repo):
        ds, repo = small_repo
        state = adaptive_sampling(ds, repo, SamplingConfig(0.9, 37, 2))
        assert state.distinct_drawn <= 37
        lengths = {len(pool) for pool in state.pools}
        assert lengths == {state.distinct_drawn}

    def test_single_tiny_arm_stops_at_exhaustion(self, small_repo):
        ds, repo = small_repo
        import dataclasses

        entry = repo.entries[0]
        tiny = dataclasses.replace(
            entry,
            scene=dataclasses.replace(entry.scene, train_indices=entry.scene.train_indices[:3]),
        )
        small = type(repo)(entries=[tiny])
        state = adaptive_sampling(ds, small, SamplingConfig(0.9, 10, 3))
        assert len(state.arms[0].sampled) <= 3
        assert state.arms[0].exhausted
        assert state.distinct_drawn == 3

    def test_stopping_soundness_freeze_before_exhaustion(self, small_repo):
        # threshold(3, 0.1) ~ 1.54, so a 3-sample scene freezes as
        # well-sampled after two draws, one sample still undrawn
        ds, repo = small_repo
        import dataclasses

        entry = repo.entries[0]
        tiny = dataclasses.replace(
            entry,
            scene=dataclasses.replace(entry.scene, train_indices=entry.scene.train_indices[:3]),
        )
        state = adaptive_sampling(ds, type(repo)(entries=[tiny]), SamplingConfig(0.1, 10, 3))
        arm = state.arms[0]
        assert len(arm.sampled) == 2
        assert arm.well_sampled and not arm.exhausted
        assert state.distinct_drawn == 2
        # a frozen arm receives no further draws or posterior updates
        before = (arm.alpha, arm.beta)
        assert thompson_round(state, np.random.default_rng(0)) is None
        assert (arm.alpha, arm.beta) == before

    def test_pool_consistency_reproducible_from_inputs(self, small_repo):
        ds, repo = small_repo
        state = adaptive_sampling(ds, repo, SamplingConfig(0.9, 50, 4))
        for j, pool in enumerate(state.pools):
            for idx, bit in pool:
                assert bit == probe_suitability(repo.entries[j].model, ds.samples[idx])

    def test_sampled_sets_stay_inside_gamma(self, small_repo):
        ds, repo = small_repo
        state = adaptive_sampling(ds, repo, SamplingConfig(0.9, 60, 5))
        for arm, entry in zip(state.arms, repo.entries):
            assert arm.sampled <= set(int(i) for i in entry.scene.train_indices)

    def test_deterministic(self, small_repo):
        ds, repo = small_repo
        a = adaptive_sampling(ds, repo, SamplingConfig(0.9, 40, 6))
        b = adaptive_sampling(ds, repo, SamplingConfig(0.9, 40, 6))
        assert a.pools == b.pools
        assert [(x.alpha, x.beta) for x in a.arms] == [(x.alpha, x.beta) for x in b.arms]

    def test_empty_repository_rejected(self, small_repo):
        ds, repo = small_repo
        with pytest.raises(ConfigError):
            adaptive_sampling(ds, type(repo)(entries=[]), SamplingConfig(0.9, 5, 1))


class TestRandom:
    def test_full_budget_probes_every_training_sample_once(self, small_repo):
        ds, repo = small_repo
        train = part_indices(ds, "train")
        state = random_sampling(ds, repo, len(train) + 100, seed=1)
        drawn = [idx for idx, _ in state.pools[0]]
        assert sorted(drawn) == sorted(train.tolist())
        assert len(drawn) == len(set(drawn))

    def test_same_seed_identical(self, small_repo):
        ds, repo = small_repo
        a = random_sampling(ds, repo, 30, seed=9)
        b = random_sampling(ds, repo, 30, seed=9)
        assert a.pools == b.pools

    def test_draws_proportional_to_scene_sizes(self):
        # skewed benchmark: cell 0 is 10x larger; pooled draw counts over 20
        # seeds must fit the sizes by a chi-squared test at alpha = 0.01
        ds = generate_dataset(
            small_generator_config(
                num_cells=4, clips_per_cell=1, frames_per_clip=60, cell_weights=(10, 1, 1, 1)
            )
        )
        scenes = segment_semantic_scenes(ds)
        enc = train_scene_encoder(ds, scenes, 8, quick_train_cfg())
        repo = build_repository(ds, scenes, enc, quick_profiling_cfg(n=3, delta=0.0))
        lookup = {s.attrs: s.scene_id for s in scenes}
        sizes = np.array([len(s.sample_indices) for s in scenes], dtype=float)
        kappa = 150
        counts = np.zeros(len(scenes))
        for seed in range(20):
            state = random_sampling(ds, repo, kappa, seed=seed)
            for idx, _ in state.pools[0]:
                counts[lookup[ds.samples[idx].attrs]] += 1
        expected = sizes / sizes.sum() * counts.sum()
        _, pvalue = stats.chisquare(counts, expected)
        assert pvalue > 0.01


class TestBalance:
    def test_adaptive_beats_random_in_aggregate(self, skew_results):
        # pooled positive-label counts over the 10 skewed replicates: the
        # budget the bandit routes away from the oversized scene shows up as
        # a systematically lower coefficient of variation
        def cov(x):
            x = np.asarray(x, float)
            return x.std() / x.mean()

        total_ad = sum(r["adaptive_positives"] for r in skew_results)
        total_rn = sum(r["random_positives"] for r in skew_results)
        assert cov(total_ad) < cov(total_rn)


class TestPoolsIO:
    def test_payload_round_trip(self, tmp_path, small_repo):
        ds, repo = small_repo
        state = adaptive_sampling(ds, repo, SamplingConfig(0.9, 25, 8))
        path = tmp_path / "pools.json"
        sampling.save_pools(path, state, "dhash", "rhash")
        from sceneselect.artifacts import read_artifact

        body = read_artifact(path, "pools")
        assert body["kappa"] == 25 and body["theta"] == 0.9
        assert len(body["rows"]) == state.distinct_drawn
        assert len(body["arms"]) == len(repo.entries)
        for pos, row in enumerate(body["rows"]):
            assert row["sample_index"] == state.pools[0][pos][0]
            assert row["bits"] == [int(state.pools[j][pos][1]) for j in range(len(state.pools))]
