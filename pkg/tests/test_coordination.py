"""Tests for the global registry, profile matching and onboarding protocol."""

import pickle

import numpy as np
import pytest

from gladsim.coordination import (
    COLD,
    GLAD,
    GlobalRegistry,
    LocalAiState,
    MachineSlot,
    MatchingPolicy,
    ProfileRecord,
    SavingsRecord,
    aggregate_global,
    descriptor_of,
    iterations_to_target,
    make_profile_pool,
    match_profile,
    onboard_machine,
    run_savings_sweep,
    similarity,
    training_time_saved,
    upload_profile,
)
from gladsim.errors import NotReadyError, ParameterError
from gladsim.haptic import (
    ForecasterState,
    ObjectKind,
    ObjectProfile,
    profiling_trace,
    standard_profile,
)

BALL = standard_profile(ObjectKind.RUBBER_BALL)


def _custom(stiffness, texture=10.0):
    return ObjectProfile("obj", ObjectKind.CUSTOM, np.zeros(3), 4.0,
                         stiffness, texture)


def _record(estimate, count, descriptor=None, source="co-0"):
    descriptor = descriptor or descriptor_of(BALL)
    return ProfileRecord(
        descriptor=descriptor,
        profile_estimate=np.full(5, estimate),
        sample_count=count,
        source_local_ai=source,
    )


class TestDescriptorSimilarity:
    def test_identical_descriptor_similarity_one(self):
        d = descriptor_of(BALL)
        assert similarity(d, d) == 1.0

    def test_half_range_similarity(self):
        # Bands 0 and 5 of 10: normalized distance 0.5 -> similarity 0.5,
        # below the 0.8 default threshold.
        a = descriptor_of(_custom(0.05))
        b = descriptor_of(_custom(0.55))
        assert similarity(a, b) == 0.5

    def test_kind_mismatch_is_zero(self):
        a = descriptor_of(BALL)
        b = descriptor_of(standard_profile(ObjectKind.WOODEN_CUBE))
        assert similarity(a, b) == 0.0

    def test_quantization_band_edges(self):
        assert descriptor_of(_custom(1.0))[1] == 9
        assert descriptor_of(_custom(0.05))[1] == 0


class TestRegistry:
    def _local_with_machine(self, updates=500):
        local = LocalAiState("co-1")
        state = ForecasterState(profile_estimate=np.full(5, 0.4),
                                alpha_local=0.1, updates_seen=updates)
        local.add(MachineSlot("m0", state, BALL))
        return local

    def test_upload_appends_and_bumps_version(self):
        registry = GlobalRegistry()
        local = self._local_with_machine()
        version = upload_profile(local, "m0", registry)
        assert version == 1
        assert registry.version == 1
        assert len(registry.records_for(descriptor_of(BALL))) == 1

    def test_upload_undertrained_rejected(self):
        registry = GlobalRegistry()
        local = self._local_with_machine(updates=0)
        with pytest.raises(NotReadyError):
            upload_profile(local, "m0", registry)
        assert registry.version == 0

    def test_two_uploads_same_descriptor_both_retained(self):
        registry = GlobalRegistry()
        local = self._local_with_machine()
        upload_profile(local, "m0", registry)
        upload_profile(local, "m0", registry)
        assert len(registry.records_for(descriptor_of(BALL))) == 2
        assert registry.version == 2

    def test_aggregate_single_record_identity(self):
        registry = GlobalRegistry()
        registry.add_record(_record(0.4, 120))
        aggregate_global(registry)
        (rec,) = registry.records_for(descriptor_of(BALL))
        np.testing.assert_array_equal(rec.profile_estimate, np.full(5, 0.4))
        assert rec.sample_count == 120

    def test_aggregate_weighted_mean(self):
        # (0.2 * 100 + 0.6 * 300) / 400 = 0.5
        registry = GlobalRegistry()
        registry.add_record(_record(0.2, 100))
        registry.add_record(_record(0.6, 300))
        aggregate_global(registry)
        (rec,) = registry.records_for(descriptor_of(BALL))
        np.testing.assert_allclose(rec.profile_estimate, 0.5)
        assert rec.sample_count == 400

    def test_aggregate_equal_weights_is_plain_mean(self):
        registry = GlobalRegistry()
        registry.add_record(_record(0.1, 50))
        registry.add_record(_record(0.7, 50))
        aggregate_global(registry)
        (rec,) = registry.records_for(descriptor_of(BALL))
        np.testing.assert_allclose(rec.profile_estimate, 0.4)

    @pytest.mark.parametrize("seed", range(3))
    def test_aggregate_conservation_and_convex_hull(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        registry = GlobalRegistry()
        estimates = rng.random((4, 5))
        counts = rng.integers(10, 500, size=4)
        for est, cnt in zip(estimates, counts):
            registry.add_record(ProfileRecord(
                descriptor=descriptor_of(BALL),
                profile_estimate=est,
                sample_count=int(cnt),
                source_local_ai="co-x",
            ))
        aggregate_global(registry)
        (rec,) = registry.records_for(descriptor_of(BALL))
        assert rec.sample_count == int(counts.sum())
        assert np.all(rec.profile_estimate >= estimates.min(axis=0) - 1e-12)
        assert np.all(rec.profile_estimate <= estimates.max(axis=0) + 1e-12)

    def test_aggregate_empty_registry_rejected(self):
        with pytest.raises(ParameterError):
            aggregate_global(GlobalRegistry())

    def test_version_strictly_increases(self):
        registry = GlobalRegistry()
        versions = [registry.version]
        registry.add_record(_record(0.3, 10))
        versions.append(registry.version)
        registry.add_record(_record(0.5, 20))
        versions.append(registry.version)
        aggregate_global(registry)
        versions.append(registry.version)
        assert versions == sorted(set(versions))

    def test_snapshot_round_trip(self):
        registry = GlobalRegistry()
        registry.add_record(_record(0.25, 42))
        registry.add_record(_record(0.75, 17, descriptor_of(_custom(0.9, 200.0))))
        clone = GlobalRegistry.from_snapshot(registry.snapshot())
        assert clone.version == registry.version
        assert clone.snapshot() == registry.snapshot()

    def test_match_empty_registry(self):
        record, sim = match_profile(GlobalRegistry(), descriptor_of(BALL))
        assert record is None
        assert sim == 0.0

    def test_match_below_threshold_returns_none_with_similarity(self):
        registry = GlobalRegistry()
        registry.add_record(_record(0.4, 100, descriptor_of(_custom(0.05))))
        record, sim = match_profile(registry, descriptor_of(_custom(0.55)))
        assert record is None
        assert sim == 0.5

    def test_match_exact(self):
        registry = GlobalRegistry()
        registry.add_record(_record(0.4, 100))
        record, sim = match_profile(registry, descriptor_of(BALL))
        assert record is not None
        assert sim == 1.0


class TestOnboarding:
    def _registry_with_signature(self, profile, trace_seed=901):
        """Registry holding an aggregated record equal to the trace signature."""
        trace = profiling_trace(profile, 1000, trace_seed)
        signature = np.array([s.amplitude for s in trace]).mean(axis=0)
        registry = GlobalRegistry()
        registry.add_record(ProfileRecord(
            descriptor=descriptor_of(profile),
            profile_estimate=np.clip(signature, 0.0, 1.0),
            sample_count=1000,
            source_local_ai="co-9",
        ))
        return registry

    def test_converged_warm_start_hits_window_floor(self):
        registry = self._registry_with_signature(BALL)
        trace = profiling_trace(BALL, 2000, seed=17)
        result = onboard_machine(LocalAiState("co"), BALL, registry, GLAD,
                                 0.95, trace)
        assert result.converged
        assert result.iterations == 200  # the sliding-window length
        assert result.match_similarity == 1.0

    def test_cold_slower_than_warm(self):
        registry = self._registry_with_signature(BALL)
        trace = profiling_trace(BALL, 3000, seed=18)
        warm = onboard_machine(LocalAiState("a"), BALL, registry, GLAD, 0.95, trace)
        cold = onboard_machine(LocalAiState("b"), BALL, registry, COLD, 0.95, trace)
        assert cold.iterations > warm.iterations

    def test_glad_without_match_equals_cold_exactly(self):
        empty = GlobalRegistry()
        trace = profiling_trace(BALL, 2500, seed=19)
        glad = onboard_machine(LocalAiState("a"), BALL, empty, GLAD, 0.95, trace)
        cold = onboard_machine(LocalAiState("b"), BALL, empty, COLD, 0.95, trace)
        assert glad.iterations == cold.iterations
        assert glad.match_similarity == 0.0

    def test_unreachable_target_flagged(self):
        empty = GlobalRegistry()
        trace = profiling_trace(BALL, 600, seed=20)
        result = onboard_machine(LocalAiState("a"), BALL, empty, COLD,
                                 0.99, trace, alpha=0.001)
        assert not result.converged
        assert result.iterations == len(trace)

    def test_existing_machines_untouched(self):
        registry = self._registry_with_signature(BALL)
        local = LocalAiState("co")
        onboard_machine(local, BALL, registry, COLD, 0.95,
                        profiling_trace(BALL, 1200, seed=21), machine_id="m0")
        onboard_machine(local, BALL, registry, GLAD, 0.95,
                        profiling_trace(BALL, 1200, seed=22), machine_id="m1")
        frozen = pickle.dumps([local.slot("m0").forecaster,
                               local.slot("m1").forecaster])
        onboard_machine(local, BALL, registry, GLAD, 0.95,
                        profiling_trace(BALL, 1200, seed=23), machine_id="m2")
        assert pickle.dumps([local.slot("m0").forecaster,
                             local.slot("m1").forecaster]) == frozen
        assert local.machine_count == 3

    def test_short_trace_rejected(self):
        with pytest.raises(Exception):
            onboard_machine(LocalAiState("a"), BALL, GlobalRegistry(), COLD,
                            0.95, profiling_trace(BALL, 400, seed=1))

    def test_bad_mode(self):
        with pytest.raises(ParameterError):
            onboard_machine(LocalAiState("a"), BALL, GlobalRegistry(), "warmish",
                            0.95, profiling_trace(BALL, 600, seed=1))

    def test_duplicate_machine_id_rejected(self):
        local = LocalAiState("co")
        trace = profiling_trace(BALL, 600, seed=2)
        onboard_machine(local, BALL, GlobalRegistry(), COLD, 0.95, trace,
                        machine_id="m0")
        with pytest.raises(ParameterError):
            onboard_machine(local, BALL, GlobalRegistry(), COLD, 0.95, trace,
                            machine_id="m0")


class TestIterationsToTarget:
    def test_floor_is_window_length(self):
        hits = np.ones(500, dtype=bool)
        iters, converged = iterations_to_target(hits, 0.95, 200)
        assert (iters, converged) == (200, True)

    def test_never_reaching_returns_length_flagged(self):
        hits = np.zeros(300, dtype=bool)
        iters, converged = iterations_to_target(hits, 0.5, 100)
        assert (iters, converged) == (300, False)

    def test_exact_boundary(self):
        # 190 hits in a 200 window is exactly 0.95.
        hits = np.concatenate([np.zeros(10, dtype=bool), np.ones(400, dtype=bool)])
        iters, converged = iterations_to_target(hits, 0.95, 200)
        assert converged
        assert iters == 200


class TestSavings:
    def test_training_time_saved_examples(self):
        assert training_time_saved(1000, 280) == pytest.approx(72.0)
        assert training_time_saved(345, 345) == 0.0
        assert training_time_saved(345, 0) == 100.0
        with pytest.raises(ParameterError):
            training_time_saved(0, 0)

    def test_savings_record_consistency_enforced(self):
        SavingsRecord("m", 1000, 280, 72.0)
        with pytest.raises(ParameterError):
            SavingsRecord("m", 1000, 280, 50.0)

    def test_single_kind_pool_curve(self):
        curve = run_savings_sweep(5, 1, seed=42, trace_samples=2500)
        machines = [m for m, _ in curve]
        savings = [s for _, s in curve]
        assert machines == [1, 2, 3, 4, 5]
        assert savings[0] == 0.0  # nothing to match for the first machine
        assert all(b >= a - 1e-9 for a, b in zip(savings, savings[1:]))
        assert savings[-1] > 40.0

    def test_oversized_pool_no_matches(self):
        curve = run_savings_sweep(4, 30, seed=42, trace_samples=2000)
        assert all(s == 0.0 for _, s in curve)

    def test_deterministic(self):
        a = run_savings_sweep(3, 1, seed=7, trace_samples=1500)
        b = run_savings_sweep(3, 1, seed=7, trace_samples=1500)
        assert a == b

    def test_pool_profiles_mutually_unmatchable(self):
        pool = make_profile_pool(12)
        threshold = MatchingPolicy().threshold
        for i, a in enumerate(pool):
            for b in pool[i + 1:]:
                assert similarity(descriptor_of(a), descriptor_of(b)) < threshold

    def test_pool_size_validation(self):
        with pytest.raises(ParameterError):
            make_profile_pool(0)
        with pytest.raises(ParameterError):
            run_savings_sweep(1, 1, seed=1)
