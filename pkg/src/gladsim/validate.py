"""Fast runtime self-checks behind `gladsim validate`.

Each check re-derives one contract of the simulator from first principles
(closed forms, brute-force recursions, paired runs) at a size that keeps the
whole suite under a minute.  The pytest suite covers the same ground more
thoroughly; this is the installation smoke test.
"""

from __future__ import annotations

import numpy as np

from . import coordination, haptic, pon, traffic

__all__ = ["run_invariant_suite"]


def _check_gpd_sampler() -> None:
    params = traffic.GpdParams(0.2, 1.0, 0.0)
    grid = np.linspace(0.0, 0.999, 500)
    q = traffic.sample_gpd(params, grid)
    assert np.all(np.diff(q) > 0), "quantile not strictly increasing"
    near_zero = traffic.GpdParams(1e-8, 1.0, 0.0)
    zero = traffic.GpdParams(0.0, 1.0, 0.0)
    gap = np.max(np.abs(traffic.sample_gpd(near_zero, grid) - traffic.sample_gpd(zero, grid)))
    assert gap < 1e-4, f"shape->0 discontinuity {gap}"


def _check_stream_determinism() -> None:
    p = traffic.GpdParams(0.1, 900.0, 0.0)
    a = traffic.generate_stream(p, 1e5, 13)
    b = traffic.generate_stream(p, 1e5, 13)
    assert np.array_equal(a.timestamps, b.timestamps), "stream not reproducible"
    assert np.all(np.diff(a.timestamps) >= 0), "timestamps decrease"


def _check_fit_round_trip() -> None:
    p = traffic.GpdParams(0.1, 500.0, 0.0)
    stream = traffic.generate_stream(p, 500.0 / 0.9 * 30_000, 3)
    fitted = traffic.fit_gpd(stream.inter_arrivals)
    assert abs(fitted.shape - p.shape) < 0.08, f"shape off: {fitted.shape}"
    assert abs(fitted.scale - p.scale) / p.scale < 0.08, f"scale off: {fitted.scale}"


def _check_ks_self() -> None:
    p = traffic.GpdParams(0.1, 900.0, 0.0)
    passes = 0
    for seed in range(20):
        stream = traffic.generate_stream(p, 3e6, seed)
        _, ok = traffic.ks_test(stream.inter_arrivals, p, 0.05)
        passes += int(ok)
    assert passes >= 17, f"KS self-test pass rate {passes}/20"


def _check_kingman_vs_des() -> None:
    cfg = pon.PonConfig()
    out = pon.queueing_cross_check(cfg, pon.LoadPoint(0.5), seed=7, horizon_us=1e6)
    assert out["relative_gap"] <= 0.2, f"DES/Kingman gap {out['relative_gap']:.3f}"
    assert pon.kingman_wait(0.0, 1.0, 1.0, 10.0) == 0.0


def _check_zero_load_bounds() -> None:
    cfg = pon.PonConfig(span_km=20.0)
    stream = traffic.generate_stream(traffic.CONTROL_TRAFFIC_DEFAULT, 3e5, 5)
    records = pon.simulate_pon(cfg, pon.LoadPoint(0.0), pon.UPSTREAM, stream, 9)
    for r in records:
        assert r.queueing_us == 0.0, "queueing at zero load"
        assert 0.0 <= r.dba_wait_us <= cfg.dba_cycle_us, f"dba wait {r.dba_wait_us}"
        assert abs(r.total_us - r.component_sum()) == 0.0, "total != component sum"


def _check_ai_dominance() -> None:
    cfg = pon.PonConfig(span_km=20.0)
    for rho in (0.2, 0.8):
        slow = pon.round_trip_no_ai(cfg, pon.LoadPoint(rho), 3, n_loops=2000)
        fast = pon.round_trip_with_ai(cfg, pon.LoadPoint(rho), 3, n_loops=2000)
        assert fast.mean_us < slow.mean_us, f"no dominance at rho={rho}"


def _check_forecaster() -> None:
    state = haptic.ForecasterState(profile_estimate=np.zeros(5), alpha_local=0.5)
    target = haptic.HapticSample(t_us=0.0, amplitude=np.full(5, 1.0))
    errs = []
    for _ in range(5):
        errs.append(float(np.max(np.abs(state.profile_estimate - target.amplitude))))
        state = haptic.forecaster_update(state, target)
    ratios = [errs[i + 1] / errs[i] for i in range(4)]
    assert all(abs(r - 0.5) < 1e-12 for r in ratios), "contraction factor wrong"
    assert np.all(state.profile_estimate <= 1.0), "estimate escaped [0,1]"


def _check_onboarding_pair() -> None:
    profile = haptic.standard_profile(haptic.ObjectKind.RUBBER_BALL)
    registry = coordination.GlobalRegistry()
    office = coordination.LocalAiState("co-0")
    trace0 = haptic.profiling_trace(profile, 2000, 77)
    coordination.onboard_machine(office, profile, registry, "cold", 0.95, trace0,
                                 machine_id="m0")
    coordination.upload_profile(office, "m0", registry)
    coordination.aggregate_global(registry)

    trace = haptic.profiling_trace(profile, 2000, 78)
    cold = coordination.onboard_machine(
        coordination.LocalAiState("a"), profile, registry, "cold", 0.95, trace)
    warm = coordination.onboard_machine(
        coordination.LocalAiState("b"), profile, registry, "glad", 0.95, trace)
    assert warm.iterations <= cold.iterations, "warm start slower than cold"


def _check_determinism() -> None:
    cfg = pon.PonConfig(span_km=10.0)
    a = pon.round_trip_no_ai(cfg, pon.LoadPoint(0.4), 11, n_loops=1000)
    b = pon.round_trip_no_ai(cfg, pon.LoadPoint(0.4), 11, n_loops=1000)
    assert a == b, "round trip not deterministic"


_CHECKS = [
    ("gpd-sampler-monotone-and-continuous", _check_gpd_sampler),
    ("stream-determinism", _check_stream_determinism),
    ("gpd-fit-round-trip", _check_fit_round_trip),
    ("ks-self-acceptance", _check_ks_self),
    ("kingman-vs-des", _check_kingman_vs_des),
    ("zero-load-component-bounds", _check_zero_load_bounds),
    ("with-ai-dominance", _check_ai_dominance),
    ("forecaster-contraction", _check_forecaster),
    ("onboarding-warm-not-slower", _check_onboarding_pair),
    ("summary-determinism", _check_determinism),
]


def run_invariant_suite(emit=print) -> int:
    """Run every check; returns the number of failures."""
    failures = 0
    for name, check in _CHECKS:
        try:
            check()
        except AssertionError as exc:
            failures += 1
            emit(f"FAIL {name}: {exc}")
        except Exception as exc:  # noqa: BLE001 - report, keep going
            failures += 1
            emit(f"FAIL {name}: unexpected {type(exc).__name__}: {exc}")
        else:
            emit(f"PASS {name}")
    emit(f"{len(_CHECKS) - failures}/{len(_CHECKS)} checks passed")
    return failures
