"""XG-PON one-way and round-trip latency models.

Two routes to the same quantity are implemented and cross-validated:

* a packet-level simulation of the shared medium (downstream: a single FIFO
  at the OLT; upstream: per-ONU queues drained by gated round-robin grants,
  one grant opportunity per ONU per DBA cycle), and
* the Kingman G/G/1 heavy-traffic approximation for fast analytical checks.

Tagged H2M messages are transparent probes: they sample the queues built by
the background load without consuming capacity themselves.  Their own offered
load (~1 Mb/s of 128-byte messages at ~1 kHz) is three orders of magnitude
below the line rates, so the perturbation they would cause is negligible,
while probe transparency makes zero-load component bounds exact and lets the
four traversals of a closed loop compose independently.

Queueing, grant and transmission delays do not depend on the fiber span in
this model (ranging offsets are out of scope), so round-trip statistics for
any span derive from one set of direction simulations plus the span's
propagation term.  `max_span_meeting_deadline` exploits that directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ResourceLimitError, SaturationError
from .traffic import CONTROL_TRAFFIC_DEFAULT, ArrivalStream, GpdParams, generate_stream, gpd_mean

__all__ = [
    "PonConfig",
    "LoadPoint",
    "LatencyRecord",
    "LatencySummary",
    "UPSTREAM",
    "DOWNSTREAM",
    "propagation_delay",
    "transmission_time",
    "kingman_wait",
    "fifo_waits",
    "simulate_pon",
    "queueing_cross_check",
    "round_trip_no_ai",
    "round_trip_with_ai",
    "max_span_meeting_deadline",
]

UPSTREAM = "upstream"
DOWNSTREAM = "downstream"

# Hard cap on background packets per simulated leg.
MAX_EVENTS = 50_000_000

# Fraction of loops discarded as simulation warm-up before summarizing.
WARMUP_FRACTION = 0.1


@dataclass(frozen=True)
class PonConfig:
    """Line rates, topology and per-hop delays of one fiber-wireless path."""

    downstream_rate_bps: float = 9.95328e9
    upstream_rate_bps: float = 2.48832e9
    split_ratio: int = 16
    span_km: float = 20.0
    fiber_delay_us_per_km: float = 5.0
    dba_cycle_us: float = 125.0
    wireless_hop_us: float = 50.0
    ai_inference_us: float = 10.0
    packet_bytes: int = 128
    background_packet_bytes: int = 1250

    def __post_init__(self):
        positive = (
            "downstream_rate_bps",
            "upstream_rate_bps",
            "fiber_delay_us_per_km",
            "dba_cycle_us",
            "wireless_hop_us",
            "ai_inference_us",
            "packet_bytes",
            "background_packet_bytes",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.split_ratio < 1:
            raise ParameterError(f"split_ratio must be >= 1, got {self.split_ratio}")
        if self.span_km < 0:
            raise ParameterError(f"span_km must be >= 0, got {self.span_km}")


@dataclass(frozen=True)
class LoadPoint:
    """Offered background load as a fraction of line rate per direction."""

    rho: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.rho) or self.rho < 0.0:
            raise ParameterError(f"rho must be finite and >= 0, got {self.rho}")
        if self.rho >= 1.0:
            raise SaturationError(f"offered load rho={self.rho} saturates the line")


@dataclass(frozen=True)
class LatencyRecord:
    """Per-message delay breakdown; total is the exact sum of the components."""

    message_id: int
    direction: str
    wireless_us: float
    queueing_us: float
    dba_wait_us: float
    transmission_us: float
    propagation_us: float
    processing_us: float
    total_us: float

    @classmethod
    def build(cls, message_id, direction, wireless, queueing, dba_wait,
              transmission, propagation, processing) -> "LatencyRecord":
        total = wireless + queueing + dba_wait + transmission + propagation + processing
        return cls(message_id, direction, wireless, queueing, dba_wait,
                   transmission, propagation, processing, total)

    def component_sum(self) -> float:
        return (self.wireless_us + self.queueing_us + self.dba_wait_us
                + self.transmission_us + self.propagation_us + self.processing_us)


@dataclass(frozen=True)
class LatencySummary:
    """Round-trip statistics over the simulated loops (after warm-up)."""

    mean_us: float
    p95_us: float
    p99_us: float
    n_loops: int


def propagation_delay(distance_km: float, per_km_us: float) -> float:
    """Fiber propagation delay over `distance_km` at `per_km_us` per km."""
    if distance_km < 0:
        raise ParameterError(f"distance must be >= 0, got {distance_km}")
    if per_km_us <= 0:
        raise ParameterError(f"per-km delay must be > 0, got {per_km_us}")
    return distance_km * per_km_us


def transmission_time(nbytes: int, rate_bps: float) -> float:
    """Serialization time of `nbytes` at `rate_bps`, in microseconds."""
    if nbytes <= 0:
        raise ParameterError(f"packet size must be > 0 bytes, got {nbytes}")
    if rate_bps <= 0:
        raise ParameterError(f"rate must be > 0, got {rate_bps}")
    return nbytes * 8.0 / rate_bps * 1e6


def kingman_wait(rho: float, ca2: float, cs2: float, mean_service_us: float) -> float:
    """Kingman G/G/1 mean waiting time: rho/(1-rho) * (ca2+cs2)/2 * E[S]."""
    if rho < 0:
        raise ParameterError(f"rho must be >= 0, got {rho}")
    if rho >= 1.0:
        raise SaturationError(f"no stationary wait at rho={rho}")
    if ca2 < 0 or cs2 < 0:
        raise ParameterError("squared coefficients of variation must be >= 0")
    if mean_service_us <= 0:
        raise ParameterError(f"mean service time must be > 0, got {mean_service_us}")
    if rho == 0.0:
        return 0.0
    return rho / (1.0 - rho) * (ca2 + cs2) / 2.0 * mean_service_us


def fifo_waits(arrival_times, service_times) -> np.ndarray:
    """Waiting times in a work-conserving single-server FIFO queue.

    Solves the Lindley recursion W[i+1] = max(0, W[i] + S[i] - A[i]) in closed
    form via the reflection identity W[i] = V[i] - min(V[0..i]) with
    V[i] = sum(S[j] - A[j] for j < i), which vectorizes.
    """
    a = np.asarray(arrival_times, dtype=float)
    s = np.asarray(service_times, dtype=float)
    if a.shape != s.shape:
        raise ParameterError("arrival and service arrays must have equal length")
    if a.size == 0:
        return np.empty(0)
    if np.any(np.diff(a) < 0.0):
        raise ParameterError("arrival times must be non-decreasing")
    v = np.concatenate(([0.0], np.cumsum(s[:-1] - np.diff(a))))
    return v - np.minimum.accumulate(v)


# ---------------------------------------------------------------------------
# Direction engines
# ---------------------------------------------------------------------------


def _spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(n)]


def _poisson_arrivals(rng: np.random.Generator, rate_per_us: float,
                      horizon_us: float) -> np.ndarray:
    """Arrival instants of a Poisson process on [0, horizon_us]."""
    if rate_per_us <= 0.0:
        return np.empty(0)
    expected = rate_per_us * horizon_us
    if expected > MAX_EVENTS:
        raise ResourceLimitError(
            f"background process needs ~{expected:.0f} events (cap {MAX_EVENTS})"
        )
    n_est = int(expected * 1.05) + 64
    times = np.cumsum(rng.exponential(1.0 / rate_per_us, size=n_est))
    while times.size == 0 or times[-1] < horizon_us:
        extra = np.cumsum(rng.exponential(1.0 / rate_per_us, size=max(64, n_est // 10)))
        base = times[-1] if times.size else 0.0
        times = np.concatenate([times, base + extra])
        if times.size > MAX_EVENTS:
            raise ResourceLimitError("background process exceeded the event cap")
    return times[times <= horizon_us]


def _gated_grants(arrived_bytes_per_cycle: np.ndarray, cap_bytes: float) -> np.ndarray:
    """Per-cycle granted bytes of one ONU under gated, capped service.

    Bytes arriving during cycle k are first reported at boundary k+1.  The
    reported backlog follows Q[k+1] = max(Q[k] - cap, 0) + A[k], a
    Lindley-type recursion solved in closed form by reflection.
    """
    a = arrived_bytes_per_cycle
    n = a.size
    prev_arrivals = np.concatenate(([0.0], a[:-1]))       # A[k-1] at index k
    # s[k] = Q[k] - A[k-1] obeys s[k+1] = max(s[k] + A[k-1] - cap, 0).
    u = np.concatenate(([0.0], np.cumsum(prev_arrivals - cap_bytes)))
    s = u - np.minimum.accumulate(u)
    reported = s[:n] + prev_arrivals                      # Q[k]
    return np.minimum(reported, cap_bytes)


def _downstream_leg(config: PonConfig, load: LoadPoint, probe_times: np.ndarray,
                    rng: np.random.Generator) -> dict:
    """Probe delays through the OLT downstream FIFO.

    Background: Poisson arrivals of `background_packet_bytes` packets sized so
    the offered load equals rho of the downstream rate.  A probe arriving at t
    waits for the workload present at t, then serializes itself.
    """
    rate = config.downstream_rate_bps
    bg_service = transmission_time(config.background_packet_bytes, rate)
    horizon = float(probe_times[-1]) + 10.0 * bg_service if probe_times.size else 0.0
    lam = load.rho * rate / (config.background_packet_bytes * 8.0) * 1e-6  # pkts/us

    if lam > 0.0:
        bg_times = _poisson_arrivals(rng, lam, horizon)
    else:
        bg_times = np.empty(0)

    if bg_times.size:
        services = np.full(bg_times.size, bg_service)
        waits = fifo_waits(bg_times, services)
        departures = bg_times + waits + bg_service
        idx = np.searchsorted(bg_times, probe_times, side="right") - 1
        queueing = np.where(
            idx >= 0,
            np.maximum(0.0, departures[np.clip(idx, 0, None)] - probe_times),
            0.0,
        )
        gaps = np.diff(bg_times)
        ca2 = float(np.var(gaps) / np.mean(gaps) ** 2) if gaps.size > 1 else 0.0
        stats = {
            "mean_queue_wait_us": float(waits.mean()),
            "ca2": ca2,
            "cs2": 0.0,  # deterministic background service
            "mean_service_us": bg_service,
            "utilization": lam * bg_service,
            "n_background": int(bg_times.size),
        }
    else:
        queueing = np.zeros(probe_times.size)
        stats = {
            "mean_queue_wait_us": 0.0,
            "ca2": 0.0,
            "cs2": 0.0,
            "mean_service_us": bg_service,
            "utilization": 0.0,
            "n_background": 0,
        }

    return {
        "queueing": queueing,
        "dba_wait": np.zeros(probe_times.size),
        "transmission": transmission_time(config.packet_bytes, rate),
        "stats": stats,
    }


def _upstream_leg(config: PonConfig, load: LoadPoint, probe_times: np.ndarray,
                  rng: np.random.Generator) -> dict:
    """Probe delays through the gated round-robin upstream grant cycle.

    The tagged ONU sits mid-order in the fixed grant sequence, so the windows
    of split_ratio // 2 other ONUs precede its own window inside each cycle.
    A probe reports at the first cycle boundary after arrival, waits for the
    background bytes ahead of it in its ONU queue to be granted, then
    transmits inside its ONU's window.
    """
    cycle = config.dba_cycle_us
    n_onus = config.split_ratio
    rate = config.upstream_rate_bps
    bg_bytes = config.background_packet_bytes
    cycle_capacity = rate * cycle * 1e-6 / 8.0      # bytes per full cycle
    cap = cycle_capacity / n_onus                    # fair-share grant cap
    preceding = n_onus // 2

    horizon = float(probe_times[-1]) if probe_times.size else cycle
    n_cycles = int(math.ceil(horizon / cycle)) + 8

    lam_total = load.rho * rate / (bg_bytes * 8.0) * 1e-6   # pkts/us, all ONUs
    lam_onu = lam_total / n_onus
    per_onu_cycle_mean = lam_onu * cycle                    # pkts/cycle

    if n_cycles * max(per_onu_cycle_mean, 1.0) * n_onus > MAX_EVENTS:
        raise ResourceLimitError("upstream background exceeds the event cap")

    # ONUs granted before the tagged one only matter through their granted
    # bytes per cycle, which set the tagged window's offset in each cycle.
    if preceding and per_onu_cycle_mean > 0.0:
        preceding_arrivals = rng.poisson(
            per_onu_cycle_mean, size=(preceding, n_cycles)
        ).astype(float) * bg_bytes
    else:
        preceding_arrivals = np.zeros((0, n_cycles))

    # Tagged ONU's own background needs exact arrival instants.
    bg_times = _poisson_arrivals(rng, lam_onu, horizon) if lam_onu > 0 else np.empty(0)
    arrived = np.zeros(n_cycles)
    if bg_times.size:
        cycles_of = np.minimum((bg_times / cycle).astype(int), n_cycles - 1)
        arrived = np.bincount(cycles_of, minlength=n_cycles).astype(float) * bg_bytes

    bg_total = float(bg_times.size) * bg_bytes
    grants = _gated_grants(arrived, cap)
    cum_grants = np.cumsum(grants)
    # Extend with empty cycles until every queued byte has been granted, so
    # probe lookups never run off the end of the schedule.  No new arrivals
    # are drawn; traffic simply stops at the horizon and the queues drain.
    while bg_total > 0 and cum_grants[-1] < bg_total:
        extra = max(16, int(math.ceil((bg_total - cum_grants[-1]) / cap)) + 16)
        n_cycles += extra
        arrived = np.concatenate([arrived, np.zeros(extra)])
        preceding_arrivals = np.concatenate(
            [preceding_arrivals, np.zeros((preceding_arrivals.shape[0], extra))], axis=1
        )
        grants = _gated_grants(arrived, cap)
        cum_grants = np.cumsum(grants)

    offset_bytes = np.zeros(n_cycles)
    for row in preceding_arrivals:
        offset_bytes += _gated_grants(row, cap)

    byte_rate_us = rate * 1e-6 / 8.0                      # bytes per us
    window_start = cycle * np.arange(n_cycles) + offset_bytes / byte_rate_us
    cum_before = cum_grants - grants

    report_cycle = (probe_times / cycle).astype(int) + 1
    ahead_bytes = np.searchsorted(bg_times, probe_times, side="right") * float(bg_bytes)
    drained_at = np.searchsorted(cum_grants, ahead_bytes, side="left")
    grant_cycle = np.maximum(drained_at, report_cycle)
    if np.any(grant_cycle >= n_cycles):
        raise ResourceLimitError("grant schedule shorter than probe horizon")
    position = np.maximum(0.0, ahead_bytes - cum_before[grant_cycle])
    tx_start = window_start[grant_cycle] + position / byte_rate_us

    dba_wait = report_cycle * cycle - probe_times
    queueing = tx_start - report_cycle * cycle

    return {
        "queueing": queueing,
        "dba_wait": dba_wait,
        "transmission": transmission_time(config.packet_bytes, rate),
        "stats": {
            "utilization": load.rho,
            "mean_service_us": transmission_time(bg_bytes, rate),
            "n_background": int(bg_times.size),
        },
    }


def _leg(config: PonConfig, load: LoadPoint, direction: str,
         probe_times: np.ndarray, rng: np.random.Generator) -> dict:
    if direction == UPSTREAM:
        # Probes reach the ONU queue one wireless hop after generation.
        out = _upstream_leg(config, load, probe_times + config.wireless_hop_us, rng)
    elif direction == DOWNSTREAM:
        out = _downstream_leg(config, load, probe_times, rng)
    else:
        raise ParameterError(f"direction must be '{UPSTREAM}' or '{DOWNSTREAM}'")
    out["wireless"] = config.wireless_hop_us
    out["propagation"] = propagation_delay(config.span_km, config.fiber_delay_us_per_km)
    return out


def simulate_pon(config: PonConfig, load: LoadPoint, direction: str,
                 h2m_stream: ArrivalStream, seed: int) -> list[LatencyRecord]:
    """Packet-level delay records for each tagged message in one direction."""
    if len(h2m_stream) == 0:
        raise ParameterError("h2m_stream must contain at least one arrival")
    rng = _spawn_rngs(seed, 1)[0]
    leg = _leg(config, load, direction, h2m_stream.timestamps, rng)
    tx = leg["transmission"]
    records = [
        LatencyRecord.build(
            message_id=i,
            direction=direction,
            wireless=leg["wireless"],
            queueing=float(leg["queueing"][i]),
            dba_wait=float(leg["dba_wait"][i]),
            transmission=tx,
            propagation=leg["propagation"],
            processing=0.0,
        )
        for i in range(len(h2m_stream))
    ]
    return records


def queueing_cross_check(config: PonConfig, load: LoadPoint, seed: int,
                         horizon_us: float = 2e6) -> dict:
    """Compare the downstream FIFO's simulated mean wait with Kingman's formula.

    Moments are measured from the simulation's own arrival and service
    processes, so the comparison validates the queue dynamics rather than the
    input assumptions.  Returns both values and their relative gap.
    """
    rng = _spawn_rngs(seed, 1)[0]
    probes = np.linspace(horizon_us * 0.01, horizon_us * 0.99, 256)
    leg = _downstream_leg(config, load, probes, rng)
    stats = leg["stats"]
    analytical = kingman_wait(stats["utilization"], stats["ca2"], stats["cs2"],
                              stats["mean_service_us"])
    simulated = stats["mean_queue_wait_us"]
    gap = abs(simulated - analytical) / analytical if analytical > 0 else 0.0
    return {
        "simulated_mean_wait_us": simulated,
        "kingman_wait_us": analytical,
        "relative_gap": gap,
        "utilization": stats["utilization"],
        "ca2": stats["ca2"],
        "cs2": stats["cs2"],
        "mean_service_us": stats["mean_service_us"],
    }


# ---------------------------------------------------------------------------
# Round trips
# ---------------------------------------------------------------------------


def _probe_stream(traffic: GpdParams, n_loops: int, seed: int) -> np.ndarray:
    horizon = n_loops * gpd_mean(traffic) * 1.1 + 10.0
    stream = generate_stream(traffic, horizon, seed)
    while len(stream) < n_loops:
        horizon *= 1.5
        stream = generate_stream(traffic, horizon, seed)
    return stream.timestamps[:n_loops]


def _round_trip_base(config: PonConfig, load: LoadPoint, seed: int,
                     n_loops: int, traffic: GpdParams | None,
                     with_ai: bool) -> tuple[np.ndarray, int]:
    """Per-loop totals excluding fiber propagation, plus the fiber leg count.

    The control stream's own seed and the four legs' background seeds derive
    from `seed`, so both modes share identical leg realizations: the with-AI
    loop reuses the control upstream and feedback downstream legs of the
    no-AI loop and simply skips the two machine-side legs.
    """
    traffic = traffic or CONTROL_TRAFFIC_DEFAULT
    if n_loops < 10:
        raise ParameterError(f"need at least 10 loops, got {n_loops}")
    probes = _probe_stream(traffic, n_loops, seed)
    rngs = _spawn_rngs(seed, 4)

    leg_plan = [(UPSTREAM, 0), (DOWNSTREAM, 1), (UPSTREAM, 2), (DOWNSTREAM, 3)]
    if with_ai:
        leg_plan = [(UPSTREAM, 0), (DOWNSTREAM, 3)]

    totals = np.zeros(n_loops)
    for direction, rng_idx in leg_plan:
        leg = _leg(config, load, direction, probes, rngs[rng_idx])
        totals += (leg["queueing"] + leg["dba_wait"]
                   + leg["transmission"] + leg["wireless"])
    if with_ai:
        totals += config.ai_inference_us
    return totals, len(leg_plan)


def _summarize(totals: np.ndarray) -> LatencySummary:
    start = int(totals.size * WARMUP_FRACTION)
    body = totals[start:]
    return LatencySummary(
        mean_us=float(body.mean()),
        p95_us=float(np.percentile(body, 95)),
        p99_us=float(np.percentile(body, 99)),
        n_loops=int(body.size),
    )


def round_trip_no_ai(config: PonConfig, load: LoadPoint, seed: int, *,
                     n_loops: int = 10_000,
                     traffic: GpdParams | None = None) -> LatencySummary:
    """Closed-loop latency with the machine in the loop.

    Four traversals per loop: control upstream and downstream to the machine,
    feedback upstream and downstream back to the operator, with a wireless
    hop at each of the four air crossings.
    """
    base, legs = _round_trip_base(config, load, seed, n_loops, traffic, with_ai=False)
    prop = propagation_delay(config.span_km, config.fiber_delay_us_per_km)
    return _summarize(base + legs * prop)


def round_trip_with_ai(config: PonConfig, load: LoadPoint, seed: int, *,
                       n_loops: int = 10_000,
                       traffic: GpdParams | None = None) -> LatencySummary:
    """Closed-loop latency with edge forecasting short-circuiting the machine.

    The loop is control upstream to the CO, forecast inference, and the
    forecast feedback downstream to the operator: two fiber traversals, two
    wireless hops, plus the inference time.
    """
    base, legs = _round_trip_base(config, load, seed, n_loops, traffic, with_ai=True)
    prop = propagation_delay(config.span_km, config.fiber_delay_us_per_km)
    return _summarize(base + legs * prop)


def _bisect_max_span(base_mean_us: float, fiber_legs: int, per_km_us: float,
                     deadline_us: float) -> float:
    """Largest span on the 0.5 km grid of [0, 100] whose mean meets the deadline.

    The mean is linear in span, so bisection over the grid is exact.
    """
    def mean_at(span_km: float) -> float:
        return base_mean_us + fiber_legs * span_km * per_km_us

    lo_steps, hi_steps = 0, 200  # span = steps * 0.5 km
    if mean_at(0.0) > deadline_us:
        return 0.0
    if mean_at(hi_steps * 0.5) <= deadline_us:
        return 100.0
    while hi_steps - lo_steps > 1:
        mid = (lo_steps + hi_steps) // 2
        if mean_at(mid * 0.5) <= deadline_us:
            lo_steps = mid
        else:
            hi_steps = mid
    return lo_steps * 0.5


def max_span_meeting_deadline(config: PonConfig, load: LoadPoint,
                              deadline_us: float, with_ai: bool, *,
                              seed: int = 0, n_loops: int = 10_000,
                              traffic: GpdParams | None = None) -> float:
    """Largest span (km) whose mean round trip meets the deadline.

    Bisection over [0, 100] km at 0.5 km resolution.  Returns 0.0 when the
    deadline cannot be met even back-to-back.
    """
    if deadline_us <= 0:
        raise ParameterError(f"deadline must be > 0, got {deadline_us}")
    base, legs = _round_trip_base(config, load, seed, n_loops, traffic, with_ai)
    start = int(base.size * WARMUP_FRACTION)
    base_mean = float(base[start:].mean())
    return _bisect_max_span(base_mean, legs, config.fiber_delay_us_per_km, deadline_us)
