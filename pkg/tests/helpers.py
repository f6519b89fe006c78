"""Independent oracles shared by the unit suites and the acceptance gate.

These deliberately avoid the engine's state-machine code: rep counts
come from threshold-crossing scans, timer credit from a direct sum.
"""
from __future__ import annotations

import random
from typing import List, Sequence, Tuple


def curl_rep_oracle(angles: Sequence[float], up_deg: float = 45.0,
                    down_deg: float = 160.0) -> int:
    """Arm on a dip below up_deg, count on the next rise above down_deg.

    Exact for any sampling: the machine's engage threshold sits above
    up_deg, so reaching the curled range always engages an excursion.
    """
    armed = False
    reps = 0
    for a in angles:
        if not armed and a < up_deg:
            armed = True
        elif armed and a > down_deg:
            armed = False
            reps += 1
    return reps


def lunge_rep_oracle(angles: Sequence[float], initial_deg: float = 160.0,
                     down_deg: float = 100.0) -> int:
    """Count rises above initial_deg that follow a dip below down_deg.

    Exact for well-sampled traces (per-frame step below
    initial_deg - down_deg), where a descent to the Down range always
    shows an intermediate sample and the stage chain cannot be skipped.
    """
    reached_down = False
    reps = 0
    for a in angles:
        if a < down_deg:
            reached_down = True
        elif a > initial_deg:
            if reached_down:
                reps += 1
            reached_down = False
    return reps


def random_angle_trace(rng: random.Random, n_frames: int = 240,
                       lo: float = 5.0, hi: float = 179.0,
                       max_step: float = 50.0) -> List[float]:
    """Bounded-step angle trajectory mixing a random walk and sinusoid dips."""
    if rng.random() < 0.5:
        a = rng.uniform(lo, hi)
        out = []
        for _ in range(n_frames):
            a = min(hi, max(lo, a + rng.uniform(-max_step, max_step)))
            out.append(a)
        return out
    import math
    period = rng.uniform(0.8, 4.0)
    center = rng.uniform(80.0, 120.0)
    amp = rng.uniform(20.0, 75.0)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    return [min(hi, max(lo, center + amp * math.cos(2 * math.pi * t / 60.0
                                                    / period + phase)))
            for t in range(n_frames)]


def standing_ramp(first: float, max_step: float = 50.0,
                  standing: float = 175.0) -> List[float]:
    """Bounded-step descent from standing to a trace's first sample.

    Prepending this keeps a trace well-sampled end to end even when the
    generator's first value starts deep in a rep.
    """
    out = [standing]
    a = standing
    while a - first > max_step:
        a -= max_step
        out.append(a)
    return out


def timer_schedule(rng: random.Random, n_frames: int = 600) -> List[bool]:
    """Random ok/bad frame schedule with dwell times of 5-60 frames."""
    out: List[bool] = []
    ok = rng.random() < 0.5
    while len(out) < n_frames:
        out.extend([ok] * rng.randint(5, 60))
        ok = not ok
    return out[:n_frames]


def timer_credit_oracle(ts_ms: Sequence[float], ok: Sequence[bool],
                        max_gap_ms: float = 200.0) -> float:
    """Sum of frame intervals whose earlier frame was correct."""
    total = 0.0
    for i in range(len(ts_ms) - 1):
        dt = ts_ms[i + 1] - ts_ms[i]
        if ok[i] and 0 <= dt <= max_gap_ms:
            total += dt / 1000.0
    return total


def spans_from_events(events) -> List[Tuple[float, float]]:
    """Pair FORM_ERROR_STARTED/ENDED machine events into (start, end) spans."""
    from coachloop.core.types import MachineEvent

    spans = []
    open_ts = None
    for ev in events:
        if ev.kind is MachineEvent.Kind.FORM_ERROR_STARTED:
            assert open_ts is None, "nested span start"
            open_ts = ev.span_ts if ev.span_ts is not None else ev.ts
        elif ev.kind is MachineEvent.Kind.FORM_ERROR_ENDED:
            assert open_ts is not None, "span end without start"
            end = ev.span_ts if ev.span_ts is not None else ev.ts
            spans.append((open_ts, end))
            open_ts = None
    assert open_ts is None, "unterminated span"
    return spans
