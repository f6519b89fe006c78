"""Stream merging and session baselines.

Oracle for the merge: flatten all sources and stable-sort by
(ts, kind rank). Any within-tolerance shuffle of the inputs must
produce exactly the oracle's output.
"""
from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from coachloop.errors import BackwardsTimestamp, InsufficientSamples, NoSamples
from coachloop.core.types import HRSample, PainObservation, VocalFrame
from coachloop.ingest import (
    BaselineTracker,
    compute_hr_baseline,
    compute_vocal_baseline,
    current_hr,
    merge_streams,
)

_KIND_RANK = {HRSample: 0, VocalFrame: 2, PainObservation: 3}


def _sort_oracle(events):
    return sorted(events, key=lambda e: (e.ts, _KIND_RANK[type(e)]))


def _hr(ts, bpm=80):
    return HRSample(ts=ts, bpm=bpm)


def _vocal(ts):
    return VocalFrame(ts=ts, pitch_hz=150.0, loudness_db=60.0, zcr=0.1)


def test_merge_two_ordered_sources():
    a = [_hr(0), _hr(100), _hr(200)]
    b = [_vocal(50), _vocal(150)]
    merged = list(merge_streams({"hr": a, "vocal": b}))
    assert merged == _sort_oracle(a + b)


def test_merge_breaks_timestamp_ties_by_kind():
    merged = list(merge_streams({"vocal": [_vocal(100)], "hr": [_hr(100)]}))
    assert isinstance(merged[0], HRSample)
    assert isinstance(merged[1], VocalFrame)


def test_merge_tolerates_small_disorder_within_source():
    # 3 ms backwards jitter is inside the 5 ms tolerance
    src = [_hr(0), _hr(10), _hr(7), _hr(20)]
    merged = list(merge_streams({"hr": src}, tolerance_ms=5.0))
    assert [e.ts for e in merged] == [0, 7, 10, 20]


def test_merge_rejects_disorder_beyond_tolerance():
    src = [_hr(0), _hr(100), _hr(50)]
    with pytest.raises(BackwardsTimestamp) as err:
        list(merge_streams({"hr": src}, tolerance_ms=5.0))
    assert err.value.source == "hr"
    assert err.value.ts == 50


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_merge_matches_sort_oracle_under_random_jitter(data):
    rng = random.Random(data.draw(st.integers(0, 2**32 - 1)))
    tol = 5.0
    sources = {}
    expected = []
    for name, maker, step in (("hr", _hr, 500.0), ("vocal", _vocal, 100.0)):
        n = rng.randint(0, 40)
        clean = [maker(i * step) for i in range(n)]
        expected.extend(clean)
        # jitter each event by less than tol/2 so relative disorder
        # stays under the tolerance, then let the merge restore order
        jittered = sorted(clean, key=lambda e: e.ts + rng.uniform(-tol / 2.01,
                                                                  tol / 2.01))
        sources[name] = jittered
    merged = list(merge_streams(sources, tolerance_ms=tol))
    assert merged == _sort_oracle(expected)


def test_merge_handles_empty_sources():
    assert list(merge_streams({})) == []
    assert list(merge_streams({"hr": [], "vocal": [_vocal(5)]}))[0].ts == 5


# --- baselines ---

def test_hr_baseline_is_mean_of_first_60():
    # bpm 61..120 -> mean 90.5; later samples must not contribute
    samples = [_hr(i * 500.0, 61 + i) for i in range(60)]
    samples += [_hr(30000.0 + i, 240) for i in range(5)]
    assert compute_hr_baseline(samples).bpm == pytest.approx(90.5)


def test_hr_baseline_requires_full_window():
    with pytest.raises(InsufficientSamples) as err:
        compute_hr_baseline([_hr(i, 80) for i in range(59)])
    assert err.value.count == 59 and err.value.needed == 60


def test_current_hr_uses_last_window_then_shrinks():
    hist = [_hr(i, 100 + i) for i in range(7)]
    # last 5 of 100..106 -> 102..106 -> mean 104
    assert current_hr(hist) == pytest.approx(104.0)
    assert current_hr(hist[:3]) == pytest.approx(101.0)
    assert current_hr([_hr(0, 90)]) == pytest.approx(90.0)
    with pytest.raises(NoSamples):
        current_hr([])


def test_vocal_baseline_window_means():
    # pitch 140..159 over 20 frames inside 30 s -> mean 149.5
    frames = [VocalFrame(ts=i * 1000.0, pitch_hz=140.0 + i,
                         loudness_db=50.0 + i, zcr=0.10)
              for i in range(20)]
    base = compute_vocal_baseline(frames)
    assert base.pitch_hz == pytest.approx(149.5)
    assert base.loudness_db == pytest.approx(59.5)
    assert base.zcr == pytest.approx(0.10)


def test_vocal_baseline_excludes_frames_after_window():
    inside = [VocalFrame(ts=i * 1000.0, pitch_hz=100.0, loudness_db=50.0,
                         zcr=0.1) for i in range(12)]
    outside = [VocalFrame(ts=31000.0, pitch_hz=900.0, loudness_db=90.0, zcr=0.9)]
    base = compute_vocal_baseline(inside + outside, duration_s=30.0)
    assert base.pitch_hz == pytest.approx(100.0)


def test_vocal_baseline_needs_min_frames():
    frames = [VocalFrame(ts=i, pitch_hz=100, loudness_db=50, zcr=0.1)
              for i in range(9)]
    with pytest.raises(InsufficientSamples):
        compute_vocal_baseline(frames, min_frames=10)
    with pytest.raises(InsufficientSamples):
        compute_vocal_baseline([], min_frames=10)


def test_tracker_ready_exactly_when_both_baselines_computable():
    tracker = BaselineTracker(hr_samples=3, vocal_window_s=30.0, vocal_min=2)
    assert not tracker.offer(_hr(0))
    assert not tracker.offer(_hr(500))
    assert not tracker.offer(_vocal(0))
    assert not tracker.offer(_hr(1000))      # hr full, vocal still short
    assert tracker.offer(_vocal(100))
    assert tracker.ready()
    assert tracker.hr_baseline().bpm == pytest.approx(80.0)
    assert tracker.vocal_baseline().pitch_hz == pytest.approx(150.0)


def test_tracker_ignores_hr_overflow_but_keeps_vocal():
    tracker = BaselineTracker(hr_samples=2, vocal_min=2)
    tracker.offer(_hr(0, 60))
    tracker.offer(_hr(1, 62))
    tracker.offer(_hr(2, 240))               # beyond the window, ignored
    tracker.offer(_vocal(0))
    tracker.offer(_vocal(10))
    assert tracker.hr_baseline().bpm == pytest.approx(61.0)
