"""Stream ingestion: multi-source merge and session baselines.

Sensors are unsynchronized devices, so a small amount of cross-source
and within-source disorder is expected; anything beyond the tolerance
is a hard error rather than silent data loss.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Sequence

from .core.types import (
    HRSample,
    LandmarkFrame,
    PainObservation,
    SensorEvent,
    SteeringCommand,
    VocalFrame,
)
from .errors import BackwardsTimestamp, InsufficientSamples, NoSamples

# Tie-break priority for events with equal timestamps.
_KIND_ORDER = {
    HRSample: 0,
    LandmarkFrame: 1,
    VocalFrame: 2,
    PainObservation: 3,
    SteeringCommand: 4,
}


def _monotone(name: str, source: Iterable[SensorEvent], tolerance_ms: float) -> Iterator[SensorEvent]:
    """Reorder a source's events within the tolerance; error beyond it.

    An event may arrive up to tolerance_ms earlier than the latest one
    already seen from the same source; the buffer sorts those out. A
    larger jump backwards means the device clock is broken.
    """
    heap: List[tuple] = []
    seq = itertools.count()
    max_seen = None
    for e in source:
        if max_seen is not None:
            if e.ts < max_seen - tolerance_ms:
                raise BackwardsTimestamp(name, e.ts)
            max_seen = max(max_seen, e.ts)
        else:
            max_seen = e.ts
        heapq.heappush(heap, (e.ts, next(seq), e))
        # Anything at least tolerance_ms older than the newest event can
        # no longer be undercut; release it.
        while heap and heap[0][0] <= max_seen - tolerance_ms:
            yield heapq.heappop(heap)[2]
    while heap:
        yield heapq.heappop(heap)[2]


def merge_streams(sources: Dict[str, Iterable[SensorEvent]],
                  tolerance_ms: float = 5.0) -> Iterator[SensorEvent]:
    """Merge per-source streams into one globally ordered stream.

    Each source must be monotone within the tolerance. Output is sorted
    by timestamp; equal timestamps break by event kind (HR first, then
    landmarks, vocal, pain, steering), then source insertion order.
    """
    seq = itertools.count()

    def keyed(name, it):
        for e in _monotone(name, it, tolerance_ms):
            yield (e.ts, _KIND_ORDER[type(e)], next(seq), e)

    for _ts, _k, _s, e in heapq.merge(*(keyed(n, s) for n, s in sources.items())):
        yield e


@dataclass(frozen=True)
class HRBaseline:
    bpm: float


@dataclass(frozen=True)
class VocalBaseline:
    pitch_hz: float
    loudness_db: float
    zcr: float


def compute_hr_baseline(samples: Iterable[HRSample], needed: int = 60) -> HRBaseline:
    """Mean of exactly the first `needed` samples; later ones are ignored."""
    head = list(itertools.islice(iter(samples), needed))
    if len(head) < needed:
        raise InsufficientSamples(len(head), needed)
    return HRBaseline(bpm=sum(s.bpm for s in head) / needed)


def current_hr(history: Sequence[HRSample], window: int = 5) -> float:
    """Mean of the last min(window, n) samples."""
    if not history:
        raise NoSamples("no heart-rate samples seen yet")
    tail = history[-window:]
    return sum(s.bpm for s in tail) / len(tail)


def compute_vocal_baseline(frames: Iterable[VocalFrame], duration_s: float = 30.0,
                           min_frames: int = 10) -> VocalBaseline:
    """Per-feature means over the warm-up window starting at the first frame."""
    frames = iter(frames)
    try:
        first = next(frames)
    except StopIteration:
        raise InsufficientSamples(0, min_frames) from None
    cutoff = first.ts + duration_s * 1000.0
    window = [first]
    for f in frames:
        if f.ts > cutoff:
            break
        window.append(f)
    if len(window) < min_frames:
        raise InsufficientSamples(len(window), min_frames)
    n = len(window)
    return VocalBaseline(
        pitch_hz=sum(f.pitch_hz for f in window) / n,
        loudness_db=sum(f.loudness_db for f in window) / n,
        zcr=sum(f.zcr for f in window) / n,
    )


class BaselineTracker:
    """Accumulates pre-session events until both baselines are ready.

    The HR baseline needs exactly `hr_samples` readings; the vocal
    baseline needs `vocal_min` frames inside `vocal_window_s` of the
    first frame. offer() returns True once both are computable.
    """

    def __init__(self, hr_samples: int = 60, vocal_window_s: float = 30.0,
                 vocal_min: int = 10):
        self._hr_needed = hr_samples
        self._vocal_window_s = vocal_window_s
        self._vocal_min = vocal_min
        self._hr: List[HRSample] = []
        self._vocal: List[VocalFrame] = []

    def offer(self, event: SensorEvent) -> bool:
        if isinstance(event, HRSample) and len(self._hr) < self._hr_needed:
            self._hr.append(event)
        elif isinstance(event, VocalFrame):
            self._vocal.append(event)
        return self.ready()

    def ready(self) -> bool:
        if len(self._hr) < self._hr_needed or len(self._vocal) < self._vocal_min:
            return False
        within = sum(1 for f in self._vocal
                     if f.ts <= self._vocal[0].ts + self._vocal_window_s * 1000.0)
        return within >= self._vocal_min

    def hr_baseline(self) -> HRBaseline:
        return compute_hr_baseline(self._hr, self._hr_needed)

    def vocal_baseline(self) -> VocalBaseline:
        return compute_vocal_baseline(self._vocal, self._vocal_window_s, self._vocal_min)
