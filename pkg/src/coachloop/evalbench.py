"""Offline evaluation and benchmarking.

Three artifact families: rep-count accuracy tables over annotated
traces, frame-level form-detection metrics, and stage-latency reports.
Annotated traces are NDJSON (a meta line, then landmark frames) so
corpora round-trip through ordinary trace tooling. The bundled corpora
are generated deterministically from the same exact-angle geometry the
simulator uses, with a configurable landmark noise.

Latency reports aggregate per-stage and per-event totals; bench mode
injects log-normal synthetic stage latencies with one shared normal
draw per event, which keeps stage times comonotone so medians add up
like means do.
"""
from __future__ import annotations

import csv
import io
import json
import math
import random
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .config import BenchConfig, EngineConfig
from .core.types import (ExerciseKind, FormErrorKind, LandmarkFrame,
                         LEFT_FOOT_INDEX, LEFT_KNEE)
from .core.wire import decode_event, dumps_doc, encode_event
from .errors import (EmptyCorpus, InsufficientEvents, InvariantViolation,
                     MalformedLine)
from .machines import CurlMachine, LungeMachine, PlankMachine
from .physio import FatigueConfig, HRZoneConfig, detect_fatigue, hr_zone
from .simulator import curl_pose, lunge_pose, plank_pose

STAGES = ("capture", "pose", "physio", "llm", "tts")


@dataclass(frozen=True)
class StageTiming:
    """One pipeline stage's duration for one feedback event."""

    stage: str
    duration_ms: float

    def __post_init__(self):
        if self.stage not in STAGES:
            raise InvariantViolation(f"unknown stage {self.stage!r}")
        if not (self.duration_ms >= 0.0):
            raise InvariantViolation("stage duration must be >= 0")


@dataclass(frozen=True)
class ErrorSpan:
    kind: FormErrorKind
    start_ms: float
    end_ms: float

    def __post_init__(self):
        if not (self.end_ms > self.start_ms):
            raise InvariantViolation("error span must have positive length")


@dataclass(frozen=True)
class AnnotatedTrace:
    """A landmark stream with ground-truth reps and form-error spans."""

    exercise: ExerciseKind
    frames: tuple
    rep_boundaries: tuple = ()
    error_spans: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "rep_boundaries", tuple(self.rep_boundaries))
        object.__setattr__(self, "error_spans", tuple(self.error_spans))
        bounds = self.rep_boundaries
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise InvariantViolation("rep boundaries must be strictly monotone")
        by_kind: Dict[FormErrorKind, List[ErrorSpan]] = {}
        for span in self.error_spans:
            by_kind.setdefault(span.kind, []).append(span)
        for spans in by_kind.values():
            spans.sort(key=lambda s: s.start_ms)
            for a, b in zip(spans, spans[1:]):
                if b.start_ms < a.end_ms:
                    raise InvariantViolation(
                        f"overlapping {a.kind.value} spans at {b.start_ms}")

    @property
    def gt_reps(self) -> int:
        return len(self.rep_boundaries)


def save_trace(path: str, trace: AnnotatedTrace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        meta = {
            "t": "meta",
            "exercise": trace.exercise.value,
            "gt_reps": trace.gt_reps,
            "rep_boundaries": list(trace.rep_boundaries),
            "error_spans": [
                {"kind": s.kind.value, "start_ms": s.start_ms, "end_ms": s.end_ms}
                for s in trace.error_spans
            ],
        }
        fh.write(dumps_doc(meta) + "\n")
        for frame in trace.frames:
            fh.write(encode_event(frame) + "\n")


def load_trace(path: str) -> AnnotatedTrace:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip()
        try:
            meta = json.loads(head)
        except json.JSONDecodeError as err:
            raise MalformedLine(f"{path}: bad meta line: {err}") from None
        if meta.get("t") != "meta":
            raise MalformedLine(f"{path}: first line is not a meta record")
        frames = [decode_event(line) for line in fh if line.strip()]
    spans = tuple(
        ErrorSpan(FormErrorKind(d["kind"]), float(d["start_ms"]), float(d["end_ms"]))
        for d in meta.get("error_spans", ())
    )
    return AnnotatedTrace(
        exercise=ExerciseKind(meta["exercise"]),
        frames=tuple(frames),
        rep_boundaries=tuple(float(b) for b in meta.get("rep_boundaries", ())),
        error_spans=spans,
    )


def _machine_for(kind: ExerciseKind, cfg: EngineConfig):
    if kind is ExerciseKind.LUNGE:
        return LungeMachine(cfg.lunge, cfg.persist_frames, cfg.min_visibility)
    if kind is ExerciseKind.BICEP_CURL:
        return CurlMachine(cfg.curl, cfg.persist_frames, cfg.min_visibility)
    if kind is ExerciseKind.ELBOW_PLANK:
        return PlankMachine(1e9, cfg.plank, cfg.persist_frames,
                            cfg.min_visibility, cfg.max_frame_gap_ms)
    raise InvariantViolation(f"no machine for {kind.value}")


def count_reps(trace: AnnotatedTrace, cfg: Optional[EngineConfig] = None) -> int:
    cfg = cfg or EngineConfig()
    machine = _machine_for(trace.exercise, cfg)
    reps = 0
    for frame in trace.frames:
        for ev in machine.step(frame):
            if ev.kind.name == "REP_COMPLETED":
                reps += 1
    return reps


def predicted_intervals(trace: AnnotatedTrace,
                        cfg: Optional[EngineConfig] = None) -> List[Tuple[float, float]]:
    """Detected form-error intervals [start_ms, end_ms), span-timestamped."""
    cfg = cfg or EngineConfig()
    machine = _machine_for(trace.exercise, cfg)
    opens: Dict[FormErrorKind, float] = {}
    out: List[Tuple[float, float]] = []

    def handle(ev):
        ts = ev.span_ts if ev.span_ts is not None else ev.ts
        if ev.kind.name == "FORM_ERROR_STARTED":
            opens[ev.error] = ts
        elif ev.kind.name == "FORM_ERROR_ENDED":
            start = opens.pop(ev.error, None)
            if start is not None:
                out.append((start, ts))

    for frame in trace.frames:
        for ev in machine.step(frame):
            handle(ev)
    last_ts = trace.frames[-1].ts if trace.frames else 0.0
    for ev in machine.finalize(last_ts):
        handle(ev)
    for kind, start in opens.items():
        out.append((start, last_ts))
    return sorted(out)


def confusion_metrics(tp: int, fp: int, fn: int, tn: int) -> dict:
    """Standard binary metrics; undefined precision reported as 0, flagged."""
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    undefined = (tp + fp) == 0
    precision = 0.0 if undefined else tp / (tp + fp)
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn,
            "accuracy": accuracy, "precision": precision, "recall": recall,
            "f1": f1, "precision_undefined": undefined}


def _ratio_pct(gt: int, counted: int) -> float:
    if gt == 0 and counted == 0:
        return 100.0
    hi = max(gt, counted)
    return 100.0 * min(gt, counted) / hi if hi else 100.0


def eval_reps(traces: Sequence[AnnotatedTrace],
              cfg: Optional[EngineConfig] = None) -> List[dict]:
    """Per-exercise {ground_truth, counted, accuracy_pct} plus a totals row."""
    cfg = cfg or EngineConfig()
    per: Dict[str, List[int]] = {}
    for trace in traces:
        row = per.setdefault(trace.exercise.value, [0, 0])
        row[0] += trace.gt_reps
        row[1] += count_reps(trace, cfg)
    rows = [
        {"exercise": name, "ground_truth": gt, "counted": counted,
         "accuracy_pct": _ratio_pct(gt, counted)}
        for name, (gt, counted) in sorted(per.items())
    ]
    gt_total = sum(r["ground_truth"] for r in rows)
    counted_total = sum(r["counted"] for r in rows)
    rows.append({"exercise": "total", "ground_truth": gt_total,
                 "counted": counted_total,
                 "accuracy_pct": _ratio_pct(gt_total, counted_total)})
    return rows


def _covered(ts: float, intervals: Sequence[Tuple[float, float]]) -> bool:
    return any(start <= ts < end for start, end in intervals)


def eval_form(traces: Sequence[AnnotatedTrace],
              cfg: Optional[EngineConfig] = None) -> List[dict]:
    """Frame-level confusion metrics per exercise (positive = error present)."""
    cfg = cfg or EngineConfig()
    if not traces:
        raise EmptyCorpus("no annotated traces")
    per: Dict[str, List[int]] = {}
    for trace in traces:
        if not trace.frames:
            continue
        cells = per.setdefault(trace.exercise.value, [0, 0, 0, 0])
        gt_ivs = [(s.start_ms, s.end_ms) for s in trace.error_spans]
        pred_ivs = predicted_intervals(trace, cfg)
        for frame in trace.frames:
            actual = _covered(frame.ts, gt_ivs)
            predicted = _covered(frame.ts, pred_ivs)
            if actual and predicted:
                cells[0] += 1
            elif predicted:
                cells[1] += 1
            elif actual:
                cells[2] += 1
            else:
                cells[3] += 1
    if not per:
        raise EmptyCorpus("annotated traces contain no frames")
    rows = []
    for name in sorted(per):
        tp, fp, fn, tn = per[name]
        rows.append({"exercise": name, **confusion_metrics(tp, fp, fn, tn)})
    return rows


# ----------------------------------------------------------------------
# latency

def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not values:
        raise InsufficientEvents(0, 1)
    if not (0.0 < p <= 100.0):
        raise InvariantViolation(f"percentile p={p} outside (0, 100]")
    ordered = sorted(values)
    rank = math.ceil(p / 100.0 * len(ordered))
    return ordered[rank - 1]


def latency_report(events: Sequence[Mapping[str, float]],
                   min_events: int = 30) -> List[dict]:
    """Per-stage mean/median/p95 rows plus a per-event total row.

    Each event maps stage name -> duration_ms. The total row aggregates
    per-event sums, so its mean equals the sum of stage means while the
    median is additive only when stages are comonotone.
    """
    if len(events) < min_events:
        raise InsufficientEvents(len(events), min_events)
    stage_values: Dict[str, List[float]] = {}
    totals: List[float] = []
    for ev in events:
        for stage, ms in ev.items():
            if stage not in STAGES:
                raise InvariantViolation(f"unknown stage {stage!r}")
            stage_values.setdefault(stage, []).append(float(ms))
        totals.append(sum(float(v) for v in ev.values()))

    def stats(name: str, values: List[float]) -> dict:
        return {"stage": name,
                "mean_ms": sum(values) / len(values),
                "median_ms": percentile(values, 50.0),
                "p95_ms": percentile(values, 95.0),
                "events": len(values)}

    rows = [stats(name, stage_values[name])
            for name in STAGES if name in stage_values]
    rows.append(stats("total", totals))
    return rows


def timings_to_events(timings: Sequence[Tuple[int, StageTiming]]) -> List[dict]:
    """Group (event_index, StageTiming) pairs into per-event stage maps."""
    events: Dict[int, dict] = {}
    for idx, timing in timings:
        events.setdefault(idx, {})[timing.stage] = timing.duration_ms
    return [events[k] for k in sorted(events)]


def bench(cfg: Optional[BenchConfig] = None, events: Optional[int] = None,
          seed: int = 97) -> List[dict]:
    """Synthetic per-event stage latencies, log-normal and comonotone.

    Each stage's sigma comes from its configured mean/median ratio
    (sigma^2 = 2 ln(mean/median), mu = ln(median)); a single standard
    normal draw per event is shared by all stages, so every stage rises
    and falls together and per-event totals keep additive medians.
    """
    cfg = cfg or BenchConfig()
    n = events if events is not None else cfg.events
    params = {}
    for stage, (mean, median) in (("capture", cfg.capture_ms),
                                  ("pose", cfg.pose_ms),
                                  ("physio", cfg.physio_ms),
                                  ("llm", cfg.llm_ms),
                                  ("tts", cfg.tts_ms)):
        if not (mean >= median > 0):
            raise InvariantViolation(
                f"{stage}: need mean >= median > 0, got {mean}/{median}")
        sigma = math.sqrt(2.0 * math.log(mean / median))
        params[stage] = (math.log(median), sigma)
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        z = rng.gauss(0.0, 1.0)
        out.append({stage: math.exp(mu + sigma * z)
                    for stage, (mu, sigma) in params.items()})
    return out


def measure_compute(lines: Sequence[str],
                    exercise: ExerciseKind = ExerciseKind.LUNGE,
                    cfg: Optional[EngineConfig] = None) -> List[dict]:
    """Wall-clock the compute-only pipeline per encoded landmark line.

    Stages measured: capture (NDJSON parse), pose (machine step), and
    physio (zone plus fatigue classification on fixed inputs). No
    backend, no speech, no sleeping.
    """
    cfg = cfg or EngineConfig()
    machine = _machine_for(exercise, cfg)
    zone_cfg = HRZoneConfig(cfg.hr_band_bpm, cfg.safe_max_fraction)
    fat_cfg = FatigueConfig(cfg.fatigue_threshold, cfg.fatigue_combine)

    class _Baseline:
        pitch_hz = 180.0
        loudness_db = 60.0
        zcr = 0.12

    from .core.types import VocalFrame
    events = []
    for line in lines:
        t0 = time.perf_counter()
        event = decode_event(line)
        t1 = time.perf_counter()
        if isinstance(event, LandmarkFrame):
            machine.step(event)
        t2 = time.perf_counter()
        hr_zone(150.0, 140.0, zone_cfg)
        detect_fatigue(VocalFrame(ts=event.ts, pitch_hz=170.0,
                                  loudness_db=62.0, zcr=0.13),
                       _Baseline(), fat_cfg)
        t3 = time.perf_counter()
        events.append({"capture": (t1 - t0) * 1000.0,
                       "pose": (t2 - t1) * 1000.0,
                       "physio": (t3 - t2) * 1000.0})
    return events


# ----------------------------------------------------------------------
# corpus builders

_REP_SPEC = {
    ExerciseKind.LUNGE: (7, 15, 3.0),        # traces x reps, period_s
    ExerciseKind.BICEP_CURL: (5, 19, 2.5),
}


def _noise(rng: random.Random, sigma: float) -> float:
    return rng.gauss(0.0, sigma) if sigma > 0 else 0.0


def _noisy_frame(ts: float, pts, rng: random.Random, sigma: float) -> LandmarkFrame:
    jittered = tuple(
        (x + _noise(rng, sigma), y + _noise(rng, sigma), z, vis)
        for x, y, z, vis in pts
    )
    return LandmarkFrame(ts=ts, landmarks=jittered)


def _lunge_step_in(t_s: float) -> float:
    # hip walks onto its rail during the first half second, which gives
    # the machine a displacement to infer the facing direction from
    return 0.37 + 0.08 * min(t_s / 0.5, 1.0)


def _lunge_knee(t_s: float, period_s: float) -> float:
    if t_s < 0.5:
        return 172.0
    return 130.0 + 42.0 * math.cos(2.0 * math.pi * (t_s - 0.5) / period_s)


def build_rep_corpus(sigma: float = 0.01, fps: float = 60.0,
                     seed: int = 1201) -> List[AnnotatedTrace]:
    """Deterministic rep-count corpus: 105 lunge and 95 curl reps."""
    rng = random.Random(f"{seed}:reps")
    traces: List[AnnotatedTrace] = []
    dt = 1000.0 / fps
    for kind, (n_traces, reps, period_s) in _REP_SPEC.items():
        lead = 0.5 if kind is ExerciseKind.LUNGE else 0.0
        duration_s = lead + reps * period_s + 0.4
        total = int(duration_s * fps)
        for _ in range(n_traces):
            frames = []
            for i in range(total):
                ts = i * dt
                t_s = ts / 1000.0
                if kind is ExerciseKind.LUNGE:
                    pts = lunge_pose(_lunge_knee(t_s, period_s),
                                     _lunge_step_in(t_s))
                else:
                    theta = 100.0 + 70.0 * math.cos(
                        2.0 * math.pi * t_s / period_s)
                    pts = curl_pose(theta, 0.0)
                frames.append(_noisy_frame(ts, pts, rng, sigma))
            bounds = tuple((lead + (k + 1) * period_s) * 1000.0
                           for k in range(reps))
            traces.append(AnnotatedTrace(exercise=kind, frames=tuple(frames),
                                         rep_boundaries=bounds))
    return traces


_FORM_SPEC = {
    ExerciseKind.LUNGE: FormErrorKind.KNEE_OVER_TOE,
    ExerciseKind.BICEP_CURL: FormErrorKind.LOOSE_UPPER_ARM,
    ExerciseKind.ELBOW_PLANK: FormErrorKind.LOW_BACK,
}


def _form_pts(kind: ExerciseKind, t_s: float, period_s: float, bad: bool,
              flip: bool):
    if kind is ExerciseKind.LUNGE:
        knee = _lunge_knee(t_s, period_s)
        pts = lunge_pose(knee, _lunge_step_in(t_s))
        if bad:
            # drag the foot behind the knee in the facing direction
            pts = list(pts)
            pts[LEFT_FOOT_INDEX] = (pts[LEFT_KNEE][0] - 0.08, 0.87, 0.0, 0.95)
            pts = tuple(pts)
        return pts
    if kind is ExerciseKind.BICEP_CURL:
        theta = 100.0 + 70.0 * math.cos(2.0 * math.pi * t_s / period_s)
        return curl_pose(theta, 50.0 if bad else 0.0)
    offset = 0.0
    if bad:
        offset = 0.10 if flip else -0.10
    return plank_pose(offset)


def build_form_corpus(sigma: float = 0.01, fps: float = 60.0,
                      windows: int = 250, window_s: float = 2.0,
                      gap_s: float = 2.0, seed: int = 1693,
                      traces_per_exercise: int = 10) -> List[AnnotatedTrace]:
    """Alternating clean/error windows; >= 2*windows+1 spans per exercise."""
    rng = random.Random(f"{seed}:form")
    traces: List[AnnotatedTrace] = []
    dt = 1000.0 / fps
    per_trace = windows // traces_per_exercise
    for kind, err in _FORM_SPEC.items():
        period_s = {ExerciseKind.LUNGE: 3.0, ExerciseKind.BICEP_CURL: 2.5,
                    ExerciseKind.ELBOW_PLANK: 0.0}[kind]
        for t_i in range(traces_per_exercise):
            n_win = per_trace + (1 if t_i < windows % traces_per_exercise else 0)
            duration_s = gap_s + n_win * (window_s + gap_s)
            total = int(duration_s * fps)
            spans = []
            for w in range(n_win):
                start_s = gap_s + w * (window_s + gap_s)
                err_kind = err
                if kind is ExerciseKind.ELBOW_PLANK and w % 2 == 1:
                    err_kind = FormErrorKind.HIGH_BACK
                spans.append(ErrorSpan(err_kind, start_s * 1000.0,
                                       (start_s + window_s) * 1000.0))
            frames = []
            for i in range(total):
                ts = i * dt
                t_s = ts / 1000.0
                active = next((s for s in spans
                               if s.start_ms <= ts < s.end_ms), None)
                pts = _form_pts(kind, t_s, period_s, active is not None,
                                active is not None
                                and active.kind is FormErrorKind.HIGH_BACK)
                frames.append(_noisy_frame(ts, pts, rng, sigma))
            traces.append(AnnotatedTrace(exercise=kind, frames=tuple(frames),
                                         error_spans=tuple(spans)))
    return traces


# ----------------------------------------------------------------------
# rendering

def render_table(headers: Sequence[str], rows: Sequence[Sequence],
                 precision: int = 1) -> str:
    """Aligned plain-text table; floats rendered at fixed precision."""
    def fmt(v):
        if isinstance(v, bool):
            return "yes" if v else "no"
        if isinstance(v, float):
            return f"{v:.{precision}f}"
        return str(v)

    cells = [[fmt(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    def line(parts):
        return "  ".join(p.ljust(w) for p, w in zip(parts, widths)).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(r) for r in cells)
    return "\n".join(out)


def write_csv(path: str, headers: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        writer.writerows(rows)


def rep_table(rows: Sequence[dict], precision: int = 1) -> str:
    return render_table(
        ("exercise", "ground_truth", "counted", "accuracy_pct"),
        [(r["exercise"], r["ground_truth"], r["counted"], r["accuracy_pct"])
         for r in rows], precision)


def form_table(rows: Sequence[dict], precision: int = 3) -> str:
    return render_table(
        ("exercise", "accuracy", "precision", "recall", "f1", "undefined_precision"),
        [(r["exercise"], r["accuracy"], r["precision"], r["recall"], r["f1"],
          r["precision_undefined"]) for r in rows], precision)


def latency_table(rows: Sequence[dict], precision: int = 1) -> str:
    return render_table(
        ("stage", "mean_ms", "median_ms", "p95_ms", "events"),
        [(r["stage"], r["mean_ms"], r["median_ms"], r["p95_ms"], r["events"])
         for r in rows], precision)
