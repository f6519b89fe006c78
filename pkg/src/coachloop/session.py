"""Workout session orchestration.

One logical event loop owns all mutable state. Sensor events arrive in
timestamp order (the ingest layer guarantees this), drive the active
exercise machine and physiological inference, and every step may emit
snapshot records, trigger evaluations, and interventions. Backend
results re-enter synchronously at the current tick, which with the
zero-latency offline backend keeps full runs byte-reproducible.

Phase flow: a pre-session baseline capture, then the planned phases in
order, with rest windows between sets and phases. Rest durations always
come from a validated RestPlan (backend-parsed or fallback), never from
raw backend text. Checkpoints land at Start and after each phase group.
"""
from __future__ import annotations

import json
import platform
import subprocess
import sys
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from . import __version__
from .config import EngineConfig
from .core.plan import (BalancePhase, CardioMode, CardioPhase,
                        FlexibilityPhase, SessionPlan, StrengthPhase)
from .core.phr import GoalKind, PhysicalHealthReport
from .core.types import (Exercise, ExerciseKind, FormErrorKind, HRSample,
                         HRZone, Intervention, InterventionCategory,
                         InterventionSource, LandmarkFrame, MachineEvent,
                         PainLevel, PainObservation, RestPlan, SteeringCommand,
                         SteeringKind, UserStateSnapshot, VocalFrame,
                         CATEGORY_PRIORITY)
from .core.wire import dumps_doc, encode_event
from .errors import (BackendTimeout, BaselineUnavailable, DeliveryFailed,
                     InvariantViolation, TransportError, Unparseable)
from .ingest import BaselineTracker, current_hr
from .interventions import (DEFAULT_RULES, InterventionRequest, SchedulerState,
                            debounce, evaluate, rep_announcement_policy)
from .machines import CurlMachine, LungeMachine, PlankMachine, YogaMachine
from .physio import (FatigueConfig, HRZoneConfig, classify_pain, detect_fatigue,
                     hr_zone, intensity_fraction, karvonen_target, safe_max_bpm)
from .reasoning import (build_inter_exercise_prompt, build_intra_exercise_prompt,
                        enforce_word_cap, fallback_rest, generate,
                        parse_rest_plan, VignetteWriter)

REP_PERIOD_S = {ExerciseKind.LUNGE: 3.0, ExerciseKind.BICEP_CURL: 2.5}

_CARDIO = Exercise(ExerciseKind.CARDIO)


@dataclass(frozen=True)
class Directive:
    """What the session asks the exerciser to do right now."""

    activity: str                       # baseline | cardio | reps | hold | rest | done
    exercise: Optional[Exercise]
    phase_index: int
    set_index: int
    load_bpm: float
    rep_period_s: float = 3.0
    paused: bool = False


@dataclass
class SessionOutputs:
    """Per-batch results handed back to the driver."""

    interventions: List[Intervention] = field(default_factory=list)
    what_if: List[Tuple[SteeringCommand, RestPlan]] = field(default_factory=list)
    records: List[dict] = field(default_factory=list)
    done: bool = False


class SessionLog:
    """Append-only NDJSON record sink, kept in memory and optionally on disk."""

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self.lines: List[str] = []
        self.records: List[dict] = []
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def write(self, record: dict) -> None:
        line = dumps_doc(record)
        self.lines.append(line)
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(line + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class SpeechAdapter:
    """Delivery stub: deterministic latency model, optional external command.

    The latency model charges a fixed synthesis cost plus per-word
    speaking time, so delivery records are reproducible offline.
    """

    def __init__(self, sink=None, command: Optional[Tuple[str, ...]] = None):
        self.sink = sink
        self.command = tuple(command) if command else None

    def deliver(self, intervention: Intervention) -> float:
        words = len(intervention.text.split())
        latency_ms = 180.0 + 60.0 * words
        if self.sink is not None:
            self.sink(intervention)
        if self.command:
            proc = subprocess.run(list(self.command) + [intervention.text],
                                  capture_output=True)
            if proc.returncode != 0:
                raise DeliveryFailed(
                    f"speech command exited {proc.returncode}")
        return latency_ms


def adjust_next_set(reps_done: int, form_error_count: int, end_zone: HRZone,
                    fatigued: bool) -> int:
    """Deterministic progression delta for the next set.

    Clean work (no form errors, heart rate at or below target, no
    fatigue) earns one increment step; three or more form-error
    episodes, or fatigue, steps back; anything else holds.
    """
    if form_error_count >= 3 or fatigued:
        return -1
    if form_error_count == 0 and end_zone is not HRZone.ABOVE:
        return 1
    return 0


@dataclass
class _PhaseExec:
    index: int
    group: str                          # cardio | strength | balance | flexibility
    label: str
    exercise: Optional[Exercise]
    sets: int
    target_reps: int = 0
    weight_kg: float = 0.0
    hold_s: float = 0.0
    duration_s: float = 0.0
    mode: CardioMode = CardioMode.LISS
    poses: tuple = ()

    def exercise_for_set(self, set_i: int) -> Exercise:
        if self.group == "flexibility":
            return Exercise(ExerciseKind.YOGA, self.poses[set_i])
        return self.exercise


def _flatten(plan: SessionPlan) -> List[_PhaseExec]:
    out: List[_PhaseExec] = []
    for i, ph in enumerate(plan.phases):
        if isinstance(ph, CardioPhase):
            out.append(_PhaseExec(i, "cardio", "Cardio", _CARDIO, sets=1,
                                  duration_s=ph.duration_s, mode=ph.mode))
        elif isinstance(ph, StrengthPhase):
            out.append(_PhaseExec(i, "strength", ph.exercise.label, ph.exercise,
                                  sets=ph.sets, target_reps=ph.target_reps,
                                  weight_kg=ph.weight_kg))
        elif isinstance(ph, BalancePhase):
            out.append(_PhaseExec(i, "balance", "Elbow Plank",
                                  Exercise(ExerciseKind.ELBOW_PLANK),
                                  sets=ph.sets, hold_s=ph.target_hold_s))
        elif isinstance(ph, FlexibilityPhase):
            out.append(_PhaseExec(i, "flexibility", "Yoga", None,
                                  sets=len(ph.poses), hold_s=ph.target_hold_s,
                                  poses=ph.poses))
        else:
            raise InvariantViolation(f"unknown phase type {type(ph).__name__}")
    return out


def _goal_text(phr: PhysicalHealthReport) -> str:
    if phr.goal.kind is GoalKind.CUSTOM:
        return phr.goal.text
    return phr.goal.kind.value


class SessionEngine:
    """Push-based engine: feed it ordered events, read back outputs."""

    def __init__(self, phr: PhysicalHealthReport, plan: SessionPlan,
                 config: EngineConfig, backend,
                 log_path: Optional[str] = None,
                 vignette_path: Optional[str] = None,
                 speech: Optional[SpeechAdapter] = None,
                 rules=None):
        self.phr = phr
        self.plan = plan
        self.cfg = config
        self.backend = backend
        self.speech = speech or SpeechAdapter()
        self.rules = list(rules) if rules is not None else list(DEFAULT_RULES)
        self.log = SessionLog(log_path)
        self.vignettes = VignetteWriter(vignette_path) if vignette_path else None

        self.fatigue_cfg = FatigueConfig(config.fatigue_threshold,
                                         config.fatigue_combine)
        self.zone_cfg = HRZoneConfig(config.hr_band_bpm, config.safe_max_fraction)
        self.safe_max = safe_max_bpm(phr.age, self.zone_cfg)

        self.phases = _flatten(plan)
        self.tracker = BaselineTracker(config.hr_baseline_samples,
                                       config.vocal_baseline_window_s,
                                       config.vocal_baseline_min_frames)
        self.sched = SchedulerState()

        self.state = "baseline"
        self.done = False
        self.now = 0.0
        self._last_applied = float("-inf")
        self.paused = False

        self.hr_history: deque = deque(maxlen=max(config.hr_window, 8))
        self.hr_baseline: Optional[float] = None
        self.vocal_baseline = None
        self.hr_target: Optional[float] = None
        self.current_bpm: Optional[float] = None
        self.zone: Optional[HRZone] = None
        self._zone_since = 0.0
        self.fatigued = False
        self.pain = PainLevel.LOW
        self._active_errors: Dict[FormErrorKind, bool] = {}

        self.phase_i = -1
        self.set_i = 0
        self.machine = None
        self.rep_count = 0
        self._rep_offset = 0
        self._hold_offset_s = 0.0
        self._set_errors = 0
        self._set_t0 = 0.0
        self._phase_t0 = 0.0
        self._last_progress = 0.0
        self._snapshot_exercise: Exercise = self.phases[0].exercise or _CARDIO
        self._set_params: Dict[int, float] = {}    # phase index -> weight or hold

        self.segment: Optional[str] = None
        self._segment_t0 = 0.0
        self._segment_pulse = False
        self._progress_pulse = False
        self._last_progress_mark = 0.0

        self._rest_until: Optional[float] = None
        self._after_rest: Optional[tuple] = None
        self._pause_continuation: Optional[tuple] = None

        self._pending: List[dict] = []       # structural announcements, retried
        self._pending_seq = 0
        self._tick_requests: List[InterventionRequest] = []
        self._last_snapshot_key = None
        self._last_snapshot_ts = float("-inf")
        self._out: Optional[SessionOutputs] = None

        self.directive = Directive("baseline", self._snapshot_exercise, -1, 0,
                                   load_bpm=65.0)
        self.log.write({
            "rec": "header", "version": __version__, "schema": 1,
            "host": platform.platform(), "python": sys.version.split()[0],
            "created_ms": int(time.time() * 1000),
        })

    # ------------------------------------------------------------------
    # event entry points

    def process(self, event) -> SessionOutputs:
        return self.process_many([event])

    def process_many(self, events: Iterable) -> SessionOutputs:
        out = SessionOutputs()
        self._out = out
        for e in events:
            if self.done:
                break
            self._apply(e, out)
        out.done = self.done
        self._out = None
        return out

    def finalize_stream(self) -> None:
        """The input stream ended; close the log gracefully."""
        if self.done:
            return
        if self.state == "baseline":
            self.close()
            raise BaselineUnavailable(
                "stream ended before baselines were captured")
        if self.machine is not None:
            self.machine.finalize(self.now)
            self.machine = None
        self._write({"rec": "end", "ts": self.now, "partial": True,
                     "reason": "stream_ended"})
        self.done = True
        self.close()

    def close(self) -> None:
        self.log.close()
        if self.vignettes is not None:
            self.vignettes.close()
            self.vignettes = None

    # ------------------------------------------------------------------
    # core loop

    def _apply(self, e, out: SessionOutputs) -> None:
        if e.ts < self._last_applied:
            raise InvariantViolation(
                f"event at {e.ts} arrived after {self._last_applied}")
        self._last_applied = e.ts
        self.now = e.ts
        self._log_digest(e)
        if isinstance(e, HRSample):
            self._on_hr(e)
        elif isinstance(e, VocalFrame):
            self._on_vocal(e)
        elif isinstance(e, PainObservation):
            self.pain = classify_pain(e)
        elif isinstance(e, LandmarkFrame):
            self._on_frame(e, out)
        elif isinstance(e, SteeringCommand):
            self._on_steer(e, out)
        self._progress_time(out)
        if self.state not in ("baseline",) and not self.done:
            self._snapshot_and_triggers(out)
        self._tick_requests = []

    def _log_digest(self, e) -> None:
        if isinstance(e, LandmarkFrame):
            self._write({"rec": "event", "t": "lm", "ts": e.ts})
        else:
            doc = json.loads(encode_event(e))
            doc = {"rec": "event", **doc}
            self._write(doc)

    def _write(self, record: dict) -> None:
        self.log.write(record)
        if self._out is not None:
            self._out.records.append(record)

    # ------------------------------------------------------------------
    # sensor handlers

    def _on_hr(self, e: HRSample) -> None:
        self.hr_history.append(e)
        if self.state == "baseline":
            self.tracker.offer(e)
            return
        self.current_bpm = current_hr(list(self.hr_history), self.cfg.hr_window)
        if self.hr_target is not None:
            z = hr_zone(self.current_bpm, self.hr_target, self.zone_cfg)
            if z is not self.zone:
                self.zone = z
                self._zone_since = e.ts

    def _on_vocal(self, e: VocalFrame) -> None:
        if self.state == "baseline":
            self.tracker.offer(e)
            return
        if self.vocal_baseline is not None:
            self.fatigued, _ = detect_fatigue(e, self.vocal_baseline,
                                              self.fatigue_cfg)

    def _on_frame(self, e: LandmarkFrame, out: SessionOutputs) -> None:
        if self.state == "baseline":
            self.tracker.offer(e)
            return
        if self.machine is None or self.paused or self.state not in ("reps", "hold"):
            return
        events = self.machine.step(e)
        pe = self.phases[self.phase_i]
        if self.state == "hold":
            done = self._hold_offset_s + getattr(
                self.machine, "correct_elapsed_s",
                getattr(self.machine, "hold_elapsed_s", 0.0))
            full = self._full_hold_target()
            self._last_progress = min(1.0, done / full) if full > 0 else 1.0
        for ev in events:
            self._on_machine_event(ev, pe, out)

    def _on_machine_event(self, ev: MachineEvent, pe: _PhaseExec,
                          out: SessionOutputs) -> None:
        if ev.kind is MachineEvent.Kind.REP_COMPLETED:
            self.rep_count = self._rep_offset + (ev.rep_count or 0)
            self._last_progress = min(1.0, self.rep_count / pe.target_reps)
            self._tick_requests.append(rep_announcement_policy(
                ev.ts, self.rep_count, pe.target_reps))
            if self.rep_count >= pe.target_reps and self.state == "reps":
                self._end_set(out)
        elif ev.kind is MachineEvent.Kind.FORM_ERROR_STARTED:
            self._active_errors[ev.error] = True
            self._set_errors += 1
        elif ev.kind is MachineEvent.Kind.FORM_ERROR_ENDED:
            self._active_errors.pop(ev.error, None)
        elif ev.kind is MachineEvent.Kind.TARGET_REACHED and self.state == "hold":
            self._end_set(out)

    def _on_steer(self, e: SteeringCommand, out: SessionOutputs) -> None:
        if e.kind is SteeringKind.WHAT_IF_REST:
            out.what_if.append((e, self._hypothetical_rest()))
        elif e.kind is SteeringKind.SKIP_REST:
            if self.state == "rest" and self._rest_until is not None:
                self._rest_until = self.now
        elif e.kind is SteeringKind.PAUSE_RESUME:
            self._toggle_pause(out)
        # exertion/pain/error injections steer the exerciser, not the session

    def _hypothetical_rest(self) -> RestPlan:
        if self.hr_baseline is None or self.current_bpm is None:
            return RestPlan(self.cfg.rest_floor_s,
                            "Baseline still settling; a short breather works.")
        completed = self._snapshot_exercise
        nxt = self._next_exercise_label()
        plan, _, _ = self._rest_plan_from_backend(completed.label, nxt)
        return plan

    def _toggle_pause(self, out: SessionOutputs) -> None:
        if not self.paused:
            if self.state in ("reps", "hold"):
                self._suspend_set()
            self.paused = True
        else:
            self.paused = False
            if self.state in ("reps", "hold"):
                self._resume_set()
        self._refresh_directive()

    # ------------------------------------------------------------------
    # time-driven progression

    def _progress_time(self, out: SessionOutputs) -> None:
        if self.done or self.paused:
            return
        if self.state == "baseline":
            if self.tracker.ready():
                self._start_session(out)
            return
        if self.state == "rest":
            if self._rest_until is not None and self.now >= self._rest_until:
                self._rest_until = None
                cont, self._after_rest = self._after_rest, None
                self._dispatch(cont, out)
            return
        if self.state == "cardio":
            self._cardio_tick(out)

    def _dispatch(self, cont: Optional[tuple], out: SessionOutputs) -> None:
        if cont is None:
            return
        if cont[0] == "start_set":
            self._start_set(cont[1], out)
        elif cont[0] == "start_phase":
            self._start_phase(cont[1], out)
        elif cont[0] == "resume_set":
            self.state = cont[1]
            self._resume_set()
            self._refresh_directive()
        elif cont[0] == "resume_cardio":
            pause_len = self.now - cont[1]
            self._phase_t0 += pause_len
            self._segment_t0 += pause_len
            self._last_progress_mark += pause_len
            self.state = "cardio"
            self._refresh_directive()

    def _start_session(self, out: SessionOutputs) -> None:
        self.hr_baseline = self.tracker.hr_baseline().bpm
        self.vocal_baseline = self.tracker.vocal_baseline()
        mode = next((p.mode for p in self.phases if p.group == "cardio"),
                    CardioMode.LISS)
        frac = intensity_fraction(self.phr.preferred_intensity, mode,
                                  self.cfg.intensity_table)
        self.hr_target = karvonen_target(self.hr_baseline, self.phr.age, frac)
        self.current_bpm = current_hr(list(self.hr_history), self.cfg.hr_window)
        self.zone = hr_zone(self.current_bpm, self.hr_target, self.zone_cfg)
        self._zone_since = self.now
        self._checkpoint("Start")
        self._start_phase(0, out)

    def _start_phase(self, i: int, out: SessionOutputs) -> None:
        if i >= len(self.phases):
            self._begin_finish()
            return
        self.phase_i = i
        pe = self.phases[i]
        self._phase_t0 = self.now
        self._last_progress_mark = self.now
        self._segment_pulse = False
        self._progress_pulse = False
        self._set_params.setdefault(
            i, pe.weight_kg if pe.group == "strength" else pe.hold_s)
        self._write({"rec": "phase", "ts": self.now, "index": i,
                     "group": pe.group, "label": pe.label, "event": "start"})
        if pe.group == "cardio":
            self.state = "cardio"
            self.segment = "WarmUp"
            self._segment_t0 = self.now
            self._segment_pulse = True
            self._snapshot_exercise = _CARDIO
            self._last_progress = 0.0
            self._refresh_directive()
        else:
            self._start_set(0, out)

    def _start_set(self, si: int, out: SessionOutputs) -> None:
        pe = self.phases[self.phase_i]
        self.set_i = si
        self.rep_count = 0
        self._rep_offset = 0
        self._hold_offset_s = 0.0
        self._set_errors = 0
        self._set_t0 = self.now
        self._last_progress = 0.0
        self._active_errors.clear()
        self._snapshot_exercise = pe.exercise_for_set(si)
        self.machine = self._make_machine(pe, None)
        self.state = "reps" if pe.group == "strength" else "hold"
        self._refresh_directive()

    def _full_hold_target(self) -> float:
        return self._set_params.get(self.phase_i, 0.0) or self.phases[
            self.phase_i].hold_s

    def _make_machine(self, pe: _PhaseExec, remaining_s: Optional[float]):
        cfg = self.cfg
        if pe.group == "strength":
            if pe.exercise.kind is ExerciseKind.LUNGE:
                return LungeMachine(cfg.lunge, cfg.persist_frames,
                                    cfg.min_visibility)
            return CurlMachine(cfg.curl, cfg.persist_frames, cfg.min_visibility)
        hold = remaining_s if remaining_s is not None else self._full_hold_target()
        hold = max(hold, 1e-9)
        if pe.group == "balance":
            return PlankMachine(hold, cfg.plank, cfg.persist_frames,
                                cfg.min_visibility, cfg.max_frame_gap_ms)
        template = cfg.yoga.for_pose(self._snapshot_exercise.pose.value)
        return YogaMachine(template, hold, cfg.persist_frames,
                           cfg.min_visibility, cfg.max_frame_gap_ms)

    def _suspend_set(self) -> None:
        """Freeze set progress; the machine is rebuilt on resume."""
        if self.machine is None:
            return
        self.machine.finalize(self.now)
        if self.state == "hold":
            done = getattr(self.machine, "correct_elapsed_s",
                           getattr(self.machine, "hold_elapsed_s", 0.0))
            self._hold_offset_s += done
        self._rep_offset = self.rep_count
        self.machine = None
        self._active_errors.clear()

    def _resume_set(self) -> None:
        pe = self.phases[self.phase_i]
        remaining = None
        if pe.group in ("balance", "flexibility"):
            remaining = max(self._full_hold_target() - self._hold_offset_s, 0.5)
        self.machine = self._make_machine(pe, remaining)
        self._set_t0 = self.now

    def _end_set(self, out: SessionOutputs) -> None:
        pe = self.phases[self.phase_i]
        if self.machine is not None:
            for ev in self.machine.finalize(self.now):
                if ev.kind is MachineEvent.Kind.FORM_ERROR_ENDED:
                    self._active_errors.pop(ev.error, None)
            self.machine = None
        self._last_progress = 1.0
        last_set = self.set_i >= pe.sets - 1
        if not last_set:
            self._adjust_for_next_set(pe)
            completed = self._snapshot_exercise.label
            nxt = pe.exercise_for_set(self.set_i + 1).label
            self._enter_rest(completed, nxt, ("start_set", self.set_i + 1), out)
        else:
            self._end_phase(out)

    def _adjust_for_next_set(self, pe: _PhaseExec) -> None:
        delta = adjust_next_set(self.rep_count, self._set_errors,
                                self.zone or HRZone.BELOW, self.fatigued)
        cur = self._set_params[self.phase_i]
        if pe.group == "strength":
            new = max(0.0, cur + delta * self.cfg.adjust.weight_step_kg)
            param = "weight_kg"
        elif pe.group == "balance":
            new = max(5.0, cur + delta * self.cfg.adjust.hold_step_s)
            param = "hold_s"
        else:
            return    # pose changes between flexibility sets; nothing to scale
        self._set_params[self.phase_i] = new
        self._write({"rec": "adjustment", "ts": self.now,
                     "phase_index": self.phase_i, "set_index": self.set_i + 1,
                     "param": param, "from": cur, "to": new, "delta": delta})

    def _end_phase(self, out: SessionOutputs) -> None:
        pe = self.phases[self.phase_i]
        self._write({"rec": "phase", "ts": self.now, "index": pe.index,
                     "group": pe.group, "label": pe.label, "event": "end"})
        nxt = self.phases[self.phase_i + 1] if self.phase_i + 1 < len(
            self.phases) else None
        if nxt is None or nxt.group != pe.group:
            self._checkpoint(f"Post-{pe.group.capitalize()}")
        if nxt is None:
            self._begin_finish()
            return
        completed = pe.label if pe.group != "flexibility" else (
            self._snapshot_exercise.label)
        nxt_label = nxt.exercise_for_set(0).label
        self._enter_rest(completed, nxt_label,
                         ("start_phase", self.phase_i + 1), out)

    def _checkpoint(self, name: str) -> None:
        self._write({"rec": "checkpoint", "ts": self.now, "name": name,
                     "bpm": self.current_bpm})

    # ------------------------------------------------------------------
    # rest windows

    def _rest_plan_from_backend(self, completed: str, nxt: str):
        """RestPlan plus provenance; backend output is always validated."""
        prompt = build_inter_exercise_prompt(
            self.phr, completed, nxt, self.hr_baseline, self.current_bpm)
        try:
            result = generate(self.backend, prompt,
                              timeout_ms=self.cfg.backend.timeout_ms,
                              retries=self.cfg.backend.inter_retries)
            plan = parse_rest_plan(result.text)
            self._write({"rec": "stage", "ts": self.now, "stage": "reasoning",
                         "ms": result.latency_ms})
            return plan, InterventionSource.BACKEND, result
        except (BackendTimeout, TransportError, Unparseable):
            return (fallback_rest(self.current_bpm, self.hr_baseline),
                    InterventionSource.FALLBACK, None)

    def _enter_rest(self, completed: str, nxt: str, continuation: tuple,
                    out: SessionOutputs, safety: bool = False) -> None:
        if safety:
            seconds = self.cfg.rest_floor_s
            source = InterventionSource.RULE
            message = ""
        else:
            plan, source, _ = self._rest_plan_from_backend(completed, nxt)
            seconds = min(max(plan.seconds, self.cfg.rest_floor_s),
                          self.cfg.rest_cap_s)
            message = plan.message
        self.state = "rest"
        self._rest_until = self.now + seconds * 1000.0
        self._after_rest = continuation
        self._write({"rec": "rest", "ts": self.now, "seconds": seconds,
                     "source": source.value, "safety": safety,
                     "completed": completed, "next": nxt, "message": message})
        if not safety and message:
            self._queue_announcement(InterventionCategory.REST_SUGGESTION,
                                     message, source)
        self._refresh_directive()

    def _queue_announcement(self, category: InterventionCategory, text: str,
                            source: InterventionSource) -> None:
        self._pending_seq += 1
        self._pending.append({
            "id": f"queued_{self._pending_seq}",
            "category": category,
            "priority": CATEGORY_PRIORITY[category],
            "text": text,
            "source": source,
            "snapshot": self._snapshot_doc_now(),
        })

    # ------------------------------------------------------------------
    # cardio

    def _cardio_segment(self, frac: float) -> str:
        c = self.cfg.cardio
        if frac < c.warmup_frac:
            return "WarmUp"
        if frac < c.ramp_frac:
            return "Ramp"
        if frac < c.steady_frac:
            return "Steady"
        return "CoolDown"

    def _cardio_load(self) -> float:
        rest = self.hr_baseline if self.hr_baseline is not None else 65.0
        target = self.hr_target if self.hr_target is not None else rest + 60.0
        span = target - rest
        return {
            "WarmUp": rest + 0.4 * span,
            "Ramp": rest + 0.8 * span,
            "Steady": target,
            "CoolDown": rest + 0.3 * span,
        }.get(self.segment or "WarmUp", target)

    def _cardio_tick(self, out: SessionOutputs) -> None:
        pe = self.phases[self.phase_i]
        elapsed = (self.now - self._phase_t0) / 1000.0
        frac = elapsed / pe.duration_s
        self._last_progress = min(1.0, frac)
        if frac >= 1.0:
            self._end_phase(out)
            return
        seg = self._cardio_segment(frac)
        if seg != self.segment:
            self.segment = seg
            self._segment_t0 = self.now
            self._segment_pulse = True
            self._refresh_directive()
        every_ms = self.cfg.cardio.progress_every_s * 1000.0
        if self.now - self._last_progress_mark >= every_ms:
            self._last_progress_mark += every_ms
            self._progress_pulse = True

    # ------------------------------------------------------------------
    # finishing

    def _begin_finish(self) -> None:
        self.state = "finishing"
        self._refresh_directive()

    # ------------------------------------------------------------------
    # snapshots and triggers

    def _snapshot_doc_now(self) -> dict:
        return self._build_snapshot().to_doc()

    def _build_snapshot(self) -> UserStateSnapshot:
        err = next(iter(self._active_errors), None)
        return UserStateSnapshot(
            ts=self.now,
            exercise=self._snapshot_exercise,
            rep_count=self.rep_count,
            form_error=err,
            hr_zone=self.zone or HRZone.BELOW,
            current_bpm=self.current_bpm if self.current_bpm is not None else 0.0,
            fatigue_detected=self.fatigued,
            pain=self.pain,
            phase_progress=self._last_progress,
        )

    def _phase_ctx(self) -> dict:
        pe = self.phases[self.phase_i] if 0 <= self.phase_i < len(
            self.phases) else None
        persist_ms = self.cfg.cardio.persistence_s * 1000.0
        in_steady = self.state == "cardio" and self.segment == "Steady"
        zone_ref = max(self._zone_since, self._segment_t0)
        persisted = in_steady and (self.now - zone_ref) >= persist_ms
        return {
            "session_started": True,
            "session_complete": self.state == "finishing",
            "phase_kind": pe.group if pe is not None else "none",
            "phase_index": self.phase_i,
            "set_index": self.set_i,
            "hr_above_safe": (self.current_bpm or 0.0) > self.safe_max,
            "segment": self.segment if self.state == "cardio" else None,
            "segment_changed": self._segment_pulse,
            "progress_due": self._progress_pulse,
            "zone_low_persisted": persisted and self.zone is HRZone.BELOW,
            "zone_high_persisted": persisted and self.zone is HRZone.ABOVE,
            "goal": _goal_text(self.phr),
            "phase_elapsed_s": (self.now - self._phase_t0) / 1000.0,
        }

    def _snapshot_and_triggers(self, out: SessionOutputs) -> None:
        snap = self._build_snapshot()
        doc = snap.to_doc()
        key = (doc["exercise"], doc["rep_count"], doc["form_error"],
               doc["hr_zone"], doc["fatigue_detected"], doc["pain"])
        if (key != self._last_snapshot_key
                or self.now - self._last_snapshot_ts
                >= self.cfg.snapshot_log_interval_ms):
            self._write({"rec": "snapshot", **doc})
            self._last_snapshot_key = key
            self._last_snapshot_ts = self.now
        ctx = self._phase_ctx()
        requests = evaluate(doc, ctx, self.rules, self.sched)
        requests.extend(r for r in self._tick_requests if r is not None)
        for p in self._pending:
            requests.append(InterventionRequest(
                ts=self.now, category=p["category"], priority=p["priority"],
                rule_id=p["id"], text=p["text"], ask_backend=False))
        requests.sort(key=lambda r: (r.priority, r.rule_id))
        emitted = debounce(requests, self.sched, self.now,
                           gap_s=self.cfg.debounce_gap_s)
        for req in emitted:
            self._emit(req, snap, doc, out)

    def _emit(self, req: InterventionRequest, snap: UserStateSnapshot,
              doc: dict, out: SessionOutputs) -> None:
        queued = next((p for p in self._pending if p["id"] == req.rule_id), None)
        vignette_doc = doc
        if queued is not None:
            self._pending.remove(queued)
            text, source = queued["text"], queued["source"]
            vignette_doc = queued["snapshot"]
        elif req.ask_backend:
            try:
                result = generate(self.backend, build_intra_exercise_prompt(snap),
                                  timeout_ms=self.cfg.backend.timeout_ms,
                                  retries=self.cfg.backend.intra_retries)
                text = enforce_word_cap(result.text, self.cfg.backend.word_cap)
                source = InterventionSource.BACKEND
                self._write({"rec": "stage", "ts": self.now,
                             "stage": "reasoning", "ms": result.latency_ms})
            except (BackendTimeout, TransportError):
                text, source = req.text, InterventionSource.RULE
            if not text:
                text, source = req.text, InterventionSource.RULE
        else:
            text, source = req.text, InterventionSource.RULE
        if not text:
            return
        iv = Intervention(ts=self.now, category=req.category, text=text,
                          priority=req.priority, source=source)
        try:
            delivery_ms = self.speech.deliver(iv)
            delivered = True
        except DeliveryFailed:
            delivery_ms = 0.0
            delivered = False
        self._write({"rec": "intervention", "ts": self.now,
                     "category": iv.category.value, "priority": iv.priority,
                     "source": iv.source.value, "text": iv.text,
                     "delivery_ms": delivery_ms, "delivered": delivered})
        self._write({"rec": "stage", "ts": self.now, "stage": "tts",
                     "ms": delivery_ms})
        out.interventions.append(iv)
        if source is InterventionSource.BACKEND and self.vignettes is not None:
            self.vignettes.write(vignette_doc, iv)
        if req.category is InterventionCategory.INTENSITY_ADJUST:
            # give the exerciser a fresh persistence window to comply
            self._zone_since = self.now
        if req.rule_id == "cardio_segment":
            self._segment_pulse = False
        elif req.rule_id == "progress_time":
            self._progress_pulse = False
        if req.category is InterventionCategory.INTERRUPTION:
            self._interrupt(out)
        if req.rule_id == "end_motivation":
            self._write({"rec": "end", "ts": self.now, "partial": False,
                         "reason": "plan_complete"})
            self.done = True
            self.close()

    def _interrupt(self, out: SessionOutputs) -> None:
        """Safety pause: suspend whatever is running, rest, then resume."""
        if self.state in ("rest", "finishing"):
            return
        if self.state in ("reps", "hold"):
            prev = self.state
            self._suspend_set()
            self._enter_rest("", "", ("resume_set", prev), out, safety=True)
        elif self.state == "cardio":
            self._enter_rest("", "", ("resume_cardio", self.now), out,
                             safety=True)

    # ------------------------------------------------------------------
    # directives

    def _activity(self) -> str:
        return {
            "baseline": "baseline", "cardio": "cardio", "reps": "reps",
            "hold": "hold", "rest": "rest", "finishing": "done",
        }.get(self.state, "idle")

    def _load_for_state(self) -> float:
        rest = self.hr_baseline if self.hr_baseline is not None else 65.0
        if self.state == "cardio":
            return self._cardio_load()
        pe = self.phases[self.phase_i] if 0 <= self.phase_i < len(
            self.phases) else None
        if self.state == "reps":
            return rest + 45.0
        if self.state == "hold":
            return rest + (25.0 if pe is not None and pe.group == "balance"
                           else 10.0)
        if self.state in ("rest", "finishing"):
            return rest + 10.0
        return rest

    def _refresh_directive(self) -> None:
        ex = self._snapshot_exercise
        period = REP_PERIOD_S.get(ex.kind, 3.0) if ex is not None else 3.0
        self.directive = Directive(
            activity=self._activity(), exercise=ex,
            phase_index=self.phase_i, set_index=self.set_i,
            load_bpm=self._load_for_state(), rep_period_s=period,
            paused=self.paused)

    def _next_exercise_label(self) -> str:
        pe = self.phases[self.phase_i] if 0 <= self.phase_i < len(
            self.phases) else None
        if pe is not None and self.set_i + 1 < pe.sets:
            return pe.exercise_for_set(self.set_i + 1).label
        if pe is not None and pe.index + 1 < len(self.phases):
            return self.phases[pe.index + 1].exercise_for_set(0).label
        return self._snapshot_exercise.label


def run_session(plan: SessionPlan, events: Iterable, backend,
                config: EngineConfig, phr: PhysicalHealthReport,
                log_path: Optional[str] = None,
                vignette_path: Optional[str] = None) -> SessionLog:
    """Replay an ordered event stream through a fresh session."""
    engine = SessionEngine(phr, plan, config, backend, log_path=log_path,
                           vignette_path=vignette_path)
    for e in events:
        engine.process(e)
        if engine.done:
            break
    if not engine.done:
        engine.finalize_stream()
    engine.close()
    return engine.log
