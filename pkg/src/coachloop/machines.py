"""Per-exercise state machines over landmark frames.

Each machine is a pure state transition (frame in, events out) owned by
the session loop, so replays are deterministic. Every machine also
exposes a signal-level entry point (step_angle / step_offset /
step_angles) that the landmark path delegates to; tests and oracles
drive that level directly.

Frames with any required landmark occluded are skipped outright: no
state change, no timer credit, no error-streak advance.
"""
from __future__ import annotations

from collections import deque
from typing import Dict, List, Optional

from .config import CurlConfig, LungeConfig, PlankConfig
from .core.types import (
    FormErrorKind,
    LandmarkFrame,
    MachineEvent,
    LEFT_ANKLE, LEFT_ELBOW, LEFT_FOOT_INDEX, LEFT_HIP, LEFT_KNEE,
    LEFT_SHOULDER, LEFT_WRIST,
    RIGHT_ANKLE, RIGHT_ELBOW, RIGHT_FOOT_INDEX, RIGHT_HIP, RIGHT_KNEE,
    RIGHT_SHOULDER, RIGHT_WRIST,
)
from .errors import UnknownPose
from .kinematics import joint_angle, landmarks_at, mean_visibility, signed_offset

_Kind = MachineEvent.Kind


class _ErrorGate:
    """Debounces a per-frame boolean fault into Started/Ended span events.

    A fault starts after `persist` consecutive violating frames and ends
    after `persist` consecutive clean frames. Events carry span_ts, the
    actual onset/offset boundary, which precedes the emission ts by the
    confirmation streak.
    """

    def __init__(self, kind: FormErrorKind, persist: int):
        self.kind = kind
        self.persist = persist
        self.active = False
        self._streak = 0
        self._streak_start: Optional[float] = None

    def step(self, ts: float, violating: bool) -> List[MachineEvent]:
        advancing = violating != self.active
        if advancing:
            if self._streak == 0:
                self._streak_start = ts
            self._streak += 1
        else:
            self._streak = 0
            self._streak_start = None
        if self._streak >= self.persist:
            onset = self._streak_start
            self.active = not self.active
            self._streak = 0
            self._streak_start = None
            kind = _Kind.FORM_ERROR_STARTED if self.active else _Kind.FORM_ERROR_ENDED
            return [MachineEvent(ts=ts, kind=kind, error=self.kind, span_ts=onset)]
        return []

    def finalize(self, ts: float) -> List[MachineEvent]:
        if self.active:
            self.active = False
            return [MachineEvent(ts=ts, kind=_Kind.FORM_ERROR_ENDED,
                                 error=self.kind, span_ts=ts)]
        return []


class _GatedTimer:
    """Hold-time accumulator that advances only while the pose is correct.

    Convention: the interval between consecutive frames is credited when
    the EARLIER frame classified as correct. Gaps longer than max_gap_ms
    are treated as sensor dropouts and never credited.
    """

    def __init__(self, target_s: float, max_gap_ms: float = 200.0):
        self.target_s = target_s
        self.max_gap_ms = max_gap_ms
        self.elapsed_s = 0.0
        self.target_reached = False
        self._prev_ts: Optional[float] = None
        self._prev_ok = False
        self._whole = 0

    def step(self, ts: float, ok: bool) -> List[MachineEvent]:
        events: List[MachineEvent] = []
        if self._prev_ts is not None and self._prev_ok:
            dt = ts - self._prev_ts
            if 0 <= dt <= self.max_gap_ms:
                self.elapsed_s += dt / 1000.0
        self._prev_ts = ts
        self._prev_ok = ok
        if int(self.elapsed_s) > self._whole:
            self._whole = int(self.elapsed_s)
            events.append(MachineEvent(ts=ts, kind=_Kind.TIMER_TICK, elapsed_s=self.elapsed_s))
        if not self.target_reached and self.elapsed_s >= self.target_s:
            self.target_reached = True
            events.append(MachineEvent(ts=ts, kind=_Kind.TARGET_REACHED, elapsed_s=self.elapsed_s))
        return events


def _pick_side(frame: LandmarkFrame, left: tuple, right: tuple) -> tuple:
    return left if mean_visibility(frame, left) >= mean_visibility(frame, right) else right


class CurlMachine:
    """Bicep-curl rep counter with hysteresis and two fault detectors.

    The elbow angle drives a Down (extended) / Up (curled) cycle; a rep
    lands on the return to Down. Excursions that leave the extended
    range but never reach the peak-contraction angle are flagged weak;
    upper-arm drift past phi_arm for persist frames is a loose arm.
    """

    _LEFT = (LEFT_SHOULDER, LEFT_ELBOW, LEFT_WRIST, LEFT_HIP)
    _RIGHT = (RIGHT_SHOULDER, RIGHT_ELBOW, RIGHT_WRIST, RIGHT_HIP)

    def __init__(self, cfg: CurlConfig = CurlConfig(), persist_frames: int = 15,
                 min_visibility: float = 0.5):
        self.cfg = cfg
        self.persist_frames = persist_frames
        self.min_visibility = min_visibility
        self.stage = "Down"
        self.rep_count = 0
        self.last_elbow_angle: Optional[float] = None
        self._side: Optional[tuple] = None
        self._engaged = False
        self._exc_min = 180.0
        self._exc_frames = 0
        self._weak_active = False
        self._loose = _ErrorGate(FormErrorKind.LOOSE_UPPER_ARM, persist_frames)

    def step(self, frame: LandmarkFrame) -> List[MachineEvent]:
        if self._side is None:
            self._side = _pick_side(frame, self._LEFT, self._RIGHT)
        pts = landmarks_at(frame, self._side, self.min_visibility)
        if pts is None:
            return []
        shoulder, elbow, wrist, hip = pts
        angle = joint_angle(shoulder, elbow, wrist)
        deviation = joint_angle(elbow, shoulder, hip)
        return self.step_angle(frame.ts, angle, deviation)

    def step_angle(self, ts: float, elbow_deg: float, arm_dev_deg: float = 0.0) -> List[MachineEvent]:
        cfg = self.cfg
        events: List[MachineEvent] = []

        engage_at = cfg.theta_down_deg - cfg.engage_margin_deg
        if not self._engaged and elbow_deg < engage_at:
            self._engaged = True
            self._exc_min = elbow_deg
            self._exc_frames = 1
        elif self._engaged:
            self._exc_min = min(self._exc_min, elbow_deg)
            self._exc_frames += 1

        if self.stage == "Down" and elbow_deg < cfg.theta_up_deg:
            self.stage = "Up"
            events.append(MachineEvent(ts=ts, kind=_Kind.STAGE_CHANGED, stage="Up"))
        elif elbow_deg > cfg.theta_down_deg and self._engaged:
            if self.stage == "Up":
                self.stage = "Down"
                self.rep_count += 1
                events.append(MachineEvent(ts=ts, kind=_Kind.STAGE_CHANGED, stage="Down"))
                events.append(MachineEvent(ts=ts, kind=_Kind.REP_COMPLETED,
                                           rep_count=self.rep_count))
                if self._weak_active:
                    self._weak_active = False
                    events.append(MachineEvent(
                        ts=ts, kind=_Kind.FORM_ERROR_ENDED,
                        error=FormErrorKind.WEAK_PEAK_CONTRACTION, span_ts=ts))
            elif (self._exc_min > cfg.theta_peak_deg and not self._weak_active
                  and self._exc_frames >= self.persist_frames):
                # Left the extended range but never contracted far enough.
                # Excursions shorter than the persistence window are
                # measurement blips, not attempted reps.
                self._weak_active = True
                events.append(MachineEvent(
                    ts=ts, kind=_Kind.FORM_ERROR_STARTED,
                    error=FormErrorKind.WEAK_PEAK_CONTRACTION, span_ts=ts))
            self._engaged = False
            self._exc_min = 180.0

        events.extend(self._loose.step(ts, arm_dev_deg > cfg.phi_arm_deg))
        self.last_elbow_angle = elbow_deg
        return events

    def finalize(self, ts: float) -> List[MachineEvent]:
        events = self._loose.finalize(ts)
        if self._weak_active:
            self._weak_active = False
            events.append(MachineEvent(ts=ts, kind=_Kind.FORM_ERROR_ENDED,
                                       error=FormErrorKind.WEAK_PEAK_CONTRACTION, span_ts=ts))
        return events


class LungeMachine:
    """Lunge stage tracker: Initial (standing) -> Middle -> Down -> Initial.

    The front-knee angle drives the stages; a rep lands on the Down ->
    Initial return. A dip that turns around above the Down threshold
    aborts back to Initial without a rep. Knee-over-toe compares knee
    and foot-index x in the facing direction, which is inferred from
    hip displacement and held while the hip is effectively still.
    """

    _LEFT = (LEFT_HIP, LEFT_KNEE, LEFT_ANKLE, LEFT_FOOT_INDEX)
    _RIGHT = (RIGHT_HIP, RIGHT_KNEE, RIGHT_ANKLE, RIGHT_FOOT_INDEX)

    def __init__(self, cfg: LungeConfig = LungeConfig(), persist_frames: int = 15,
                 min_visibility: float = 0.5):
        self.cfg = cfg
        self.min_visibility = min_visibility
        self.stage = "Initial"
        self.rep_count = 0
        self.last_rep_ts: Optional[float] = None
        self.inter_rep_s: Optional[float] = None
        self._side: Optional[tuple] = None
        self._hip_x = deque(maxlen=cfg.direction_window_frames)
        self._direction = 0
        self._kot = _ErrorGate(FormErrorKind.KNEE_OVER_TOE, persist_frames)

    def step(self, frame: LandmarkFrame) -> List[MachineEvent]:
        if self._side is None:
            self._side = _pick_side(frame, self._LEFT, self._RIGHT)
        pts = landmarks_at(frame, self._side, self.min_visibility)
        if pts is None:
            return []
        hip, knee, ankle, toe = pts

        self._hip_x.append(hip.x)
        if len(self._hip_x) == self._hip_x.maxlen:
            # endpoint means, not raw samples: landmark jitter must not
            # fake a step and flip the facing direction
            k = min(5, len(self._hip_x))
            head = sum(list(self._hip_x)[:k]) / k
            tail = sum(list(self._hip_x)[-k:]) / k
            delta = tail - head
            if abs(delta) > self.cfg.direction_deadband:
                self._direction = 1 if delta > 0 else -1

        violating = (self._direction != 0
                     and self._direction * (knee.x - toe.x) > self.cfg.kappa)
        angle = joint_angle(hip, knee, ankle)
        return self.step_angle(frame.ts, angle, violating)

    def step_angle(self, ts: float, knee_deg: float, kot_violating: bool = False) -> List[MachineEvent]:
        cfg = self.cfg
        events: List[MachineEvent] = []

        if self.stage == "Initial" and knee_deg < cfg.initial_deg:
            self.stage = "Middle"
            events.append(MachineEvent(ts=ts, kind=_Kind.STAGE_CHANGED, stage="Middle"))
        elif self.stage == "Middle":
            if knee_deg < cfg.down_deg:
                self.stage = "Down"
                events.append(MachineEvent(ts=ts, kind=_Kind.STAGE_CHANGED, stage="Down"))
            elif knee_deg > cfg.initial_deg:
                self.stage = "Initial"
                events.append(MachineEvent(ts=ts, kind=_Kind.STAGE_CHANGED, stage="Initial"))
        elif self.stage == "Down" and knee_deg > cfg.initial_deg:
            self.stage = "Initial"
            self.rep_count += 1
            if self.last_rep_ts is not None:
                self.inter_rep_s = (ts - self.last_rep_ts) / 1000.0
            self.last_rep_ts = ts
            events.append(MachineEvent(ts=ts, kind=_Kind.STAGE_CHANGED, stage="Initial"))
            events.append(MachineEvent(ts=ts, kind=_Kind.REP_COMPLETED, rep_count=self.rep_count))

        events.extend(self._kot.step(ts, kot_violating))
        return events

    def finalize(self, ts: float) -> List[MachineEvent]:
        return self._kot.finalize(ts)


class PlankMachine:
    """Elbow-plank posture classifier with a form-gated hold timer."""

    _LEFT = (LEFT_SHOULDER, LEFT_HIP, LEFT_ANKLE)
    _RIGHT = (RIGHT_SHOULDER, RIGHT_HIP, RIGHT_ANKLE)

    def __init__(self, target_s: float, cfg: PlankConfig = PlankConfig(),
                 persist_frames: int = 15, min_visibility: float = 0.5,
                 max_gap_ms: float = 200.0):
        self.cfg = cfg
        self.min_visibility = min_visibility
        self.pose_class = "Correct"
        self._side: Optional[tuple] = None
        self._timer = _GatedTimer(target_s, max_gap_ms)
        self._high = _ErrorGate(FormErrorKind.HIGH_BACK, persist_frames)
        self._low = _ErrorGate(FormErrorKind.LOW_BACK, persist_frames)

    @property
    def correct_elapsed_s(self) -> float:
        return self._timer.elapsed_s

    @property
    def target_s(self) -> float:
        return self._timer.target_s

    @property
    def target_reached(self) -> bool:
        return self._timer.target_reached

    def step(self, frame: LandmarkFrame) -> List[MachineEvent]:
        if self._side is None:
            self._side = _pick_side(frame, self._LEFT, self._RIGHT)
        pts = landmarks_at(frame, self._side, self.min_visibility)
        if pts is None:
            return []
        shoulder, hip, ankle = pts
        return self.step_offset(frame.ts, signed_offset(hip, shoulder, ankle))

    def step_offset(self, ts: float, h: float) -> List[MachineEvent]:
        beta = self.cfg.beta
        cls = "HighBack" if h > beta else "LowBack" if h < -beta else "Correct"
        events: List[MachineEvent] = []
        if cls != self.pose_class:
            self.pose_class = cls
            events.append(MachineEvent(ts=ts, kind=_Kind.STAGE_CHANGED, stage=cls))
        events.extend(self._high.step(ts, cls == "HighBack"))
        events.extend(self._low.step(ts, cls == "LowBack"))
        events.extend(self._timer.step(ts, cls == "Correct"))
        return events

    def finalize(self, ts: float) -> List[MachineEvent]:
        return self._high.finalize(ts) + self._low.finalize(ts)


class YogaMachine:
    """Template-driven pose alignment with a form-gated hold timer.

    The template lists joints as (vertex landmark triple, angle band);
    the pose is aligned only when every joint measures inside its band.
    Violating joints are reported with measured and target values.
    """

    def __init__(self, template: tuple, target_s: float, persist_frames: int = 15,
                 min_visibility: float = 0.5, max_gap_ms: float = 200.0):
        if not template:
            raise UnknownPose("empty yoga template")
        self.template: tuple = tuple(template)
        self.min_visibility = min_visibility
        self.aligned = False
        self.flagged_joints: List[dict] = []
        self._timer = _GatedTimer(target_s, max_gap_ms)
        self._gate = _ErrorGate(FormErrorKind.MISALIGNED_POSE, persist_frames)
        self._started = False

    @property
    def hold_elapsed_s(self) -> float:
        return self._timer.elapsed_s

    @property
    def target_s(self) -> float:
        return self._timer.target_s

    @property
    def target_reached(self) -> bool:
        return self._timer.target_reached

    def step(self, frame: LandmarkFrame) -> List[MachineEvent]:
        angles: Dict[str, float] = {}
        for joint in self.template:
            pts = landmarks_at(frame, (joint.a, joint.b, joint.c), self.min_visibility)
            if pts is None:
                return []
            a, b, c = pts
            angles[joint.name] = joint_angle(a, b, c)
        return self.step_angles(frame.ts, angles)

    def step_angles(self, ts: float, angles: Dict[str, float]) -> List[MachineEvent]:
        flagged = []
        for joint in self.template:
            measured = angles[joint.name]
            if not (joint.lo_deg <= measured <= joint.hi_deg):
                flagged.append({"joint": joint.name, "measured": measured,
                                "lo": joint.lo_deg, "hi": joint.hi_deg})
        self.flagged_joints = flagged
        aligned = not flagged

        events: List[MachineEvent] = []
        if aligned != self.aligned or not self._started:
            self._started = True
            self.aligned = aligned
            stage = "Aligned" if aligned else "Misaligned"
            detail = None if aligned else ",".join(f["joint"] for f in flagged)
            events.append(MachineEvent(ts=ts, kind=_Kind.STAGE_CHANGED,
                                       stage=stage, detail=detail))
        events.extend(self._gate.step(ts, not aligned))
        events.extend(self._timer.step(ts, aligned))
        return events

    def finalize(self, ts: float) -> List[MachineEvent]:
        return self._gate.finalize(ts)
