"""Domain types shared by every other module.

All types are immutable value objects; invariants are checked at
construction so anything downstream can trust a constructed instance.
Timestamps are session-relative milliseconds assigned by the producer
(the engine never reads wall-clock time in replay mode).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from ..errors import InvariantViolation

# Landmark indices in the standard 33-point full-body pose topology.
NOSE = 0
LEFT_SHOULDER, RIGHT_SHOULDER = 11, 12
LEFT_ELBOW, RIGHT_ELBOW = 13, 14
LEFT_WRIST, RIGHT_WRIST = 15, 16
LEFT_HIP, RIGHT_HIP = 23, 24
LEFT_KNEE, RIGHT_KNEE = 25, 26
LEFT_ANKLE, RIGHT_ANKLE = 27, 28
LEFT_HEEL, RIGHT_HEEL = 29, 30
LEFT_FOOT_INDEX, RIGHT_FOOT_INDEX = 31, 32
LANDMARK_COUNT = 33


def _check_ts(ts: float) -> float:
    ts = float(ts)
    if not math.isfinite(ts) or ts < 0:
        raise InvariantViolation(f"timestamp must be finite and non-negative, got {ts}")
    return ts


class HRZone(str, Enum):
    BELOW = "Below"
    TARGET = "Target"
    ABOVE = "Above"


class PainLevel(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"

    @property
    def severity(self) -> int:
        return {"Low": 0, "Medium": 1, "High": 2}[self.value]


class FormErrorKind(str, Enum):
    KNEE_OVER_TOE = "knee_over_toe"
    LOOSE_UPPER_ARM = "loose_upper_arm"
    WEAK_PEAK_CONTRACTION = "weak_peak_contraction"
    HIGH_BACK = "high_back"
    LOW_BACK = "low_back"
    MISALIGNED_POSE = "misaligned_pose"


class YogaPose(str, Enum):
    TREE = "tree"
    WARRIOR = "warrior"
    DOWNWARD_DOG = "downward_dog"

    @property
    def label(self) -> str:
        return {"tree": "Tree", "warrior": "Warrior", "downward_dog": "Downward-Facing Dog"}[self.value]


class ExerciseKind(str, Enum):
    CARDIO = "cardio"
    LUNGE = "lunge"
    BICEP_CURL = "bicep_curl"
    ELBOW_PLANK = "elbow_plank"
    YOGA = "yoga"


_EXERCISE_LABELS = {
    ExerciseKind.CARDIO: "Cardio",
    ExerciseKind.LUNGE: "Lunges",
    ExerciseKind.BICEP_CURL: "Bicep Curls",
    ExerciseKind.ELBOW_PLANK: "Elbow Plank",
}


@dataclass(frozen=True)
class Exercise:
    """Exercise identity; yoga carries the specific pose."""

    kind: ExerciseKind
    pose: Optional[YogaPose] = None

    def __post_init__(self):
        if (self.kind == ExerciseKind.YOGA) != (self.pose is not None):
            raise InvariantViolation("pose is set if and only if kind is yoga")

    @property
    def label(self) -> str:
        if self.kind == ExerciseKind.YOGA:
            return f"Yoga ({self.pose.label})"
        return _EXERCISE_LABELS[self.kind]

    @classmethod
    def from_label(cls, label: str) -> "Exercise":
        for kind, text in _EXERCISE_LABELS.items():
            if text == label:
                return cls(kind)
        if label.startswith("Yoga (") and label.endswith(")"):
            inner = label[len("Yoga ("):-1]
            for pose in YogaPose:
                if pose.label == inner:
                    return cls(ExerciseKind.YOGA, pose)
        raise InvariantViolation(f"unknown exercise label {label!r}")


CARDIO = Exercise(ExerciseKind.CARDIO)
LUNGE = Exercise(ExerciseKind.LUNGE)
BICEP_CURL = Exercise(ExerciseKind.BICEP_CURL)
ELBOW_PLANK = Exercise(ExerciseKind.ELBOW_PLANK)


# --- sensor events ---

@dataclass(frozen=True)
class LandmarkFrame:
    """One pose frame: exactly 33 (x, y, z, visibility) landmarks.

    x, y are normalized image coordinates in [0, 1] (y grows downward);
    z is unitless depth; visibility is a confidence in [0, 1].
    """

    ts: float
    landmarks: tuple

    def __post_init__(self):
        object.__setattr__(self, "ts", _check_ts(self.ts))
        pts = tuple(tuple(float(c) for c in p) for p in self.landmarks)
        if len(pts) != LANDMARK_COUNT:
            raise InvariantViolation(f"expected {LANDMARK_COUNT} landmarks, got {len(pts)}")
        for i, p in enumerate(pts):
            if len(p) != 4:
                raise InvariantViolation(f"landmark {i} must be (x, y, z, visibility)")
            x, y, z, v = p
            if not all(math.isfinite(c) for c in p):
                raise InvariantViolation(f"landmark {i} has non-finite component")
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0 and 0.0 <= v <= 1.0):
                raise InvariantViolation(f"landmark {i} x/y/visibility out of [0, 1]")
        object.__setattr__(self, "landmarks", pts)


@dataclass(frozen=True)
class HRSample:
    ts: float
    bpm: float

    def __post_init__(self):
        object.__setattr__(self, "ts", _check_ts(self.ts))
        object.__setattr__(self, "bpm", float(self.bpm))
        if not (20.0 < self.bpm < 250.0):
            raise InvariantViolation(f"bpm must be in (20, 250), got {self.bpm}")


@dataclass(frozen=True)
class VocalFrame:
    """Per-frame vocal exertion features extracted upstream."""

    ts: float
    pitch_hz: float
    loudness_db: float
    zcr: float

    def __post_init__(self):
        object.__setattr__(self, "ts", _check_ts(self.ts))
        object.__setattr__(self, "pitch_hz", float(self.pitch_hz))
        object.__setattr__(self, "loudness_db", float(self.loudness_db))
        object.__setattr__(self, "zcr", float(self.zcr))
        if not math.isfinite(self.pitch_hz) or self.pitch_hz < 0:
            raise InvariantViolation(f"pitch_hz must be finite and >= 0, got {self.pitch_hz}")
        if not math.isfinite(self.loudness_db):
            raise InvariantViolation("loudness_db must be finite")
        if not (0.0 <= self.zcr <= 1.0):
            raise InvariantViolation(f"zcr must be in [0, 1], got {self.zcr}")


@dataclass(frozen=True)
class PainObservation:
    """Class probabilities (low, medium, high) from the upstream pain model."""

    ts: float
    probs: tuple

    def __post_init__(self):
        object.__setattr__(self, "ts", _check_ts(self.ts))
        probs = tuple(float(p) for p in self.probs)
        if len(probs) != 3:
            raise InvariantViolation("probs must be (low, medium, high)")
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise InvariantViolation("each probability must be in [0, 1]")
        if abs(sum(probs) - 1.0) > 1e-6:
            raise InvariantViolation(f"probabilities must sum to 1, got {sum(probs)}")
        object.__setattr__(self, "probs", probs)


class ExertionLevel(str, Enum):
    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"


class SteeringKind(str, Enum):
    SET_EXERTION = "set_exertion"
    INJECT_FORM_ERROR = "inject_form_error"
    REPORT_PAIN = "report_pain"
    SKIP_REST = "skip_rest"
    PAUSE_RESUME = "pause_resume"
    WHAT_IF_REST = "what_if_rest"


@dataclass(frozen=True)
class SteeringCommand:
    """Operator command steering the simulated exerciser or the session."""

    ts: float
    kind: SteeringKind
    level: Optional[str] = None          # exertion or pain level, per kind
    error: Optional[FormErrorKind] = None
    duration_s: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "ts", _check_ts(self.ts))
        object.__setattr__(self, "kind", SteeringKind(self.kind))
        if self.error is not None:
            object.__setattr__(self, "error", FormErrorKind(self.error))
        if self.duration_s is not None:
            object.__setattr__(self, "duration_s", float(self.duration_s))
        if self.kind == SteeringKind.SET_EXERTION:
            ExertionLevel(self.level)
        elif self.kind == SteeringKind.REPORT_PAIN:
            PainLevel(self.level)
        elif self.kind == SteeringKind.INJECT_FORM_ERROR:
            if self.error is None or self.duration_s is None or self.duration_s <= 0:
                raise InvariantViolation("inject_form_error needs an error kind and duration_s > 0")


SensorEvent = Union[LandmarkFrame, HRSample, VocalFrame, PainObservation, SteeringCommand]


# --- engine-facing value types ---

SNAPSHOT_KEYS = (
    "ts", "exercise", "rep_count", "form_error", "hr_zone",
    "fatigue_detected", "current_bpm", "pain", "phase_progress",
)


@dataclass(frozen=True)
class UserStateSnapshot:
    """The flat per-tick state document fed to the reasoning layer."""

    ts: float
    exercise: Exercise
    rep_count: int
    form_error: Optional[FormErrorKind]
    hr_zone: HRZone
    current_bpm: float
    fatigue_detected: bool
    pain: PainLevel
    phase_progress: float

    def __post_init__(self):
        object.__setattr__(self, "ts", _check_ts(self.ts))
        if self.rep_count < 0:
            raise InvariantViolation("rep_count must be >= 0")
        if not (0.0 <= self.phase_progress <= 1.0):
            raise InvariantViolation("phase_progress must be in [0, 1]")

    def to_doc(self) -> dict:
        """Flat key/value document; key order is fixed for byte-stable logs."""
        return {
            "ts": self.ts,
            "exercise": self.exercise.label,
            "rep_count": self.rep_count,
            "form_error": self.form_error.value if self.form_error else None,
            "hr_zone": self.hr_zone.value,
            "fatigue_detected": self.fatigue_detected,
            "current_bpm": self.current_bpm,
            "pain": self.pain.value,
            "phase_progress": self.phase_progress,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "UserStateSnapshot":
        return cls(
            ts=doc["ts"],
            exercise=Exercise.from_label(doc["exercise"]),
            rep_count=int(doc["rep_count"]),
            form_error=FormErrorKind(doc["form_error"]) if doc.get("form_error") else None,
            hr_zone=HRZone(doc["hr_zone"]),
            current_bpm=float(doc["current_bpm"]),
            fatigue_detected=bool(doc["fatigue_detected"]),
            pain=PainLevel(doc["pain"]),
            phase_progress=float(doc["phase_progress"]),
        )


class InterventionCategory(str, Enum):
    GOAL_SETTING = "goal_setting"
    INTENSITY_ADJUST = "intensity_adjust"
    RELIEF = "relief"
    FORM_CORRECTION = "form_correction"
    PROGRESS_UPDATE = "progress_update"
    REP_COUNT = "rep_count"
    REST_SUGGESTION = "rest_suggestion"
    MILESTONE = "milestone"
    END_MOTIVATION = "end_motivation"
    INTERRUPTION = "interruption"


# Lower number = more urgent. Priority 0 bypasses the debounce gap.
CATEGORY_PRIORITY = {
    InterventionCategory.INTERRUPTION: 0,
    InterventionCategory.RELIEF: 0,
    InterventionCategory.FORM_CORRECTION: 1,
    InterventionCategory.REST_SUGGESTION: 2,
    InterventionCategory.INTENSITY_ADJUST: 2,
    InterventionCategory.MILESTONE: 3,
    InterventionCategory.REP_COUNT: 4,
    InterventionCategory.PROGRESS_UPDATE: 4,
    InterventionCategory.GOAL_SETTING: 5,
    InterventionCategory.END_MOTIVATION: 5,
}


class InterventionSource(str, Enum):
    RULE = "rule"
    BACKEND = "backend"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class Intervention:
    """A categorized, prioritized coach utterance with provenance."""

    ts: float
    category: InterventionCategory
    text: str
    priority: int
    source: InterventionSource

    def __post_init__(self):
        object.__setattr__(self, "ts", _check_ts(self.ts))
        if not self.text:
            raise InvariantViolation("intervention text must be non-empty")
        if self.priority < 0:
            raise InvariantViolation("priority must be >= 0 (0 is most urgent)")


@dataclass(frozen=True)
class RestPlan:
    """Rest prescription; seconds is clamped into [0, 60] on construction."""

    seconds: int
    message: str

    def __post_init__(self):
        secs = int(round(float(self.seconds)))
        object.__setattr__(self, "seconds", max(0, min(60, secs)))


@dataclass(frozen=True)
class MachineEvent:
    """Event emitted by an exercise state machine step."""

    class Kind(str, Enum):
        REP_COMPLETED = "rep_completed"
        STAGE_CHANGED = "stage_changed"
        FORM_ERROR_STARTED = "form_error_started"
        FORM_ERROR_ENDED = "form_error_ended"
        TIMER_TICK = "timer_tick"
        TARGET_REACHED = "target_reached"

    ts: float
    kind: "MachineEvent.Kind"
    rep_count: Optional[int] = None      # post-increment count on REP_COMPLETED
    stage: Optional[str] = None
    error: Optional[FormErrorKind] = None
    elapsed_s: Optional[float] = None
    detail: Optional[str] = None
    # Span boundary the debounced error event refers to; events are emitted
    # once the persistence streak confirms, so onset precedes emission ts.
    span_ts: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "ts", _check_ts(self.ts))
        if self.kind == MachineEvent.Kind.REP_COMPLETED and (self.rep_count is None or self.rep_count < 1):
            raise InvariantViolation("rep_completed must carry the post-increment count")
