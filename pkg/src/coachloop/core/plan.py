"""Session plans: the ordered cardio / strength / balance / flexibility program."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Union

from ..errors import InvariantViolation
from .types import BICEP_CURL, ELBOW_PLANK, Exercise, ExerciseKind, LUNGE, YogaPose


class CardioMode(str, Enum):
    HISS = "HISS"
    LISS = "LISS"


@dataclass(frozen=True)
class CardioPhase:
    duration_s: float
    mode: CardioMode = CardioMode.LISS

    def __post_init__(self):
        if self.duration_s <= 0:
            raise InvariantViolation("cardio duration must be positive")
        object.__setattr__(self, "mode", CardioMode(self.mode))


@dataclass(frozen=True)
class StrengthPhase:
    exercise: Exercise
    sets: int
    target_reps: int
    weight_kg: float = 0.0

    def __post_init__(self):
        if self.sets < 1 or self.target_reps < 1:
            raise InvariantViolation("sets and target_reps must be positive")
        if self.weight_kg < 0:
            raise InvariantViolation("weight must be non-negative")
        if self.exercise.kind not in (ExerciseKind.LUNGE, ExerciseKind.BICEP_CURL):
            raise InvariantViolation("strength phase covers lunges or bicep curls")


@dataclass(frozen=True)
class BalancePhase:
    sets: int
    target_hold_s: float

    def __post_init__(self):
        if self.sets < 1 or self.target_hold_s <= 0:
            raise InvariantViolation("sets and target hold must be positive")


@dataclass(frozen=True)
class FlexibilityPhase:
    poses: tuple            # ordered YogaPose values
    target_hold_s: float

    def __post_init__(self):
        poses = tuple(YogaPose(p) for p in self.poses)
        if not poses or self.target_hold_s <= 0:
            raise InvariantViolation("flexibility needs poses and a positive hold target")
        object.__setattr__(self, "poses", poses)


Phase = Union[CardioPhase, StrengthPhase, BalancePhase, FlexibilityPhase]


@dataclass(frozen=True)
class SessionPlan:
    phases: tuple

    def __post_init__(self):
        if not self.phases:
            raise InvariantViolation("plan needs at least one phase")
        object.__setattr__(self, "phases", tuple(self.phases))


def default_plan(cardio_s: float = 600.0, mode: CardioMode = CardioMode.LISS) -> SessionPlan:
    """The standard four-pillar routine: 10 min cardio, 2 sets each of
    lunges and curls, 2 plank sessions, then three yoga poses."""
    return SessionPlan(phases=(
        CardioPhase(duration_s=cardio_s, mode=mode),
        StrengthPhase(exercise=LUNGE, sets=2, target_reps=10, weight_kg=0.0),
        StrengthPhase(exercise=BICEP_CURL, sets=2, target_reps=10, weight_kg=5.0),
        BalancePhase(sets=2, target_hold_s=30.0),
        FlexibilityPhase(poses=(YogaPose.TREE, YogaPose.WARRIOR, YogaPose.DOWNWARD_DOG),
                         target_hold_s=20.0),
    ))


def plan_to_doc(plan: SessionPlan) -> dict:
    phases = []
    for p in plan.phases:
        if isinstance(p, CardioPhase):
            phases.append({"kind": "cardio", "duration_s": p.duration_s, "mode": p.mode.value})
        elif isinstance(p, StrengthPhase):
            phases.append({"kind": "strength", "exercise": p.exercise.kind.value,
                           "sets": p.sets, "target_reps": p.target_reps, "weight_kg": p.weight_kg})
        elif isinstance(p, BalancePhase):
            phases.append({"kind": "balance", "sets": p.sets, "target_hold_s": p.target_hold_s})
        else:
            phases.append({"kind": "flexibility", "poses": [pose.value for pose in p.poses],
                           "target_hold_s": p.target_hold_s})
    return {"phases": phases}


def plan_from_doc(doc: dict) -> SessionPlan:
    phases: list[Phase] = []
    for p in doc.get("phases", []):
        kind = p.get("kind")
        if kind == "cardio":
            phases.append(CardioPhase(duration_s=float(p["duration_s"]),
                                      mode=CardioMode(p.get("mode", "LISS"))))
        elif kind == "strength":
            phases.append(StrengthPhase(exercise=Exercise(ExerciseKind(p["exercise"])),
                                        sets=int(p["sets"]), target_reps=int(p["target_reps"]),
                                        weight_kg=float(p.get("weight_kg", 0.0))))
        elif kind == "balance":
            phases.append(BalancePhase(sets=int(p["sets"]), target_hold_s=float(p["target_hold_s"])))
        elif kind == "flexibility":
            phases.append(FlexibilityPhase(poses=tuple(p["poses"]),
                                           target_hold_s=float(p["target_hold_s"])))
        else:
            raise InvariantViolation(f"unknown phase kind {kind!r}")
    return SessionPlan(phases=tuple(phases))


def load_plan(path: str) -> SessionPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return plan_from_doc(json.load(fh))
