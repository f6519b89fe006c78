"""Physical health report: the per-user profile driving personalization.

Weekly activity (MET-minutes) maps to a fitness category; the default
cutoffs follow the usual activity-guideline bands and are configurable.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from ..errors import PHRValidationError

# Default MET-minutes/week cutoffs: below the first value is sedentary,
# above the second is very active, the closed band between is active.
DEFAULT_MET_CUTOFFS = (600.0, 3000.0)


class Sex(str, Enum):
    FEMALE = "female"
    MALE = "male"
    OTHER = "other"


class FitnessCategory(str, Enum):
    SEDENTARY = "Sedentary"
    ACTIVE = "Active"
    VERY_ACTIVE = "Very Active"


class Intensity(str, Enum):
    LOW = "Low"
    MODERATE = "Moderate"
    HIGH = "High"


class GoalKind(str, Enum):
    ENDURANCE = "endurance"
    WEIGHT_LOSS = "weight_loss"
    MUSCLE_GAIN = "muscle_gain"
    FLEXIBILITY = "flexibility"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Goal:
    kind: GoalKind
    text: str

    @classmethod
    def parse(cls, raw: str) -> "Goal":
        token = raw.strip()
        try:
            return cls(GoalKind(token.lower()), GoalKind(token.lower()).value)
        except ValueError:
            return cls(GoalKind.CUSTOM, token)


def categorize_met(met_minutes: float, cutoffs: tuple = DEFAULT_MET_CUTOFFS) -> FitnessCategory:
    lo, hi = cutoffs
    if met_minutes < lo:
        return FitnessCategory.SEDENTARY
    if met_minutes > hi:
        return FitnessCategory.VERY_ACTIVE
    return FitnessCategory.ACTIVE


@dataclass(frozen=True)
class PhysicalHealthReport:
    age: float
    sex: Sex
    height_cm: float
    weight_kg: float
    met_minutes_per_week: float
    fitness_category: FitnessCategory
    preferred_intensity: Intensity
    injuries: tuple = ()
    goal: Goal = field(default_factory=lambda: Goal(GoalKind.ENDURANCE, "endurance"))

    def to_doc(self) -> dict:
        return {
            "age": self.age,
            "sex": self.sex.value,
            "height_cm": self.height_cm,
            "weight_kg": self.weight_kg,
            "met_minutes_per_week": self.met_minutes_per_week,
            "fitness_category": self.fitness_category.value,
            "preferred_intensity": self.preferred_intensity.value,
            "injuries": list(self.injuries),
            "goal": self.goal.text,
        }


_REQUIRED = (
    "age", "sex", "height_cm", "weight_kg", "met_minutes_per_week",
    "fitness_category", "preferred_intensity",
)


def validate_phr(raw: dict, cutoffs: tuple = DEFAULT_MET_CUTOFFS) -> PhysicalHealthReport:
    """Validate a report-shaped document, reporting every violation at once.

    Raises PHRValidationError whose .issues lists each problem as
    "MissingField: x", "OutOfRange: x", or "CategoryMismatch: ...".
    """
    issues: list[str] = []
    for name in _REQUIRED:
        if name not in raw:
            issues.append(f"MissingField: {name}")
    if issues:
        raise PHRValidationError(issues)

    def numeric(name, lo, hi):
        try:
            v = float(raw[name])
        except (TypeError, ValueError):
            issues.append(f"OutOfRange: {name} (not numeric)")
            return None
        if not (lo <= v <= hi):
            issues.append(f"OutOfRange: {name} ({v} not in [{lo}, {hi}])")
            return None
        return v

    age = numeric("age", 10, 100)
    height = numeric("height_cm", 50, 260)
    weight = numeric("weight_kg", 20, 400)
    met = numeric("met_minutes_per_week", 0, 1e6)

    sex = category = intensity = None
    try:
        sex = Sex(str(raw["sex"]).lower())
    except ValueError:
        issues.append("OutOfRange: sex")
    try:
        category = FitnessCategory(raw["fitness_category"])
    except ValueError:
        issues.append("OutOfRange: fitness_category")
    try:
        intensity = Intensity(raw["preferred_intensity"])
    except ValueError:
        issues.append("OutOfRange: preferred_intensity")

    if met is not None and category is not None:
        expected = categorize_met(met, cutoffs)
        if expected != category:
            issues.append(
                f"CategoryMismatch: {met} MET-min/week is {expected.value}, "
                f"profile says {category.value}"
            )

    injuries = raw.get("injuries", [])
    if not isinstance(injuries, (list, tuple)) or not all(isinstance(t, str) for t in injuries):
        issues.append("OutOfRange: injuries (must be a list of tags)")
        injuries = []

    if issues:
        raise PHRValidationError(issues)

    return PhysicalHealthReport(
        age=age,
        sex=sex,
        height_cm=height,
        weight_kg=weight,
        met_minutes_per_week=met,
        fitness_category=category,
        preferred_intensity=intensity,
        injuries=tuple(injuries),
        goal=Goal.parse(str(raw.get("goal", "endurance"))),
    )


def load_phr(path: str, cutoffs: tuple = DEFAULT_MET_CUTOFFS) -> PhysicalHealthReport:
    with open(path, "r", encoding="utf-8") as fh:
        return validate_phr(json.load(fh), cutoffs)
