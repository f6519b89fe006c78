"""Core value types, the profile model, session plans, and the wire codec."""
from .phr import (
    DEFAULT_MET_CUTOFFS,
    FitnessCategory,
    Goal,
    GoalKind,
    Intensity,
    PhysicalHealthReport,
    Sex,
    categorize_met,
    load_phr,
    validate_phr,
)
from .plan import (
    BalancePhase,
    CardioMode,
    CardioPhase,
    FlexibilityPhase,
    SessionPlan,
    StrengthPhase,
    default_plan,
    load_plan,
    plan_from_doc,
    plan_to_doc,
)
from .types import (
    BICEP_CURL,
    CARDIO,
    CATEGORY_PRIORITY,
    ELBOW_PLANK,
    LANDMARK_COUNT,
    LUNGE,
    SNAPSHOT_KEYS,
    Exercise,
    ExerciseKind,
    ExertionLevel,
    FormErrorKind,
    HRSample,
    HRZone,
    Intervention,
    InterventionCategory,
    InterventionSource,
    LandmarkFrame,
    MachineEvent,
    PainLevel,
    PainObservation,
    RestPlan,
    SensorEvent,
    SteeringCommand,
    SteeringKind,
    UserStateSnapshot,
    VocalFrame,
    YogaPose,
)
from .wire import decode_event, dumps_doc, encode_event, read_trace, write_trace

__all__ = [
    "BICEP_CURL", "CARDIO", "CATEGORY_PRIORITY", "DEFAULT_MET_CUTOFFS",
    "ELBOW_PLANK", "LANDMARK_COUNT", "LUNGE", "SNAPSHOT_KEYS",
    "BalancePhase", "CardioMode", "CardioPhase", "Exercise", "ExerciseKind",
    "ExertionLevel", "FitnessCategory", "FlexibilityPhase", "FormErrorKind",
    "Goal", "GoalKind", "HRSample", "HRZone", "Intensity", "Intervention",
    "InterventionCategory", "InterventionSource", "LandmarkFrame",
    "MachineEvent", "PainLevel", "PainObservation", "PhysicalHealthReport",
    "RestPlan", "SensorEvent", "SessionPlan", "Sex", "SteeringCommand",
    "SteeringKind", "StrengthPhase", "UserStateSnapshot", "VocalFrame",
    "YogaPose", "categorize_met", "decode_event", "default_plan",
    "dumps_doc", "encode_event", "load_phr", "load_plan", "plan_from_doc",
    "plan_to_doc", "read_trace", "validate_phr", "write_trace",
]
