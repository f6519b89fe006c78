"""Exception hierarchy shared across the engine.

Every engine-raised error derives from CoachError so callers can catch
one base type at process boundaries (CLI, serve endpoint) while tests
assert on the specific classes.
"""
from __future__ import annotations


class CoachError(Exception):
    """Base class for all engine errors."""


# --- wire / validation ---

class MalformedLine(CoachError):
    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at {position})")
        self.position = position


class UnknownEventKind(CoachError):
    pass


class InvariantViolation(CoachError):
    pass


class PHRValidationError(CoachError):
    """Aggregates every violated profile invariant, not just the first."""

    def __init__(self, issues: list[str]):
        super().__init__("; ".join(issues))
        self.issues = issues


# --- ingest ---

class BackwardsTimestamp(CoachError):
    def __init__(self, source: str, ts: float):
        super().__init__(f"source {source!r} went backwards to ts={ts}")
        self.source = source
        self.ts = ts


class InsufficientSamples(CoachError):
    def __init__(self, count: int, needed: int):
        super().__init__(f"have {count} samples, need {needed}")
        self.count = count
        self.needed = needed


class NoSamples(CoachError):
    pass


# --- kinematics ---

class DegenerateAngle(CoachError):
    pass


class DegenerateLine(CoachError):
    pass


class IndexOutOfRange(CoachError, IndexError):
    pass


# --- machines ---

class UnknownPose(CoachError):
    pass


class UnknownExercise(CoachError):
    pass


# --- physio ---

class AllFeaturesExcluded(CoachError):
    pass


class RestingExceedsMax(CoachError):
    pass


# --- reasoning / backend ---

class Unparseable(CoachError):
    pass


class BackendTimeout(CoachError):
    pass


class TransportError(CoachError):
    pass


# --- session ---

class StreamEnded(CoachError):
    pass


class BaselineUnavailable(CoachError):
    pass


class DeliveryFailed(CoachError):
    pass


# --- evalbench ---

class EmptyCorpus(CoachError):
    pass


class InsufficientEvents(CoachError):
    def __init__(self, count: int, needed: int):
        super().__init__(f"have {count} feedback events, need {needed}")
        self.count = count
        self.needed = needed
