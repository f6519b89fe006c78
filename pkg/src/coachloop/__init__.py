"""coachloop: a real-time adaptive workout coaching engine.

Consumes multi-modal sensor streams (pose landmarks, heart rate, vocal
features, pain estimates, operator steering), tracks exercise execution
with per-exercise state machines, fuses physiological signals, and
produces prioritized spoken-coach interventions through a two-tier
reasoning layer with deterministic fallbacks.
"""

__version__ = "0.1.0"

from . import core
from .errors import CoachError

__all__ = ["CoachError", "core", "__version__"]
