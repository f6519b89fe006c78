"""Physiological label inference: pain, vocal fatigue, HR targets and zones."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

from .core.phr import Intensity
from .core.plan import CardioMode
from .core.types import HRZone, PainLevel, PainObservation, VocalFrame
from .errors import AllFeaturesExcluded, InvariantViolation, RestingExceedsMax

_LEVELS = (PainLevel.LOW, PainLevel.MEDIUM, PainLevel.HIGH)


@dataclass(frozen=True)
class FatigueConfig:
    """Relative-deviation threshold, constrained to the supported band."""

    threshold_fraction: float = 0.60
    combine: str = "any"                # any | all | majority

    def __post_init__(self):
        if not (0.50 <= self.threshold_fraction <= 0.80):
            raise InvariantViolation(
                f"fatigue threshold {self.threshold_fraction} outside [0.50, 0.80]")
        if self.combine not in ("any", "all", "majority"):
            raise InvariantViolation(f"unknown combine rule {self.combine!r}")


@dataclass(frozen=True)
class HRZoneConfig:
    target_band_bpm: float = 5.0
    safe_max_fraction: float = 0.95

    def __post_init__(self):
        if self.target_band_bpm <= 0:
            raise InvariantViolation("target band must be positive")
        if not (0 < self.safe_max_fraction <= 1):
            raise InvariantViolation("safe max fraction must be in (0, 1]")


def classify_pain(obs: PainObservation) -> PainLevel:
    """Argmax label; exact ties resolve toward the higher severity."""
    best = max(range(3), key=lambda i: (obs.probs[i], i))
    return _LEVELS[best]


def detect_fatigue(frame: VocalFrame, baseline, cfg: FatigueConfig) -> Tuple[bool, Dict[str, float]]:
    """Relative per-feature deviation vote against the session baseline.

    Features with a zero baseline are excluded (relative deviation is
    undefined there). Thresholding is strict: exactly 60% is not fatigue.
    Returns (fatigued, deviations) with one entry per included feature.
    """
    pairs = (
        ("pitch_hz", frame.pitch_hz, baseline.pitch_hz),
        ("loudness_db", frame.loudness_db, baseline.loudness_db),
        ("zcr", frame.zcr, baseline.zcr),
    )
    deviations: Dict[str, float] = {}
    for name, cur, base in pairs:
        if base == 0:
            continue
        deviations[name] = abs(cur - base) / abs(base)
    if not deviations:
        raise AllFeaturesExcluded("every vocal feature has a zero baseline")

    votes = sum(1 for d in deviations.values() if d > cfg.threshold_fraction)
    n = len(deviations)
    if cfg.combine == "any":
        fatigued = votes >= 1
    elif cfg.combine == "all":
        fatigued = votes == n
    else:
        fatigued = votes > n / 2
    return fatigued, deviations


def max_hr(age_years: float) -> float:
    return 220.0 - age_years


def karvonen_target(resting_bpm: float, age_years: float, intensity_fraction: float) -> float:
    """Target HR = (max HR - resting HR) x intensity + resting HR."""
    if not (0.0 <= intensity_fraction <= 1.0):
        raise InvariantViolation(f"intensity fraction {intensity_fraction} not in [0, 1]")
    peak = max_hr(age_years)
    if resting_bpm >= peak:
        raise RestingExceedsMax(f"resting {resting_bpm} >= max {peak}")
    return (peak - resting_bpm) * intensity_fraction + resting_bpm


def safe_max_bpm(age_years: float, cfg: HRZoneConfig) -> float:
    return cfg.safe_max_fraction * max_hr(age_years)


def hr_zone(current_bpm: float, target_bpm: float, cfg: HRZoneConfig) -> HRZone:
    if current_bpm < target_bpm - cfg.target_band_bpm:
        return HRZone.BELOW
    if current_bpm > target_bpm + cfg.target_band_bpm:
        return HRZone.ABOVE
    return HRZone.TARGET


DEFAULT_INTENSITY_TABLE = {
    "LISS": {"Low": 0.50, "Moderate": 0.60, "High": 0.65},
    "HISS": {"Low": 0.65, "Moderate": 0.72, "High": 0.80},
}


def intensity_fraction(pref: Intensity, mode: CardioMode, table: dict = None) -> float:
    table = table if table is not None else DEFAULT_INTENSITY_TABLE
    return float(table[CardioMode(mode).value][Intensity(pref).value])
