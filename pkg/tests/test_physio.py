"""Pain, vocal fatigue, and heart-rate target/zone inference."""
from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from coachloop.core.phr import Intensity
from coachloop.core.plan import CardioMode
from coachloop.core.types import HRZone, PainLevel, PainObservation, VocalFrame
from coachloop.errors import AllFeaturesExcluded, InvariantViolation, RestingExceedsMax
from coachloop.physio import (
    DEFAULT_INTENSITY_TABLE,
    FatigueConfig,
    HRZoneConfig,
    classify_pain,
    detect_fatigue,
    hr_zone,
    intensity_fraction,
    karvonen_target,
    max_hr,
    safe_max_bpm,
)


def vocal(pitch=150.0, loud=60.0, zcr=0.10, ts=0.0):
    return VocalFrame(ts=ts, pitch_hz=pitch, loudness_db=loud, zcr=zcr)


# --- heart-rate targets ------------------------------------------------------

def test_karvonen_reserve_formula_exact():
    # (220 - 30 - 65) * 0.7 + 65
    assert karvonen_target(65.0, 30.0, 0.7) == 152.5


def test_karvonen_endpoints_hit_resting_and_max():
    assert karvonen_target(65.0, 30.0, 0.0) == 65.0
    assert karvonen_target(65.0, 30.0, 1.0) == max_hr(30.0) == 190.0


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_karvonen_monotone_in_intensity(f1, f2):
    lo, hi = sorted((f1, f2))
    assert karvonen_target(65.0, 30.0, lo) <= karvonen_target(65.0, 30.0, hi)


def test_karvonen_rejects_bad_fraction():
    with pytest.raises(InvariantViolation):
        karvonen_target(65.0, 30.0, -0.01)
    with pytest.raises(InvariantViolation):
        karvonen_target(65.0, 30.0, 1.01)


def test_karvonen_rejects_resting_at_or_above_max():
    with pytest.raises(RestingExceedsMax):
        karvonen_target(190.0, 30.0, 0.5)
    with pytest.raises(RestingExceedsMax):
        karvonen_target(200.0, 30.0, 0.5)


def test_safe_max_is_a_fraction_of_max_hr():
    assert safe_max_bpm(30.0, HRZoneConfig()) == pytest.approx(0.95 * 190.0)


# --- zone banding ------------------------------------------------------------

def test_zone_band_edges_are_inclusive():
    cfg = HRZoneConfig(target_band_bpm=5.0)
    assert hr_zone(144.9, 150.0, cfg) is HRZone.BELOW
    assert hr_zone(145.0, 150.0, cfg) is HRZone.TARGET
    assert hr_zone(155.0, 150.0, cfg) is HRZone.TARGET
    assert hr_zone(155.1, 150.0, cfg) is HRZone.ABOVE


@given(st.floats(30.0, 220.0), st.floats(60.0, 190.0))
def test_zone_partition_is_total_and_ordered(current, target):
    cfg = HRZoneConfig()
    zone = hr_zone(current, target, cfg)
    if current < target - cfg.target_band_bpm:
        assert zone is HRZone.BELOW
    elif current > target + cfg.target_band_bpm:
        assert zone is HRZone.ABOVE
    else:
        assert zone is HRZone.TARGET


def test_zone_config_validation():
    with pytest.raises(InvariantViolation):
        HRZoneConfig(target_band_bpm=0.0)
    with pytest.raises(InvariantViolation):
        HRZoneConfig(safe_max_fraction=0.0)
    HRZoneConfig(safe_max_fraction=1.0)


# --- intensity preference table ----------------------------------------------

def test_intensity_table_lookup():
    assert intensity_fraction(Intensity.MODERATE, CardioMode.LISS) == 0.60
    assert intensity_fraction(Intensity.HIGH, CardioMode.HISS) == 0.80
    assert intensity_fraction("Low", "LISS") == 0.50


def test_intensity_table_override():
    table = {"LISS": {"Moderate": 0.55}}
    assert intensity_fraction("Moderate", "LISS", table) == 0.55


def test_default_table_covers_both_modes_and_all_prefs():
    for mode in ("LISS", "HISS"):
        for pref in ("Low", "Moderate", "High"):
            assert 0.0 < DEFAULT_INTENSITY_TABLE[mode][pref] <= 1.0


# --- pain classification -------------------------------------------------------

def test_pain_argmax_on_clear_winners():
    assert classify_pain(PainObservation(0.0, (0.8, 0.1, 0.1))) is PainLevel.LOW
    assert classify_pain(PainObservation(0.0, (0.1, 0.8, 0.1))) is PainLevel.MEDIUM
    assert classify_pain(PainObservation(0.0, (0.1, 0.1, 0.8))) is PainLevel.HIGH


def test_pain_ties_resolve_toward_higher_severity():
    assert classify_pain(PainObservation(0.0, (0.4, 0.4, 0.2))) is PainLevel.MEDIUM
    assert classify_pain(PainObservation(0.0, (0.2, 0.4, 0.4))) is PainLevel.HIGH
    third = 1.0 / 3.0
    assert classify_pain(PainObservation(0.0, (third, third, third))) is PainLevel.HIGH


# --- vocal fatigue -------------------------------------------------------------

def test_fatigue_threshold_is_strict():
    base = vocal()
    cfg = FatigueConfig(threshold_fraction=0.60)
    at_60pct = vocal(pitch=150.0 * 1.6)
    fatigued, dev = detect_fatigue(at_60pct, base, cfg)
    assert dev["pitch_hz"] == pytest.approx(0.60)
    assert not fatigued
    above, _ = detect_fatigue(vocal(pitch=150.0 * 1.61), base, cfg)
    assert above


def test_fatigue_deviations_are_relative_and_signless():
    base = vocal()
    _, dev = detect_fatigue(vocal(pitch=75.0, loud=90.0, zcr=0.10), base, FatigueConfig())
    assert dev == {"pitch_hz": pytest.approx(0.5),
                   "loudness_db": pytest.approx(0.5),
                   "zcr": pytest.approx(0.0)}


def test_fatigue_combine_rules():
    base = vocal()
    two_of_three = vocal(pitch=300.0, loud=120.0, zcr=0.10)
    assert detect_fatigue(two_of_three, base, FatigueConfig(combine="any"))[0]
    assert not detect_fatigue(two_of_three, base, FatigueConfig(combine="all"))[0]
    assert detect_fatigue(two_of_three, base, FatigueConfig(combine="majority"))[0]
    one_of_three = vocal(pitch=300.0)
    assert detect_fatigue(one_of_three, base, FatigueConfig(combine="any"))[0]
    assert not detect_fatigue(one_of_three, base, FatigueConfig(combine="majority"))[0]


def test_fatigue_excludes_zero_baseline_features():
    base = vocal(zcr=0.0)
    _, dev = detect_fatigue(vocal(zcr=0.9), base, FatigueConfig())
    assert set(dev) == {"pitch_hz", "loudness_db"}


def test_fatigue_all_zero_baseline_raises():
    base = vocal(pitch=0.0, loud=0.0, zcr=0.0)
    with pytest.raises(AllFeaturesExcluded):
        detect_fatigue(vocal(), base, FatigueConfig())


def test_fatigue_majority_over_two_included_features_needs_both():
    # with zcr excluded, majority of 2 means votes > 1
    base = vocal(zcr=0.0)
    one_vote = vocal(pitch=300.0, loud=60.0, zcr=0.5)
    assert not detect_fatigue(one_vote, base, FatigueConfig(combine="majority"))[0]
    two_votes = vocal(pitch=300.0, loud=120.0, zcr=0.5)
    assert detect_fatigue(two_votes, base, FatigueConfig(combine="majority"))[0]


def test_fatigue_config_bounds():
    FatigueConfig(threshold_fraction=0.50)
    FatigueConfig(threshold_fraction=0.80)
    with pytest.raises(InvariantViolation):
        FatigueConfig(threshold_fraction=0.49)
    with pytest.raises(InvariantViolation):
        FatigueConfig(threshold_fraction=0.81)
    with pytest.raises(InvariantViolation):
        FatigueConfig(combine="sometimes")
