"""Engine configuration: every threshold, band, and table in one place.

Defaults are the shipped values; a JSON config file deep-merges over them
so any single knob can be overridden without restating the rest.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .core.types import (
    LEFT_ANKLE, LEFT_HIP, LEFT_KNEE, LEFT_SHOULDER,
    RIGHT_ANKLE, RIGHT_HIP, RIGHT_KNEE,
)
from .errors import InvariantViolation


@dataclass(frozen=True)
class CurlConfig:
    # Hysteresis pair: extended above theta_down, curled below theta_up.
    theta_down_deg: float = 160.0
    theta_up_deg: float = 45.0
    # An excursion that never dips below theta_peak is a weak contraction.
    theta_peak_deg: float = 60.0
    # Upper-arm drift from the shoulder-hip vertical beyond this is loose.
    phi_arm_deg: float = 25.0
    # The arm must leave the extended range by this margin before an
    # excursion is judged at all (kills jitter around theta_down).
    engage_margin_deg: float = 30.0


@dataclass(frozen=True)
class LungeConfig:
    initial_deg: float = 160.0
    down_deg: float = 100.0
    # Knee past toe by more than kappa (normalized x) is a form error.
    kappa: float = 0.03
    # Facing direction comes from hip x displacement over this many frames;
    # displacements within the deadband keep the previous direction.
    direction_window_frames: int = 30
    direction_deadband: float = 0.05


@dataclass(frozen=True)
class PlankConfig:
    # Hip offset from the shoulder-ankle line: above +beta is a high back,
    # below -beta a low back, between is correct.
    beta: float = 0.05


@dataclass(frozen=True)
class JointBand:
    """One templated joint: angle at vertex b between a and c must lie in [lo, hi]."""

    name: str
    a: int
    b: int
    c: int
    lo_deg: float
    hi_deg: float

    def __post_init__(self):
        if not (0 <= self.lo_deg <= self.hi_deg <= 180):
            raise InvariantViolation(f"joint band {self.name}: bad range")


def _tree() -> tuple:
    return (
        JointBand("standing_knee", LEFT_HIP, LEFT_KNEE, LEFT_ANKLE, 165.0, 180.0),
        JointBand("raised_knee", RIGHT_HIP, RIGHT_KNEE, RIGHT_ANKLE, 0.0, 90.0),
    )


def _warrior() -> tuple:
    return (
        JointBand("front_knee", LEFT_HIP, LEFT_KNEE, LEFT_ANKLE, 70.0, 110.0),
        JointBand("back_knee", RIGHT_HIP, RIGHT_KNEE, RIGHT_ANKLE, 165.0, 180.0),
    )


def _downward_dog() -> tuple:
    return (
        JointBand("hips", LEFT_SHOULDER, LEFT_HIP, LEFT_KNEE, 60.0, 100.0),
        JointBand("left_knee", LEFT_HIP, LEFT_KNEE, LEFT_ANKLE, 160.0, 180.0),
        JointBand("right_knee", RIGHT_HIP, RIGHT_KNEE, RIGHT_ANKLE, 160.0, 180.0),
    )


@dataclass(frozen=True)
class YogaTemplates:
    tree: tuple = field(default_factory=_tree)
    warrior: tuple = field(default_factory=_warrior)
    downward_dog: tuple = field(default_factory=_downward_dog)

    def for_pose(self, pose_value: str) -> tuple:
        return getattr(self, str(pose_value))

    def _merge_doc(self, doc: dict) -> "YogaTemplates":
        kwargs = {}
        for name in ("tree", "warrior", "downward_dog"):
            if name in doc:
                kwargs[name] = tuple(JointBand(**j) for j in doc[name])
        return dataclasses.replace(self, **kwargs)


@dataclass(frozen=True)
class CardioConfig:
    # Segment boundaries as fractions of the planned duration.
    warmup_frac: float = 0.15
    ramp_frac: float = 0.30
    steady_frac: float = 0.80
    # Off-zone must persist this long (during Steady) before a pace nudge.
    persistence_s: float = 30.0
    # Periodic time-check cadence.
    progress_every_s: float = 120.0

    def __post_init__(self):
        if not (0 < self.warmup_frac < self.ramp_frac < self.steady_frac < 1):
            raise InvariantViolation("cardio segment fractions must be ordered in (0, 1)")


@dataclass(frozen=True)
class AdjustConfig:
    weight_step_kg: float = 2.5
    hold_step_s: float = 10.0
    # This many form-error episodes in a set forces a step down.
    error_episodes_down: int = 3


@dataclass(frozen=True)
class BackendConfig:
    timeout_ms: float = 5000.0
    inter_retries: int = 1      # rest planning tolerates one retry
    intra_retries: int = 0      # stale live feedback is worse than none
    url: str = ""
    word_cap: int = 15


@dataclass(frozen=True)
class SimConfig:
    seed: int = 7
    fps: float = 60.0
    hr_hz: float = 2.0
    vocal_hz: float = 10.0
    pain_hz: float = 1.0
    baseline_s: float = 30.0
    hr_tau_s: float = 30.0
    landmark_noise: float = 0.005
    hr_noise_bpm: float = 1.5
    fatigue_growth_per_min: float = 0.05
    compliance: float = 1.0


@dataclass(frozen=True)
class BenchConfig:
    # Injected per-stage latency targets (mean, median) in ms; sampling is
    # log-normal with sigma derived from the mean/median ratio.
    capture_ms: tuple = (21.5, 19.8)
    pose_ms: tuple = (46.3, 44.1)
    physio_ms: tuple = (33.8, 31.5)
    llm_ms: tuple = (485.2, 460.7)
    tts_ms: tuple = (784.5, 755.2)
    events: int = 1000


@dataclass(frozen=True)
class EngineConfig:
    met_cutoffs: tuple = (600.0, 3000.0)
    merge_tolerance_ms: float = 5.0
    hr_baseline_samples: int = 60
    hr_window: int = 5
    vocal_baseline_window_s: float = 30.0
    vocal_baseline_min_frames: int = 10
    min_visibility: float = 0.5
    # Consecutive violating frames before a form error starts (and clean
    # frames before it ends).
    persist_frames: int = 15
    # Frame gaps above this are treated as dropouts: no timer credit.
    max_frame_gap_ms: float = 200.0
    curl: CurlConfig = field(default_factory=CurlConfig)
    lunge: LungeConfig = field(default_factory=LungeConfig)
    plank: PlankConfig = field(default_factory=PlankConfig)
    yoga: YogaTemplates = field(default_factory=YogaTemplates)
    fatigue_threshold: float = 0.60
    fatigue_combine: str = "any"        # any | all | majority
    hr_band_bpm: float = 5.0
    safe_max_fraction: float = 0.95
    intensity_table: dict = field(default_factory=lambda: {
        "LISS": {"Low": 0.50, "Moderate": 0.60, "High": 0.65},
        "HISS": {"Low": 0.65, "Moderate": 0.72, "High": 0.80},
    })
    debounce_gap_s: float = 5.0
    rest_floor_s: int = 15
    rest_cap_s: int = 60
    adjust: AdjustConfig = field(default_factory=AdjustConfig)
    cardio: CardioConfig = field(default_factory=CardioConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    snapshot_log_interval_ms: float = 1000.0

    def __post_init__(self):
        lo, hi = self.met_cutoffs
        if not (0 <= lo < hi):
            raise InvariantViolation("MET cutoffs must be ordered")
        if not (0.50 <= self.fatigue_threshold <= 0.80):
            raise InvariantViolation("fatigue threshold must stay within [0.50, 0.80]")
        if self.fatigue_combine not in ("any", "all", "majority"):
            raise InvariantViolation(f"unknown combine rule {self.fatigue_combine!r}")
        if self.hr_band_bpm <= 0:
            raise InvariantViolation("hr band must be positive")
        if not (0 < self.safe_max_fraction <= 1):
            raise InvariantViolation("safe max fraction must be in (0, 1]")
        if self.persist_frames < 1 or self.debounce_gap_s < 0:
            raise InvariantViolation("persistence and debounce must be non-negative")

    @classmethod
    def load(cls, path: str) -> "EngineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))

    @classmethod
    def from_doc(cls, doc: dict) -> "EngineConfig":
        return _merge(cls(), doc)


def _merge(obj, doc: dict):
    """Deep-merge a config document over a dataclass instance."""
    kwargs = {}
    for f in dataclasses.fields(obj):
        if f.name not in doc:
            continue
        cur = getattr(obj, f.name)
        new = doc[f.name]
        if hasattr(cur, "_merge_doc") and isinstance(new, dict):
            kwargs[f.name] = cur._merge_doc(new)
        elif dataclasses.is_dataclass(cur) and isinstance(new, dict):
            kwargs[f.name] = _merge(cur, new)
        elif isinstance(cur, tuple) and isinstance(new, list):
            kwargs[f.name] = tuple(new)
        else:
            kwargs[f.name] = new
    return dataclasses.replace(obj, **kwargs)


def desk_scale(cfg: EngineConfig) -> EngineConfig:
    """Scale cardio pacing knobs for a 60-second desk-scale cardio phase."""
    scaled = dataclasses.replace(cfg.cardio, persistence_s=3.0, progress_every_s=12.0)
    sim = dataclasses.replace(cfg.sim, hr_tau_s=6.0)
    return dataclasses.replace(cfg, cardio=scaled, sim=sim)
