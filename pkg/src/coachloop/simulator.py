"""Deterministic synthetic exerciser.

Renders multi-rate sensor streams (pose frames, heart rate, vocal
features, pain probabilities) for whatever the session directs the
exerciser to do. Joint geometry is constructed so target angles are
exact before noise: limbs are placed by rotating unit vectors, lunge
legs form an isoceles two-bar linkage, and the plank hip sits at a
chosen signed offset from the shoulder-ankle line. Each stream draws
from its own seeded generator, so output is byte-reproducible for a
given seed regardless of how callers slice time.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .config import SimConfig
from .core.types import (
    ExerciseKind, HRSample, InterventionCategory, LandmarkFrame,
    PainObservation, SteeringCommand, SteeringKind, VocalFrame,
    LEFT_SHOULDER, LEFT_ELBOW, LEFT_WRIST, LEFT_HIP, LEFT_KNEE, LEFT_ANKLE,
    LEFT_FOOT_INDEX, RIGHT_HIP, RIGHT_KNEE, RIGHT_ANKLE,
)
from .errors import InvariantViolation

_FILLER = (0.5, 0.5, 0.0, 0.2)      # below the visibility floor, ignored downstream
_ACTIVE_VIS = 0.95


@dataclass(frozen=True)
class ExerciserProfile:
    age: float = 30.0
    resting_bpm: float = 65.0


@dataclass(frozen=True)
class Injection:
    """A scheduled perturbation within one set, offset from set start."""

    phase_index: int
    set_index: int
    offset_s: float
    kind: str               # form_error | pain | fatigue
    duration_s: float
    param: str = ""         # error kind or pain level

    def __post_init__(self):
        if self.kind not in ("form_error", "pain", "fatigue"):
            raise InvariantViolation(f"unknown injection kind {self.kind!r}")


def default_scenario() -> Tuple[Injection, ...]:
    """Demo schedule exercising every intervention pathway once.

    Phase indices follow the default plan: 0 cardio, 1 lunges, 2 curls,
    3 plank holds, 4 yoga poses.
    """
    return (
        Injection(1, 0, 8.0, "form_error", 1.5, "knee_over_toe"),
        Injection(2, 0, 7.0, "form_error", 1.5, "loose_upper_arm"),
        Injection(2, 0, 12.5, "form_error", 2.5, "weak_peak_contraction"),
        Injection(2, 1, 5.0, "fatigue", 8.0),
        Injection(2, 1, 14.0, "pain", 2.5, "Medium"),
        Injection(3, 0, 8.0, "pain", 3.0, "High"),
        Injection(3, 1, 6.0, "form_error", 2.0, "low_back"),
        Injection(4, 0, 6.0, "form_error", 2.0, "misaligned_pose"),
    )


# --- geometry -------------------------------------------------------------

def _unit(vx: float, vy: float) -> Tuple[float, float]:
    n = math.hypot(vx, vy)
    return vx / n, vy / n


def _third(a: Tuple[float, float], b: Tuple[float, float], angle_deg: float,
           length: float) -> Tuple[float, float]:
    """Point c at `length` from b such that the interior angle abc is exact."""
    ux, uy = _unit(a[0] - b[0], a[1] - b[1])
    r = math.radians(angle_deg)
    cx = math.cos(r) * ux - math.sin(r) * uy
    cy = math.sin(r) * ux + math.cos(r) * uy
    return b[0] + length * cx, b[1] + length * cy


def _blank() -> List[Tuple[float, float, float, float]]:
    return [_FILLER] * 33


def _place(pts, index, xy):
    pts[index] = (xy[0], xy[1], 0.0, _ACTIVE_VIS)


def curl_pose(elbow_deg: float, dev_deg: float) -> List[Tuple[float, float, float, float]]:
    """Left arm; elbow and shoulder-deviation angles are exact."""
    s = (0.50, 0.30)
    h = (0.50, 0.60)
    d = math.radians(dev_deg)
    e = (s[0] + 0.15 * math.sin(d), s[1] + 0.15 * math.cos(d))
    t = math.radians(elbow_deg - dev_deg)
    w = (e[0] + 0.13 * math.sin(t), e[1] - 0.13 * math.cos(t))
    pts = _blank()
    _place(pts, LEFT_SHOULDER, s)
    _place(pts, LEFT_ELBOW, e)
    _place(pts, LEFT_WRIST, w)
    _place(pts, LEFT_HIP, h)
    return pts


_LUNGE_ANKLE = (0.58, 0.85)
_LUNGE_LIMB = 0.22


def lunge_pose(knee_deg: float, hip_x: float,
               foot_x: Optional[float] = None) -> List[Tuple[float, float, float, float]]:
    """Front leg as an isoceles linkage; knee angle is exact.

    The hip rides a vertical rail at hip_x while the ankle stays
    planted, so a clean rep produces zero horizontal hip drift.
    """
    ax, ay = _LUNGE_ANKLE
    c = 2.0 * _LUNGE_LIMB * math.sin(math.radians(knee_deg) / 2.0)
    dx = ax - hip_x
    hy = ay - math.sqrt(max(c * c - dx * dx, 1e-12))
    hip = (hip_x, hy)
    mx, my = (hip[0] + ax) / 2.0, (hip[1] + ay) / 2.0
    m = math.sqrt(max(_LUNGE_LIMB ** 2 - (c / 2.0) ** 2, 0.0))
    dux, duy = _unit(ax - hip[0], ay - hip[1])
    knee = (mx + m * duy, my - m * dux)     # perp, biased forward (+x)
    foot = (foot_x if foot_x is not None else ax + 0.10, ay + 0.02)
    pts = _blank()
    _place(pts, LEFT_HIP, hip)
    _place(pts, LEFT_KNEE, knee)
    _place(pts, LEFT_ANKLE, (ax, ay))
    _place(pts, LEFT_FOOT_INDEX, foot)
    return pts


_PLANK_SHOULDER = (0.30, 0.60)
_PLANK_ANKLE = (0.80, 0.64)


def plank_pose(offset: float) -> List[Tuple[float, float, float, float]]:
    """Hip at an exact signed offset from the shoulder-ankle line."""
    sx, sy = _PLANK_SHOULDER
    ax, ay = _PLANK_ANKLE
    dx, dy = ax - sx, ay - sy
    n = math.hypot(dx, dy)
    mx, my = sx + 0.55 * dx, sy + 0.55 * dy
    hip = (mx + offset * dy / n, my - offset * dx / n)
    pts = _blank()
    _place(pts, LEFT_SHOULDER, (sx, sy))
    _place(pts, LEFT_HIP, hip)
    _place(pts, LEFT_ANKLE, (ax, ay))
    return pts


ALIGNED_ANGLES: Dict[str, Dict[str, float]] = {
    "tree": {"standing_knee": 174.0, "raised_knee": 45.0},
    "warrior": {"front_knee": 90.0, "back_knee": 174.0},
    "downward_dog": {"hips": 80.0, "left_knee": 172.0, "right_knee": 172.0},
}

MISALIGNED_JOINT: Dict[str, Tuple[str, float]] = {
    "tree": ("raised_knee", 150.0),
    "warrior": ("front_knee", 150.0),
    "downward_dog": ("hips", 130.0),
}


def yoga_pose(pose_value: str, angles: Dict[str, float]) -> List[Tuple[float, float, float, float]]:
    pts = _blank()
    if pose_value == "tree":
        lh = (0.47, 0.52)
        lk = (0.47, 0.70)
        la = _third(lh, lk, angles["standing_knee"], 0.18)
        rh = (0.53, 0.52)
        tdir = _unit(0.45, 0.89)
        rk = (rh[0] + 0.16 * tdir[0], rh[1] + 0.16 * tdir[1])
        ra = _third(rh, rk, angles["raised_knee"], 0.16)
        _place(pts, LEFT_HIP, lh)
        _place(pts, LEFT_KNEE, lk)
        _place(pts, LEFT_ANKLE, la)
        _place(pts, RIGHT_HIP, rh)
        _place(pts, RIGHT_KNEE, rk)
        _place(pts, RIGHT_ANKLE, ra)
    elif pose_value == "warrior":
        lh = (0.44, 0.55)
        fdir = _unit(0.26, 0.97)
        lk = (lh[0] + 0.20 * fdir[0], lh[1] + 0.20 * fdir[1])
        la = _third(lh, lk, angles["front_knee"], 0.20)
        rh = (0.56, 0.55)
        bdir = _unit(0.42, 0.91)
        rk = (rh[0] + 0.20 * bdir[0], rh[1] + 0.20 * bdir[1])
        ra = _third(rh, rk, angles["back_knee"], 0.20)
        _place(pts, LEFT_HIP, lh)
        _place(pts, LEFT_KNEE, lk)
        _place(pts, LEFT_ANKLE, la)
        _place(pts, RIGHT_HIP, rh)
        _place(pts, RIGHT_KNEE, rk)
        _place(pts, RIGHT_ANKLE, ra)
    elif pose_value == "downward_dog":
        ls = (0.33, 0.52)
        lh = (0.52, 0.38)
        lk = _third(ls, lh, angles["hips"], 0.20)
        la = _third(lh, lk, angles["left_knee"], 0.20)
        rh = (0.54, 0.39)
        rdir = _unit(0.35, 0.94)
        rk = (rh[0] + 0.20 * rdir[0], rh[1] + 0.20 * rdir[1])
        ra = _third(rh, rk, angles["right_knee"], 0.20)
        _place(pts, LEFT_SHOULDER, ls)
        _place(pts, LEFT_HIP, lh)
        _place(pts, LEFT_KNEE, lk)
        _place(pts, LEFT_ANKLE, la)
        _place(pts, RIGHT_HIP, rh)
        _place(pts, RIGHT_KNEE, rk)
        _place(pts, RIGHT_ANKLE, ra)
    else:
        raise InvariantViolation(f"unknown pose {pose_value!r}")
    return pts


def standing_pose() -> List[Tuple[float, float, float, float]]:
    return curl_pose(175.0, 0.0)


# --- physiology -----------------------------------------------------------

def hr_step(bpm: float, target: float, dt_s: float, tau_s: float) -> float:
    """First-order relaxation toward the load target."""
    if tau_s <= 0:
        raise InvariantViolation("tau must be positive")
    return bpm + (target - bpm) * (1.0 - math.exp(-dt_s / tau_s))


_EXERTION_GROWTH = {"low": 0.5, "moderate": 1.0, "high": 8.0}
_PAIN_PROBS = {
    "Low": (0.90, 0.07, 0.03),
    "Medium": (0.15, 0.70, 0.15),
    "High": (0.05, 0.15, 0.80),
}

_KIND_RANK = {HRSample: 0, LandmarkFrame: 1, VocalFrame: 2, PainObservation: 3,
              SteeringCommand: 4}


@dataclass
class _Window:
    """An active perturbation in absolute time."""

    start_ms: float
    end_ms: float
    kind: str
    param: str


class Simulator:
    """Stateful stream renderer driven by session directives."""

    BASE_PITCH_HZ = 180.0
    BASE_LOUD_DB = 60.0
    BASE_ZCR = 0.12
    LUNGE_STEP_S = 0.5

    def __init__(self, profile: ExerciserProfile, cfg: SimConfig,
                 scenario: Sequence[Injection] = ()):
        self.profile = profile
        self.cfg = cfg
        self.scenario = tuple(scenario)
        self.t_ms = 0.0
        self.bpm = float(profile.resting_bpm)
        self.fatigue_dev = 0.0
        self.exertion = "moderate"
        self.handicap_bpm = 12.0
        self.directive = None
        self.set_t0 = 0.0
        self._live: List[_Window] = []
        seed = cfg.seed
        self._rng_lm = random.Random(f"{seed}:lm")
        self._rng_hr = random.Random(f"{seed}:hr")
        self._rng_vocal = random.Random(f"{seed}:vocal")
        self._rng_pain = random.Random(f"{seed}:pain")
        self._rng_steer = random.Random(f"{seed}:steer")
        self._lm_i = 0
        self._hr_i = 0
        self._vocal_i = 0
        self._pain_i = 0
        self._seq = 0

    # -- control inputs --

    def set_directive(self, directive) -> None:
        if directive is None:
            return
        prev = self.directive
        if prev is None or (prev.activity, prev.phase_index, prev.set_index) != (
                directive.activity, directive.phase_index, directive.set_index):
            self.set_t0 = self.t_ms
        self.directive = directive

    def apply_steering(self, cmd: SteeringCommand) -> None:
        if cmd.kind is SteeringKind.SET_EXERTION:
            self.exertion = cmd.level or "moderate"
        elif cmd.kind is SteeringKind.INJECT_FORM_ERROR and cmd.error is not None:
            dur = (cmd.duration_s or 2.0) * 1000.0
            self._live.append(_Window(self.t_ms, self.t_ms + dur,
                                      "form_error", cmd.error.value))
        elif cmd.kind is SteeringKind.REPORT_PAIN:
            dur = (cmd.duration_s or 3.0) * 1000.0
            self._live.append(_Window(self.t_ms, self.t_ms + dur,
                                      "pain", cmd.level or "Medium"))

    def observe_intervention(self, intervention) -> None:
        # the exerciser "hears" pace coaching and converges on the asked effort
        if intervention.category is InterventionCategory.INTENSITY_ADJUST:
            if self._rng_steer.random() < self.cfg.compliance:
                self.handicap_bpm = 0.0

    # -- active perturbations --

    def _windows(self, ts_ms: float) -> List[_Window]:
        d = self.directive
        out = [w for w in self._live if w.start_ms <= ts_ms < w.end_ms]
        if d is not None and d.activity in ("reps", "hold"):
            t_in = (ts_ms - self.set_t0) / 1000.0
            for inj in self.scenario:
                if (inj.phase_index == d.phase_index and inj.set_index == d.set_index
                        and inj.offset_s <= t_in < inj.offset_s + inj.duration_s):
                    start = self.set_t0 + inj.offset_s * 1000.0
                    out.append(_Window(start, start + inj.duration_s * 1000.0,
                                       inj.kind, inj.param))
        return out

    def _error_active(self, windows: List[_Window], kind: str) -> bool:
        return any(w.kind == "form_error" and w.param == kind for w in windows)

    # -- stream renderers --

    def _frame_pts(self, ts_ms: float) -> List[Tuple[float, float, float, float]]:
        d = self.directive
        windows = self._windows(ts_ms)
        if d is None or d.activity in ("baseline", "cardio", "rest", "idle", "done"):
            return standing_pose()
        if d.paused:
            return standing_pose()
        t_in = (ts_ms - self.set_t0) / 1000.0
        kind = d.exercise.kind if d.exercise is not None else None
        if d.activity == "reps" and kind is ExerciseKind.BICEP_CURL:
            period = d.rep_period_s
            rep_i = int(t_in // period)
            bottom = 30.0
            mid_ts = self.set_t0 + (rep_i + 0.5) * period * 1000.0
            for w in windows:
                if (w.kind == "form_error" and w.param == "weak_peak_contraction"
                        and w.start_ms <= mid_ts < w.end_ms):
                    bottom = 80.0
            mid = (170.0 + bottom) / 2.0
            amp = (170.0 - bottom) / 2.0
            theta = mid + amp * math.cos(2.0 * math.pi * t_in / period)
            dev = 50.0 if self._error_active(windows, "loose_upper_arm") else 0.0
            return curl_pose(theta, dev)
        if d.activity == "reps" and kind is ExerciseKind.LUNGE:
            if t_in < self.LUNGE_STEP_S:
                hip_x = 0.37 + 0.08 * (t_in / self.LUNGE_STEP_S)
                return lunge_pose(172.0, hip_x)
            t_rep = t_in - self.LUNGE_STEP_S
            theta = 130.0 + 42.0 * math.cos(2.0 * math.pi * t_rep / d.rep_period_s)
            foot_x = None
            if self._error_active(windows, "knee_over_toe"):
                probe = lunge_pose(theta, 0.45)
                foot_x = probe[LEFT_KNEE][0] - 0.08
            return lunge_pose(theta, 0.45, foot_x)
        if d.activity == "hold" and kind is ExerciseKind.ELBOW_PLANK:
            h = 0.0
            if self._error_active(windows, "high_back"):
                h = 0.10
            elif self._error_active(windows, "low_back"):
                h = -0.10
            return plank_pose(h)
        if d.activity == "hold" and kind is ExerciseKind.YOGA:
            pose = d.exercise.pose.value
            angles = dict(ALIGNED_ANGLES[pose])
            if self._error_active(windows, "misaligned_pose"):
                joint, bad = MISALIGNED_JOINT[pose]
                angles[joint] = bad
            return yoga_pose(pose, angles)
        return standing_pose()

    def _noisy(self, pts: List[Tuple[float, float, float, float]]):
        sigma = self.cfg.landmark_noise
        out = []
        g = self._rng_lm.gauss
        for p in pts:
            if p[3] >= 0.5 and sigma > 0:
                out.append((p[0] + g(0.0, sigma), p[1] + g(0.0, sigma), p[2], p[3]))
            else:
                out.append(p)
        return tuple(out)

    def _load_target(self) -> float:
        d = self.directive
        rest = self.profile.resting_bpm
        if d is None:
            return rest
        base = d.load_bpm
        if self.exertion == "high":
            base += 10.0
        elif self.exertion == "low":
            base -= 5.0
        if d.activity == "cardio":
            base -= self.handicap_bpm
        return max(rest, base)

    def advance(self, until_ms: float) -> List:
        """Render all stream events with ts in [t_ms, until_ms), merged."""
        if until_ms < self.t_ms:
            raise InvariantViolation("cannot advance backwards")
        events = []
        # pose frames
        frame_dt = 1000.0 / self.cfg.fps
        while self._lm_i * frame_dt < until_ms:
            ts = self._lm_i * frame_dt
            if ts >= self.t_ms:
                events.append(LandmarkFrame(ts=ts, landmarks=self._noisy(self._frame_pts(ts))))
            self._lm_i += 1
        # heart rate
        hr_dt = 1000.0 / self.cfg.hr_hz
        while self._hr_i * hr_dt < until_ms:
            ts = self._hr_i * hr_dt
            if ts >= self.t_ms:
                self.bpm = hr_step(self.bpm, self._load_target(),
                                   hr_dt / 1000.0, self.cfg.hr_tau_s)
                sample = round(self.bpm + self._rng_hr.gauss(0.0, self.cfg.hr_noise_bpm))
                events.append(HRSample(ts=ts, bpm=float(max(30, min(240, sample)))))
            self._hr_i += 1
        # vocal features
        vocal_dt = 1000.0 / self.cfg.vocal_hz
        while self._vocal_i * vocal_dt < until_ms:
            ts = self._vocal_i * vocal_dt
            if ts >= self.t_ms:
                events.append(self._vocal_frame(ts, vocal_dt / 1000.0))
            self._vocal_i += 1
        # pain probabilities
        pain_dt = 1000.0 / self.cfg.pain_hz
        while self._pain_i * pain_dt < until_ms:
            ts = self._pain_i * pain_dt
            if ts >= self.t_ms:
                events.append(self._pain_obs(ts))
            self._pain_i += 1
        self.t_ms = until_ms
        events.sort(key=lambda e: (e.ts, _KIND_RANK[type(e)]))
        return events

    def _vocal_frame(self, ts: float, dt_s: float) -> VocalFrame:
        d = self.directive
        active = d is not None and d.activity in ("reps", "hold", "cardio") and not (
            d.paused if d is not None else False)
        rate = self.cfg.fatigue_growth_per_min / 60.0
        if active:
            self.fatigue_dev = min(
                0.40, self.fatigue_dev + rate * _EXERTION_GROWTH[self.exertion] * dt_s)
        else:
            self.fatigue_dev = max(0.0, self.fatigue_dev - 2.0 * rate * dt_s)
        dev = self.fatigue_dev
        for w in self._windows(ts):
            if w.kind == "fatigue":
                dev = min(0.9, dev + 0.75)
                break
        g = self._rng_vocal.gauss
        pitch = max(0.0, self.BASE_PITCH_HZ * (1.0 - dev) + g(0.0, 2.0))
        loud = self.BASE_LOUD_DB * (1.0 - 0.3 * dev) + g(0.0, 0.8)
        zcr = min(1.0, max(0.0, self.BASE_ZCR + g(0.0, 0.004)))
        return VocalFrame(ts=ts, pitch_hz=pitch, loudness_db=loud, zcr=zcr)

    def _pain_obs(self, ts: float) -> PainObservation:
        level = "Low"
        for w in self._windows(ts):
            if w.kind == "pain":
                level = w.param
                if level == "High":
                    break
        base = _PAIN_PROBS[level]
        g = self._rng_pain.gauss
        raw = [max(0.001, p + g(0.0, 0.02)) for p in base]
        total = sum(raw)
        probs = [p / total for p in raw]
        probs[2] = 1.0 - probs[0] - probs[1]    # close the simplex exactly
        return PainObservation(ts=ts, probs=tuple(probs))


def run_closed_loop(session, sim: Simulator, slice_ms: float = 100.0,
                    steering: Iterable[SteeringCommand] = (),
                    max_sim_s: float = 3600.0,
                    on_slice=None, on_events=None) -> None:
    """Alternate the simulator and the session until the plan completes.

    Pre-scheduled steering commands are applied to the simulator and
    injected into the event batch at their timestamps, so a steered run
    is replayable. `on_slice(outputs, t_ms)` is called after each batch
    when provided (used by the live server to fan out records);
    `on_events(events)` sees each sorted batch before the session does
    (used to record replayable event streams).
    """
    pending = sorted(steering, key=lambda c: c.ts)
    sim.set_directive(session.directive)
    while not session.done and sim.t_ms < max_sim_s * 1000.0:
        t_next = sim.t_ms + slice_ms
        events = sim.advance(t_next)
        while pending and pending[0].ts < t_next:
            cmd = pending.pop(0)
            sim.apply_steering(cmd)
            events.append(cmd)
        events.sort(key=lambda e: (e.ts, _KIND_RANK[type(e)]))
        if on_events is not None:
            on_events(events)
        outputs = session.process_many(events)
        for iv in outputs.interventions:
            sim.observe_intervention(iv)
        sim.set_directive(session.directive)
        if on_slice is not None:
            on_slice(outputs, sim.t_ms)
