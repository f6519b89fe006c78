"""Prompt construction, backend calls, and output guardrails.

Two prompt tiers: a between-exercises planning prompt that asks for a
structured rest prescription, and a during-exercise prompt that asks
for one short spoken cue. Every backend output passes through
validation (JSON extraction + clamping for rest plans, a hard word cap
for cues) so a misbehaving backend can never produce an unsafe or
unbounded instruction. Deterministic fallbacks keep the session moving
when the backend fails.
"""
from __future__ import annotations

import json
import math
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from .core.phr import GoalKind, PhysicalHealthReport
from .core.types import Exercise, Intervention, RestPlan, UserStateSnapshot
from .errors import BackendTimeout, InvariantViolation, TransportError, Unparseable

# Persona plus behavioral constraints shared by both prompt tiers.
_GUARDRAIL_TEXT = (
    "You are a cautious and certified fitness professional whose primary "
    "goal is user safety.\n"
    "- Base every recommendation strictly on the real-time data provided.\n"
    "- Prefer stable, conservative adjustments such as rest or lower "
    "intensity whenever heart rate is high or fatigue is present.\n"
    "- Never give medical advice or diagnose conditions.\n"
    "- Frame all feedback in encouraging, non-judgmental language."
)

_INTER_TASK = (
    "You are a personalized AI fitness coach. "
    "Determine an appropriate rest period."
)

_INTRA_TASK = (
    "You are a concise fitness coach. Based on the user's real-time state, "
    "provide a short, direct intervention (max 15 words)."
)

INTRA_PAYLOAD_KEYS = ("exercise", "rep_count", "form_error", "hr_zone",
                      "fatigue_detected")


class PromptKind(str, Enum):
    INTER_EXERCISE = "inter_exercise"
    INTRA_EXERCISE = "intra_exercise"


@dataclass(frozen=True)
class PromptDoc:
    system_text: str
    user_text: str
    kind: PromptKind

    def __post_init__(self):
        if "user safety" not in self.system_text:
            raise InvariantViolation("system text must carry the safety persona")


@dataclass(frozen=True)
class BackendResult:
    text: str
    latency_ms: float
    backend_id: str

    def __post_init__(self):
        if self.latency_ms < 0:
            raise InvariantViolation("latency must be >= 0")


def _fmt_bpm(value: float) -> str:
    v = float(value)
    return str(int(v)) if v.is_integer() else f"{v:.1f}"


def _label(ex: Union[Exercise, str]) -> str:
    return ex.label if isinstance(ex, Exercise) else str(ex)


def build_inter_exercise_prompt(phr: PhysicalHealthReport,
                                completed: Union[Exercise, str],
                                nxt: Union[Exercise, str],
                                baseline_bpm: float,
                                current_bpm: float) -> PromptDoc:
    """Planning prompt for the rest window between two exercises.

    The data payload carries exactly: what was completed, what comes
    next, baseline and current heart rate, and the fitness_level/goal
    subset of the health report. Other report fields (injuries,
    anthropometrics) are deliberately withheld from this tier.
    """
    goal = phr.goal.text if phr.goal.kind is GoalKind.CUSTOM else phr.goal.kind.value
    phr_subset = json.dumps(
        {"fitness_level": phr.fitness_category.value, "goal": goal})
    user_text = (
        "Current data:\n"
        f"- Just completed: {_label(completed)}\n"
        f"- Next exercise: {_label(nxt)}\n"
        f"- Baseline heart rate: {_fmt_bpm(baseline_bpm)} bpm\n"
        f"- Current heart rate: {_fmt_bpm(current_bpm)} bpm\n"
        "- Physical Health Report:\n"
        f"{phr_subset}\n"
        "Constraints:\n"
        "- Max rest: 60 seconds.\n"
        "- Adjust based on HR elevation and intensity transition.\n"
        '- Output JSON with "seconds" and an encouraging "message".'
    )
    return PromptDoc(
        system_text=_GUARDRAIL_TEXT + "\n\n" + _INTER_TASK,
        user_text=user_text,
        kind=PromptKind.INTER_EXERCISE,
    )


def build_intra_exercise_prompt(snapshot: UserStateSnapshot) -> PromptDoc:
    """Low-latency cue prompt; embeds the live-state subset verbatim."""
    doc = snapshot.to_doc()
    payload = {k: doc[k] for k in INTRA_PAYLOAD_KEYS}
    user_text = "Real-time state (JSON):\n" + json.dumps(payload, indent=2)
    return PromptDoc(
        system_text=_GUARDRAIL_TEXT + "\n\n" + _INTRA_TASK,
        user_text=user_text,
        kind=PromptKind.INTRA_EXERCISE,
    )


def _coerce_seconds(value) -> Optional[int]:
    # bool is an int subclass; never treat true/false as a duration
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return int(value) if math.isfinite(value) else None
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            return None
    return None


def parse_rest_plan(text: str) -> RestPlan:
    """Extract the first JSON object carrying a usable rest prescription.

    Scans left to right for '{' and attempts a decode at each position,
    so a plan embedded in chatty prose or nested inside a larger object
    is still found. Seconds outside [0, 60] are clamped, not rejected.
    """
    if not isinstance(text, str):
        raise Unparseable("backend output is not text")
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(text, idx)
        except ValueError:
            obj = None
        if isinstance(obj, dict):
            secs = _coerce_seconds(obj.get("seconds"))
            msg = obj.get("message")
            if secs is not None and isinstance(msg, str):
                return RestPlan(seconds=secs, message=msg)
        idx = text.find("{", idx + 1)
    raise Unparseable("no rest-plan object in backend output")


def enforce_word_cap(text: str, cap: int = 15) -> str:
    """Hard guardrail: at most `cap` whitespace-delimited words."""
    if cap < 1:
        raise InvariantViolation("word cap must be >= 1")
    words = text.split()
    if len(words) <= cap:
        return text
    return " ".join(words[:cap])


def fallback_rest(current_bpm: float, baseline_bpm: float) -> RestPlan:
    """Deterministic stand-in when the backend yields nothing usable.

    Scales rest with heart-rate elevation: 15 s floor plus half a
    second per bpm above baseline, capped at 60 s.
    """
    if not (math.isfinite(current_bpm) and math.isfinite(baseline_bpm)):
        raise InvariantViolation("heart rates must be finite")
    secs = int(round(15.0 + (current_bpm - baseline_bpm) / 2.0))
    return RestPlan(
        seconds=max(15, min(60, secs)),
        message="Good effort. Breathe easy, we go again shortly.",
    )


# --- backends ---

class MockBackend:
    """Offline deterministic backend.

    Answers from template tables keyed by the prompt payload so full
    closed-loop runs are reproducible without network or model access.
    The optional latency is reported, never slept.
    """

    backend_id = "mock"

    _FORM_CUES = {
        "loose_upper_arm": "Keep your upper arm pinned to your side.",
        "knee_over_toe": "Shift back, keep that front knee behind your toes.",
        "weak_peak_contraction": "Curl all the way up, squeeze at the top.",
        "high_back": "Lower your hips, keep a straight line.",
        "low_back": "Lift your hips, brace your core.",
        "misaligned_pose": "Reset your pose, find your alignment and breathe.",
    }

    def __init__(self, latency_ms: float = 0.0):
        if latency_ms < 0:
            raise InvariantViolation("latency must be >= 0")
        self.latency_ms = float(latency_ms)

    def complete(self, prompt: PromptDoc, timeout_ms: float = 5000.0) -> BackendResult:
        if prompt.kind is PromptKind.INTER_EXERCISE:
            text = self._rest_text(prompt.user_text)
        else:
            text = self._cue_text(prompt.user_text)
        return BackendResult(text=text, latency_ms=self.latency_ms,
                             backend_id=self.backend_id)

    def _rest_text(self, user_text: str) -> str:
        base = _scan_bpm(user_text, "Baseline heart rate")
        cur = _scan_bpm(user_text, "Current heart rate")
        m = re.search(r"- Next exercise: (.+)", user_text)
        nxt = m.group(1).strip() if m else "the next exercise"
        secs = int(round(10.0 + 0.5 * (cur - base)))
        secs = max(10, min(60, secs))
        msg = f"Nice work. Catch your breath, then we move into {nxt}."
        return json.dumps({"seconds": secs, "message": msg})

    def _cue_text(self, user_text: str) -> str:
        idx = user_text.find("{")
        state = json.loads(user_text[idx:]) if idx != -1 else {}
        err = state.get("form_error")
        if err:
            return self._FORM_CUES.get(err, "Reset your form on the next rep.")
        if state.get("fatigue_detected"):
            return "You sound tired. Slow down, rest is strength too."
        zone = state.get("hr_zone")
        if zone == "Above":
            return "Ease off the pace, bring that heart rate down."
        if zone == "Below":
            return "You have more in the tank, pick it up slightly."
        return "Looking strong, keep that rhythm going."


def _scan_bpm(text: str, label: str) -> float:
    m = re.search(rf"- {re.escape(label)}: ([0-9.]+) bpm", text)
    return float(m.group(1)) if m else 0.0


class HTTPBackend:
    """Single-endpoint JSON backend.

    POSTs {"system", "user", "max_words"?} and expects {"text": ...}.
    Auth token, when present in the environment, rides in the
    Authorization header.
    """

    backend_id = "http"
    TOKEN_ENV = "COACHLOOP_BACKEND_TOKEN"

    def __init__(self, url: str, token: Optional[str] = None, max_words: Optional[int] = None):
        if not url:
            raise InvariantViolation("backend url must be non-empty")
        self.url = url
        self.token = token
        self.max_words = max_words

    def complete(self, prompt: PromptDoc, timeout_ms: float = 5000.0) -> BackendResult:
        body = {"system": prompt.system_text, "user": prompt.user_text}
        if self.max_words is not None and prompt.kind is PromptKind.INTRA_EXERCISE:
            body["max_words"] = self.max_words
        req = urllib.request.Request(
            self.url, data=json.dumps(body).encode("utf-8"),
            headers={"Content-Type": "application/json"}, method="POST")
        token = self.token
        if token is None:
            import os
            token = os.environ.get(self.TOKEN_ENV)
        if token:
            req.add_header("Authorization", f"Bearer {token}")
        start = time.monotonic()
        try:
            with urllib.request.urlopen(req, timeout=timeout_ms / 1000.0) as resp:
                raw = resp.read().decode("utf-8")
        except TimeoutError as exc:
            raise BackendTimeout(f"backend timed out after {timeout_ms} ms") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, TimeoutError):
                raise BackendTimeout(f"backend timed out after {timeout_ms} ms") from exc
            raise TransportError(str(exc)) from exc
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        latency_ms = (time.monotonic() - start) * 1000.0
        try:
            doc = json.loads(raw)
            text = doc["text"]
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError("malformed backend response") from exc
        if not isinstance(text, str):
            raise TransportError("backend response text is not a string")
        return BackendResult(text=text, latency_ms=latency_ms,
                             backend_id=self.backend_id)


def generate(backend, prompt: PromptDoc, timeout_ms: float = 5000.0,
             retries: Optional[int] = None) -> BackendResult:
    """Call the backend with a bounded retry budget.

    Between-exercise prompts get one retry (a rest window tolerates the
    extra round trip); during-exercise prompts get none, since a stale
    cue is worse than silence. Exhausted budgets re-raise for the
    caller's fallback path.
    """
    if retries is None:
        retries = 1 if prompt.kind is PromptKind.INTER_EXERCISE else 0
    attempts = retries + 1
    last: Optional[Exception] = None
    for _ in range(attempts):
        try:
            return backend.complete(prompt, timeout_ms=timeout_ms)
        except (BackendTimeout, TransportError) as exc:
            last = exc
    assert last is not None
    raise last


# --- vignette export ---

def vignette_record(snapshot_doc: dict, intervention: Intervention) -> dict:
    return {"input": snapshot_doc, "output": intervention.text,
            "ts": intervention.ts}


class VignetteWriter:
    """Appends one NDJSON line per backend-phrased intervention."""

    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "a", encoding="utf-8")

    def write(self, snapshot_doc: dict, intervention: Intervention) -> None:
        line = json.dumps(vignette_record(snapshot_doc, intervention),
                          separators=(",", ":"))
        self._fh.write(line + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
