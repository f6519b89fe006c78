"""Trigger-rule evaluation, prioritization, and debounce.

Rules are data, not code: each is a conjunction of field comparisons
over the flat snapshot-plus-phase-context document, so the trigger
taxonomy can be edited in config without rebuilds. Evaluation and
debounce are pure transitions for replay determinism.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .core.types import CATEGORY_PRIORITY, InterventionCategory
from .errors import InvariantViolation

_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a is not None and a < b,
    "<=": lambda a, b: a is not None and a <= b,
    ">": lambda a, b: a is not None and a > b,
    ">=": lambda a, b: a is not None and a >= b,
    "in": lambda a, b: a in b,
    "not_in": lambda a, b: a not in b,
    "is_null": lambda a, b: a is None,
    "not_null": lambda a, b: a is not None,
}


@dataclass(frozen=True)
class Condition:
    field: str
    op: str
    value: object = None

    def __post_init__(self):
        if self.op not in _OPS:
            raise InvariantViolation(f"unknown operator {self.op!r}")

    def holds(self, doc: dict) -> bool:
        return _OPS[self.op](doc.get(self.field), self.value)


@dataclass(frozen=True)
class TriggerRule:
    id: str
    category: InterventionCategory
    conditions: Tuple[Condition, ...]
    once_per: str = "event"             # event | set | phase | session
    priority: Optional[int] = None      # default: category priority
    text: str = ""                      # template over the context doc
    ask_backend: bool = False           # phrase via the reasoning backend

    def __post_init__(self):
        object.__setattr__(self, "category", InterventionCategory(self.category))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if self.once_per not in ("event", "set", "phase", "session"):
            raise InvariantViolation(f"unknown scope {self.once_per!r}")
        if self.priority is None:
            object.__setattr__(self, "priority", CATEGORY_PRIORITY[self.category])

    def holds(self, doc: dict) -> bool:
        return all(c.holds(doc) for c in self.conditions)


@dataclass(frozen=True)
class InterventionRequest:
    ts: float
    category: InterventionCategory
    priority: int
    rule_id: str
    text: str
    ask_backend: bool = False
    scope_key: Optional[tuple] = None   # set on emit, not on request


@dataclass
class SchedulerState:
    """Debounce clock plus fired-rule memory per scope."""

    last_emit_ts: Dict[str, float] = field(default_factory=dict)
    last_any_emit_ts: Optional[float] = None
    fired: Dict[str, object] = field(default_factory=dict)
    holding: Dict[str, Optional[str]] = field(default_factory=dict)


_EVENT_SCOPE = ("event",)


def evaluate(snapshot_doc: dict, phase_ctx: dict, rules: List[TriggerRule],
             state: SchedulerState) -> List[InterventionRequest]:
    """All satisfied rules, honoring once_per scoping, ordered by priority.

    event-scoped rules latch on the rising edge of their predicate and
    keep requesting while it stays true, until the request is actually
    emitted; the predicate going false re-arms the latch. set/phase/
    session scoping is only *checked* here; the fired memory is
    committed by `debounce` on actual emission, so a scoped rule
    suppressed by the gap retries on the next evaluation instead of
    losing its one chance.
    """
    doc = dict(snapshot_doc)
    doc.update(phase_ctx)
    requests: List[InterventionRequest] = []
    for rule in rules:
        holds = rule.holds(doc)
        scope_key = None
        if rule.once_per == "event":
            if not holds:
                state.holding[rule.id] = None
                continue
            if state.holding.get(rule.id) == "done":
                continue
            state.holding[rule.id] = "pending"
            scope_key = _EVENT_SCOPE
        else:
            if not holds:
                continue
            scope_key = {
                "set": ("set", doc.get("phase_index"), doc.get("set_index")),
                "phase": ("phase", doc.get("phase_index")),
                "session": ("session",),
            }[rule.once_per]
            if state.fired.get(rule.id) == scope_key:
                continue
        try:
            text = rule.text.format(**doc) if rule.text else ""
        except (KeyError, IndexError):
            text = rule.text
        requests.append(InterventionRequest(
            ts=doc["ts"], category=rule.category, priority=rule.priority,
            rule_id=rule.id, text=text, ask_backend=rule.ask_backend,
            scope_key=scope_key))
    requests.sort(key=lambda r: (r.priority, r.rule_id))
    return requests


def debounce(requests: List[InterventionRequest], state: SchedulerState,
             now: float, gap_s: float = 5.0) -> List[InterventionRequest]:
    """Urgent (priority 0) requests always pass; others only when the
    global inter-emission gap has elapsed. Suppressed requests are
    dropped, not queued."""
    emitted: List[InterventionRequest] = []
    for req in requests:
        if req.priority > 0:
            last = state.last_any_emit_ts
            if last is not None and now - last < gap_s * 1000.0:
                continue
        state.last_any_emit_ts = now
        state.last_emit_ts[req.category.value] = now
        if req.scope_key == _EVENT_SCOPE:
            state.holding[req.rule_id] = "done"
        elif req.scope_key is not None:
            state.fired[req.rule_id] = req.scope_key
        emitted.append(req)
    return emitted


def rep_announcement_policy(ts: float, rep_count: int, target: int) -> Optional[InterventionRequest]:
    """Announce every rep; the final two escalate to milestones."""
    if target < 1:
        raise InvariantViolation("target must be >= 1")
    if rep_count >= target:
        return InterventionRequest(
            ts=ts, category=InterventionCategory.MILESTONE,
            priority=CATEGORY_PRIORITY[InterventionCategory.MILESTONE],
            rule_id="rep_final", text=f"{rep_count}. Set complete, great push.")
    if rep_count == target - 1:
        return InterventionRequest(
            ts=ts, category=InterventionCategory.MILESTONE,
            priority=CATEGORY_PRIORITY[InterventionCategory.MILESTONE],
            rule_id="rep_final", text=f"{rep_count}. Last one coming up.")
    return InterventionRequest(
        ts=ts, category=InterventionCategory.REP_COUNT,
        priority=CATEGORY_PRIORITY[InterventionCategory.REP_COUNT],
        rule_id="rep_count", text=f"{rep_count}.")


def load_rules(doc: list) -> List[TriggerRule]:
    rules = []
    seen = set()
    for r in doc:
        rule = TriggerRule(
            id=r["id"],
            category=InterventionCategory(r["category"]),
            conditions=tuple(Condition(**c) for c in r.get("conditions", [])),
            once_per=r.get("once_per", "event"),
            priority=r.get("priority"),
            text=r.get("text", ""),
            ask_backend=bool(r.get("ask_backend", False)),
        )
        if rule.id in seen:
            raise InvariantViolation(f"duplicate rule id {rule.id!r}")
        seen.add(rule.id)
        rules.append(rule)
    return rules


def load_rules_file(path: str) -> List[TriggerRule]:
    with open(path, "r", encoding="utf-8") as fh:
        return load_rules(json.load(fh))


def _c(field_name: str, op: str, value=None) -> Condition:
    return Condition(field=field_name, op=op, value=value)


DEFAULT_RULES: List[TriggerRule] = [
    TriggerRule(
        id="goal_setting", category=InterventionCategory.GOAL_SETTING,
        conditions=(_c("session_started", "==", True),), once_per="session",
        text="Today: cardio, strength, balance, then flexibility. Goal: {goal}. Let's begin."),
    TriggerRule(
        id="interruption_hr", category=InterventionCategory.INTERRUPTION,
        conditions=(_c("hr_above_safe", "==", True),), once_per="event",
        text="Stop now. Your heart rate is past the safe limit. Breathe slowly."),
    TriggerRule(
        id="interruption_pain", category=InterventionCategory.INTERRUPTION,
        conditions=(_c("pain", "==", "High"),), once_per="event",
        text="Stop the exercise. That pain level is not safe to push through."),
    TriggerRule(
        id="relief_pain", category=InterventionCategory.RELIEF,
        conditions=(_c("pain", "in", ("Medium", "High")),), once_per="event",
        text="I hear you. Ease off, shake it out, and breathe."),
    TriggerRule(
        id="form_correction", category=InterventionCategory.FORM_CORRECTION,
        conditions=(_c("form_error", "not_null"),), once_per="event",
        ask_backend=True, text="Check your form: {form_error}."),
    TriggerRule(
        id="rest_fatigue", category=InterventionCategory.REST_SUGGESTION,
        conditions=(_c("fatigue_detected", "==", True),), once_per="set",
        ask_backend=True, text="You sound worn. Take a breather when this set ends."),
    TriggerRule(
        id="intensity_up", category=InterventionCategory.INTENSITY_ADJUST,
        conditions=(_c("phase_kind", "==", "cardio"), _c("segment", "==", "Steady"),
                    _c("zone_low_persisted", "==", True)), once_per="event",
        ask_backend=True, text="Pick up the pace a touch to reach your zone."),
    TriggerRule(
        id="intensity_down", category=InterventionCategory.INTENSITY_ADJUST,
        conditions=(_c("phase_kind", "==", "cardio"), _c("segment", "==", "Steady"),
                    _c("zone_high_persisted", "==", True)), once_per="event",
        ask_backend=True, text="Ease the pace down a little."),
    TriggerRule(
        id="hold_halfway", category=InterventionCategory.MILESTONE,
        conditions=(_c("phase_kind", "in", ("balance", "flexibility")),
                    _c("phase_progress", ">=", 0.5)), once_per="set",
        text="Halfway through the hold. Stay steady."),
    TriggerRule(
        id="hold_last_tenth", category=InterventionCategory.MILESTONE,
        conditions=(_c("phase_kind", "in", ("balance", "flexibility")),
                    _c("phase_progress", ">=", 0.9)), once_per="set",
        text="Final stretch, almost there."),
    TriggerRule(
        id="cardio_segment", category=InterventionCategory.MILESTONE,
        conditions=(_c("phase_kind", "==", "cardio"), _c("segment_changed", "==", True)),
        once_per="event", text="Moving into the {segment} segment."),
    TriggerRule(
        id="progress_time", category=InterventionCategory.PROGRESS_UPDATE,
        conditions=(_c("progress_due", "==", True),), once_per="event",
        text="Time check: {phase_elapsed_s:.0f} seconds in. Keep it rolling."),
    TriggerRule(
        id="end_motivation", category=InterventionCategory.END_MOTIVATION,
        conditions=(_c("session_complete", "==", True),), once_per="session",
        text="Session complete. Strong work today, be proud of it."),
]
