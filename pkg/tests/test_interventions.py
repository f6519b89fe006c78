"""Trigger rules, event latching, scope memory, and the debounce gap."""
from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from coachloop.core.types import CATEGORY_PRIORITY, InterventionCategory
from coachloop.errors import InvariantViolation
from coachloop.interventions import (
    DEFAULT_RULES,
    Condition,
    InterventionRequest,
    SchedulerState,
    TriggerRule,
    debounce,
    evaluate,
    load_rules,
    rep_announcement_policy,
)

CAT = InterventionCategory


def rule(rid="r", category=CAT.MILESTONE, conditions=(), **kw):
    return TriggerRule(id=rid, category=category, conditions=tuple(conditions), **kw)


def cond(field, op, value=None):
    return Condition(field=field, op=op, value=value)


def request(ts=0.0, category=CAT.MILESTONE, priority=None, rid="r", text="t"):
    pr = CATEGORY_PRIORITY[category] if priority is None else priority
    return InterventionRequest(ts=ts, category=category, priority=pr,
                               rule_id=rid, text=text)


# --- conditions ---------------------------------------------------------------

def test_condition_operators():
    doc = {"a": 3, "s": "x", "n": None}
    assert cond("a", "==", 3).holds(doc)
    assert cond("a", "!=", 4).holds(doc)
    assert cond("a", "<", 4).holds(doc)
    assert cond("a", "<=", 3).holds(doc)
    assert cond("a", ">", 2).holds(doc)
    assert cond("a", ">=", 3).holds(doc)
    assert cond("s", "in", ("x", "y")).holds(doc)
    assert cond("s", "not_in", ("y", "z")).holds(doc)
    assert cond("n", "is_null").holds(doc)
    assert cond("a", "not_null").holds(doc)


def test_ordered_operators_never_raise_on_missing_fields():
    # absent and None-valued fields fail ordered comparisons quietly
    for op in ("<", "<=", ">", ">="):
        assert not cond("missing", op, 1).holds({})
        assert not cond("n", op, 1).holds({"n": None})


def test_unknown_operator_rejected():
    with pytest.raises(InvariantViolation):
        cond("a", "~=", 1)


def test_rule_is_a_conjunction():
    r = rule(conditions=[cond("a", ">", 1), cond("b", "==", "x")])
    assert r.holds({"a": 2, "b": "x"})
    assert not r.holds({"a": 2, "b": "y"})
    assert not r.holds({"a": 0, "b": "x"})


def test_rule_priority_defaults_to_category():
    assert rule(category=CAT.INTERRUPTION).priority == 0
    assert rule(category=CAT.REP_COUNT).priority == 4
    assert rule(category=CAT.REP_COUNT, priority=1).priority == 1


def test_rule_rejects_unknown_scope():
    with pytest.raises(InvariantViolation):
        rule(once_per="minute")


# --- event latch ----------------------------------------------------------------

def flag_rule(rid="latch", **kw):
    return rule(rid=rid, conditions=[cond("flag", "==", True)], **kw)


def step(rules, state, doc):
    return evaluate(doc, {}, rules, state)


def test_event_latch_fires_once_per_rising_edge():
    rules = [flag_rule()]
    state = SchedulerState()
    on = {"ts": 0.0, "flag": True}
    off = {"ts": 0.0, "flag": False}

    reqs = step(rules, state, on)
    assert len(reqs) == 1
    debounce(reqs, state, now=0.0)

    assert step(rules, state, on) == []          # emitted, stays latched
    assert step(rules, state, off) == []         # re-arms
    assert len(step(rules, state, on)) == 1      # next rising edge fires


def test_event_latch_retries_until_actually_emitted():
    rules = [flag_rule()]
    state = SchedulerState()
    state.last_any_emit_ts = 0.0                 # recent emission blocks the gap
    on = {"ts": 1000.0, "flag": True}

    reqs = step(rules, state, on)
    assert debounce(reqs, state, now=1000.0) == []   # suppressed, not committed
    reqs = step(rules, state, on)
    assert len(reqs) == 1                        # still pending, retries
    emitted = debounce(reqs, state, now=6000.0)
    assert len(emitted) == 1
    assert step(rules, state, on) == []          # now latched done


def test_scoped_rule_commits_memory_only_on_emission():
    rules = [flag_rule(once_per="set")]
    state = SchedulerState()
    state.last_any_emit_ts = 0.0
    doc = {"ts": 1000.0, "flag": True, "phase_index": 1, "set_index": 0}

    reqs = step(rules, state, doc)
    assert debounce(reqs, state, now=1000.0) == []
    reqs = step(rules, state, doc)               # not burned by the suppression
    emitted = debounce(reqs, state, now=7000.0)
    assert len(emitted) == 1
    assert step(rules, state, doc) == []         # fired for this set

    doc2 = dict(doc, set_index=1)
    assert len(step(rules, state, doc2)) == 1    # new set, fires again


def test_phase_and_session_scopes():
    state = SchedulerState()
    rules = [flag_rule(rid="per_phase", once_per="phase"),
             flag_rule(rid="per_session", once_per="session")]
    doc = {"ts": 0.0, "flag": True, "phase_index": 0, "set_index": 0}

    reqs = step(rules, state, doc)
    assert [r.rule_id for r in reqs] == ["per_phase", "per_session"]
    # the gap lets one emission through per batch; flush them in turn
    assert [r.rule_id for r in debounce(reqs, state, now=0.0)] == ["per_phase"]
    reqs = step(rules, state, doc)
    assert [r.rule_id for r in reqs] == ["per_session"]
    assert [r.rule_id for r in debounce(reqs, state, now=6000.0)] == ["per_session"]

    assert step(rules, state, dict(doc, set_index=3)) == []
    next_phase = dict(doc, phase_index=1)
    assert [r.rule_id for r in step(rules, state, next_phase)] == ["per_phase"]


def test_requests_ordered_by_priority_then_rule_id():
    state = SchedulerState()
    rules = [
        flag_rule(rid="b_rep", category=CAT.REP_COUNT),
        flag_rule(rid="a_rep", category=CAT.REP_COUNT),
        flag_rule(rid="urgent", category=CAT.INTERRUPTION),
        flag_rule(rid="form", category=CAT.FORM_CORRECTION),
    ]
    reqs = step(rules, state, {"ts": 0.0, "flag": True})
    assert [r.rule_id for r in reqs] == ["urgent", "form", "a_rep", "b_rep"]


def test_text_templates_format_from_context():
    state = SchedulerState()
    r = flag_rule()
    r = rule(rid="tmpl", conditions=[cond("flag", "==", True)],
             text="Rep {rep_count} of {target}.")
    reqs = step([r], state, {"ts": 0.0, "flag": True, "rep_count": 3, "target": 10})
    assert reqs[0].text == "Rep 3 of 10."


def test_text_template_with_missing_key_degrades_to_raw():
    state = SchedulerState()
    r = rule(rid="tmpl", conditions=[cond("flag", "==", True)], text="Goal: {goal}.")
    reqs = step([r], state, {"ts": 0.0, "flag": True})
    assert reqs[0].text == "Goal: {goal}."


def test_phase_context_overlays_snapshot():
    state = SchedulerState()
    r = rule(rid="seg", conditions=[cond("segment", "==", "Steady")])
    reqs = evaluate({"ts": 0.0, "segment": "WarmUp"}, {"segment": "Steady"}, [r], state)
    assert len(reqs) == 1


# --- debounce -------------------------------------------------------------------

def test_gap_suppresses_non_urgent():
    state = SchedulerState()
    assert debounce([request(priority=3)], state, now=0.0)
    assert debounce([request(priority=3)], state, now=4999.0) == []
    assert debounce([request(priority=3)], state, now=5000.0)


def test_urgent_bypasses_gap_and_stamps_clock():
    state = SchedulerState()
    assert debounce([request(priority=3)], state, now=0.0)
    urgent = request(category=CAT.INTERRUPTION, priority=0)
    assert debounce([urgent], state, now=100.0)
    # the urgent emission restarts the gap for everyone else
    assert debounce([request(priority=3)], state, now=5000.0) == []
    assert debounce([request(priority=3)], state, now=5100.0)


def test_same_instant_batch_emits_single_non_urgent():
    state = SchedulerState()
    batch = [request(priority=1, rid="a"), request(priority=3, rid="b")]
    emitted = debounce(batch, state, now=0.0)
    assert [r.rule_id for r in emitted] == ["a"]


@given(st.lists(st.tuples(st.floats(0.0, 20000.0), st.integers(0, 5)),
                min_size=1, max_size=60))
def test_gap_invariant_over_random_request_streams(stream):
    """Any non-urgent emission sits >= gap after the previous emission."""
    state = SchedulerState()
    now = 0.0
    emitted = []
    for dt, priority in stream:
        now += dt
        out = debounce([request(ts=now, priority=priority)], state, now=now)
        emitted.extend((now, r.priority) for r in out)
    for (prev_t, _), (cur_t, cur_p) in zip(emitted, emitted[1:]):
        if cur_p > 0:
            assert cur_t - prev_t >= 5000.0
    # urgent requests are never suppressed
    urgent_in = sum(1 for _, p in stream if p == 0)
    urgent_out = sum(1 for _, p in emitted if p == 0)
    assert urgent_in == urgent_out


# --- rep announcements ------------------------------------------------------------

def test_rep_policy_counts_then_escalates():
    low = rep_announcement_policy(0.0, 3, target=10)
    assert low.category is CAT.REP_COUNT and low.text == "3."
    penultimate = rep_announcement_policy(0.0, 9, target=10)
    assert penultimate.category is CAT.MILESTONE
    assert "Last one" in penultimate.text
    final = rep_announcement_policy(0.0, 10, target=10)
    assert final.category is CAT.MILESTONE
    assert "Set complete" in final.text
    beyond = rep_announcement_policy(0.0, 11, target=10)
    assert beyond.category is CAT.MILESTONE


def test_rep_policy_rejects_degenerate_target():
    with pytest.raises(InvariantViolation):
        rep_announcement_policy(0.0, 1, target=0)


# --- rule loading -------------------------------------------------------------------

def test_load_rules_round_trip():
    doc = [
        {"id": "a", "category": "milestone",
         "conditions": [{"field": "x", "op": ">", "value": 1}],
         "once_per": "phase", "text": "hi"},
        {"id": "b", "category": "interruption"},
    ]
    rules = load_rules(doc)
    assert rules[0].once_per == "phase"
    assert rules[0].holds({"x": 2})
    assert rules[1].priority == 0
    assert rules[1].once_per == "event"


def test_load_rules_rejects_duplicate_ids():
    doc = [{"id": "a", "category": "milestone"},
           {"id": "a", "category": "rep_count"}]
    with pytest.raises(InvariantViolation):
        load_rules(doc)


def test_default_rules_are_well_formed():
    ids = [r.id for r in DEFAULT_RULES]
    assert len(ids) == len(set(ids))
    cats = {r.category for r in DEFAULT_RULES}
    # safety rules ride the urgent priority
    for r in DEFAULT_RULES:
        if r.category is CAT.INTERRUPTION:
            assert r.priority == 0
    assert CAT.GOAL_SETTING in cats and CAT.END_MOTIVATION in cats
