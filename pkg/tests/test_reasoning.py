"""Prompt construction, rest-plan parsing, guardrails, and backends."""
from __future__ import annotations

import http.server
import json
import random
import threading
import time

import pytest

from coachloop.core.phr import validate_phr
from coachloop.core.types import (
    BICEP_CURL,
    ELBOW_PLANK,
    FormErrorKind,
    HRZone,
    Intervention,
    InterventionCategory,
    PainLevel,
    UserStateSnapshot,
)
from coachloop.errors import (
    BackendTimeout,
    InvariantViolation,
    TransportError,
    Unparseable,
)
from coachloop.reasoning import (
    INTRA_PAYLOAD_KEYS,
    BackendResult,
    HTTPBackend,
    MockBackend,
    PromptDoc,
    PromptKind,
    VignetteWriter,
    build_inter_exercise_prompt,
    build_intra_exercise_prompt,
    enforce_word_cap,
    fallback_rest,
    generate,
    parse_rest_plan,
    vignette_record,
)

from conftest import PHR_DOC


@pytest.fixture(scope="module")
def phr():
    return validate_phr(dict(PHR_DOC))


def snapshot(**kw):
    base = dict(ts=1000.0, exercise=BICEP_CURL, rep_count=4,
                form_error=FormErrorKind.LOOSE_UPPER_ARM,
                hr_zone=HRZone.TARGET, current_bpm=132.0,
                fatigue_detected=False, pain=PainLevel.LOW,
                phase_progress=0.4)
    base.update(kw)
    return UserStateSnapshot(**base)


# --- prompt construction -----------------------------------------------------

def test_inter_prompt_carries_exact_data_lines(phr):
    p = build_inter_exercise_prompt(phr, BICEP_CURL, ELBOW_PLANK, 72.0, 99.5)
    assert p.kind is PromptKind.INTER_EXERCISE
    assert "- Just completed: Bicep Curls\n" in p.user_text
    assert "- Next exercise: Elbow Plank\n" in p.user_text
    assert "- Baseline heart rate: 72 bpm\n" in p.user_text
    assert "- Current heart rate: 99.5 bpm\n" in p.user_text
    assert "Max rest: 60 seconds." in p.user_text
    assert "user safety" in p.system_text


def test_inter_prompt_report_subset_is_minimal(phr):
    p = build_inter_exercise_prompt(phr, BICEP_CURL, ELBOW_PLANK, 72.0, 99.5)
    start = p.user_text.find("{")
    subset = json.loads(p.user_text[start:p.user_text.find("}") + 1])
    assert subset == {"fitness_level": "Active", "goal": "endurance"}
    # anthropometrics never leak into this tier
    assert "170" not in p.user_text and "injur" not in p.user_text.lower()


def test_inter_prompt_is_deterministic(phr):
    a = build_inter_exercise_prompt(phr, "Lunges", "Yoga: tree", 70.0, 110.0)
    b = build_inter_exercise_prompt(phr, "Lunges", "Yoga: tree", 70.0, 110.0)
    assert a == b


def test_intra_prompt_embeds_payload_subset():
    p = build_intra_exercise_prompt(snapshot())
    assert p.kind is PromptKind.INTRA_EXERCISE
    assert p.user_text.startswith("Real-time state (JSON):\n")
    payload = json.loads(p.user_text[p.user_text.find("{"):])
    assert tuple(payload) == INTRA_PAYLOAD_KEYS
    assert payload["exercise"] == "Bicep Curls"
    assert payload["form_error"] == "loose_upper_arm"
    # live-state keys outside the subset stay out of the prompt
    assert "current_bpm" not in payload and "pain" not in payload


def test_prompt_requires_safety_persona():
    with pytest.raises(InvariantViolation):
        PromptDoc(system_text="be nice", user_text="x",
                  kind=PromptKind.INTRA_EXERCISE)


# --- rest-plan parsing ---------------------------------------------------------

def test_parse_plain_object():
    plan = parse_rest_plan('{"seconds": 30, "message": "breathe"}')
    assert plan.seconds == 30 and plan.message == "breathe"


def test_parse_object_embedded_in_prose():
    text = 'Sure! Here is my plan: {"seconds": 25, "message": "easy"} enjoy!'
    assert parse_rest_plan(text).seconds == 25


def test_parse_finds_nested_plan():
    text = '{"plan": {"seconds": 20, "message": "ok"}, "note": "x"}'
    assert parse_rest_plan(text).seconds == 20


def test_parse_skips_unusable_objects():
    text = '{"seconds": true, "message": "no"} {"seconds": "40", "message": "yes"}'
    plan = parse_rest_plan(text)
    assert plan.seconds == 40 and plan.message == "yes"


def test_parse_clamps_out_of_band_seconds():
    assert parse_rest_plan('{"seconds": 300, "message": "m"}').seconds == 60
    assert parse_rest_plan('{"seconds": -5, "message": "m"}').seconds == 0


def test_parse_rejects_non_finite_and_missing_fields():
    for text in (
        '{"seconds": NaN, "message": "m"}',
        '{"seconds": Infinity, "message": "m"}',
        '{"seconds": 20}',
        '{"seconds": 20, "message": 7}',
        'no json here',
        '{broken',
    ):
        with pytest.raises(Unparseable):
            parse_rest_plan(text)


def test_parse_rejects_non_text():
    with pytest.raises(Unparseable):
        parse_rest_plan(None)


# --- guardrails ------------------------------------------------------------------

def test_word_cap_truncates_only_over_limit():
    assert enforce_word_cap("short and sweet") == "short and sweet"
    long = " ".join(str(i) for i in range(30))
    capped = enforce_word_cap(long)
    assert capped == " ".join(str(i) for i in range(15))
    with pytest.raises(InvariantViolation):
        enforce_word_cap("x", cap=0)


def test_fallback_rest_scales_with_elevation():
    assert fallback_rest(100.0, 100.0).seconds == 15
    assert fallback_rest(150.0, 100.0).seconds == 40
    assert fallback_rest(300.0, 100.0).seconds == 60
    assert fallback_rest(80.0, 100.0).seconds == 15
    with pytest.raises(InvariantViolation):
        fallback_rest(float("nan"), 100.0)


def test_guarded_parse_chain_survives_10k_adversarial_outputs():
    """The rest-plan path never yields out-of-band output or an exception."""
    rng = random.Random(31337)
    fragments = (
        '{"seconds":', '"message":', '{}', '[]', 'null', 'true', 'NaN',
        'Infinity', '-Infinity', '1e999', '"40"', '0x20', '{"seconds": 999999,',
        '"m"}', '\\u0000', 'é你好', '\n', '   ', '"}', '},',
        '{"a": {"seconds": -3, "message": "deep"}}', '12', '-7', '3.9',
        '"seconds"', 'seconds', '<html>', '`json', "'{'",
    )
    for _ in range(10_000):
        text = " ".join(rng.choice(fragments)
                        for _ in range(rng.randint(0, 12)))
        try:
            plan = parse_rest_plan(text)
        except Unparseable:
            plan = fallback_rest(rng.uniform(40.0, 240.0), 70.0)
        assert 0 <= plan.seconds <= 60
        assert isinstance(plan.message, str)
        cue = enforce_word_cap(text)
        assert len(cue.split()) <= 15


# --- mock backend -----------------------------------------------------------------

def test_mock_backend_is_deterministic(phr):
    p = build_inter_exercise_prompt(phr, BICEP_CURL, ELBOW_PLANK, 70.0, 120.0)
    b = MockBackend()
    assert b.complete(p) == b.complete(p)


def test_mock_rest_answer_tracks_hr_elevation(phr):
    b = MockBackend()
    p = build_inter_exercise_prompt(phr, BICEP_CURL, ELBOW_PLANK, 70.0, 120.0)
    plan = parse_rest_plan(b.complete(p).text)
    assert plan.seconds == 35                     # 10 + 0.5 * 50
    assert "Elbow Plank" in plan.message
    calm = build_inter_exercise_prompt(phr, BICEP_CURL, ELBOW_PLANK, 70.0, 72.0)
    assert parse_rest_plan(b.complete(calm).text).seconds == 11


def test_mock_cue_addresses_the_form_error():
    b = MockBackend()
    p = build_intra_exercise_prompt(snapshot(form_error=FormErrorKind.KNEE_OVER_TOE))
    text = b.complete(p).text
    assert "knee" in text.lower()
    assert len(text.split()) <= 15


def test_mock_latency_is_reported_not_slept():
    b = MockBackend(latency_ms=5000.0)
    p = build_intra_exercise_prompt(snapshot(form_error=None))
    start = time.monotonic()
    result = b.complete(p)
    assert time.monotonic() - start < 1.0
    assert result.latency_ms == 5000.0
    with pytest.raises(InvariantViolation):
        MockBackend(latency_ms=-1.0)


def test_backend_result_rejects_negative_latency():
    with pytest.raises(InvariantViolation):
        BackendResult(text="x", latency_ms=-0.1, backend_id="mock")


# --- retry budget -----------------------------------------------------------------

class FlakyBackend:
    backend_id = "flaky"

    def __init__(self, failures: int):
        self.failures = failures
        self.calls = 0

    def complete(self, prompt, timeout_ms=5000.0):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("nope")
        return BackendResult(text='{"seconds": 20, "message": "ok"}',
                             latency_ms=1.0, backend_id=self.backend_id)


def test_inter_prompts_get_one_retry(phr):
    p = build_inter_exercise_prompt(phr, BICEP_CURL, ELBOW_PLANK, 70.0, 90.0)
    flaky = FlakyBackend(failures=1)
    assert generate(flaky, p).text
    assert flaky.calls == 2
    exhausted = FlakyBackend(failures=2)
    with pytest.raises(TransportError):
        generate(exhausted, p)


def test_intra_prompts_fail_fast():
    p = build_intra_exercise_prompt(snapshot())
    flaky = FlakyBackend(failures=1)
    with pytest.raises(TransportError):
        generate(flaky, p)
    assert flaky.calls == 1


# --- http backend ------------------------------------------------------------------

class _Handler(http.server.BaseHTTPRequestHandler):
    payload = b'{"text": "hello"}'
    delay_s = 0.0
    seen = []

    def do_POST(self):
        n = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(n)
        type(self).seen.append((dict(self.headers), json.loads(body)))
        if type(self).delay_s:
            time.sleep(type(self).delay_s)
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(type(self).payload)

    def log_message(self, *a):
        pass


@pytest.fixture()
def http_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Handler.payload = b'{"text": "hello"}'
    _Handler.delay_s = 0.0
    _Handler.seen = []
    yield f"http://127.0.0.1:{server.server_address[1]}/"
    server.shutdown()


def test_http_backend_round_trip(http_server, phr):
    backend = HTTPBackend(http_server, token="sekrit", max_words=15)
    p = build_intra_exercise_prompt(snapshot())
    result = backend.complete(p)
    assert result.text == "hello"
    assert result.backend_id == "http"
    headers, body = _Handler.seen[0]
    assert headers.get("Authorization") == "Bearer sekrit"
    assert body["max_words"] == 15
    assert body["system"] == p.system_text


def test_http_backend_token_from_environment(http_server, monkeypatch):
    monkeypatch.setenv(HTTPBackend.TOKEN_ENV, "envtoken")
    HTTPBackend(http_server).complete(build_intra_exercise_prompt(snapshot()))
    headers, _ = _Handler.seen[-1]
    assert headers.get("Authorization") == "Bearer envtoken"


def test_http_backend_malformed_response(http_server):
    _Handler.payload = b'not json'
    with pytest.raises(TransportError):
        HTTPBackend(http_server).complete(build_intra_exercise_prompt(snapshot()))
    _Handler.payload = b'{"wrong": 1}'
    with pytest.raises(TransportError):
        HTTPBackend(http_server).complete(build_intra_exercise_prompt(snapshot()))


def test_http_backend_timeout(http_server):
    _Handler.delay_s = 0.5
    with pytest.raises(BackendTimeout):
        HTTPBackend(http_server).complete(
            build_intra_exercise_prompt(snapshot()), timeout_ms=100.0)


def test_http_backend_connection_refused():
    with pytest.raises(TransportError):
        HTTPBackend("http://127.0.0.1:1/").complete(
            build_intra_exercise_prompt(snapshot()), timeout_ms=500.0)
    with pytest.raises(InvariantViolation):
        HTTPBackend("")


# --- vignette export -----------------------------------------------------------------

def test_vignette_writer_appends_ndjson(tmp_path):
    path = tmp_path / "vignettes.ndjson"
    doc = snapshot().to_doc()
    iv = Intervention(ts=1000.0, category=InterventionCategory.FORM_CORRECTION,
                      priority=1, text="Pin that elbow.", source="backend")
    with VignetteWriter(str(path)) as w:
        w.write(doc, iv)
        w.write(doc, iv)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec == vignette_record(doc, iv)
    assert rec["output"] == "Pin that elbow."
    assert rec["input"]["exercise"] == "Bicep Curls"
