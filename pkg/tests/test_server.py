"""Live server: driver thread pacing, websocket fan-out, steering intake."""
from __future__ import annotations

import json
import time

import pytest
from fastapi.testclient import TestClient

from coachloop.core.plan import default_plan
from coachloop.core.types import SteeringCommand, SteeringKind
from coachloop.errors import CoachError
from coachloop.reasoning import MockBackend
from coachloop.server import LiveLoop, create_app
from coachloop.session import SessionEngine
from coachloop.simulator import ExerciserProfile, Simulator


def make_loop(phr, cfg, speed=1.0, max_sim_s=3600.0):
    engine = SessionEngine(phr, default_plan(cardio_s=60.0), cfg, MockBackend())
    sim = Simulator(ExerciserProfile(age=phr.age, resting_bpm=65.0), cfg.sim)
    return LiveLoop(engine, sim, speed=speed, max_sim_s=max_sim_s)


def wait_done(loop, timeout_s=60.0):
    deadline = time.monotonic() + timeout_s
    while not loop.engine.done:
        if time.monotonic() > deadline:
            raise AssertionError("live loop never finished")
        time.sleep(0.05)


def read_until(ws, pred, limit=5000):
    for _ in range(limit):
        doc = json.loads(ws.receive_text())
        if pred(doc):
            return doc
    raise AssertionError("expected message never arrived")


# ---------------------------------------------------------------------------
# driver thread, no HTTP


def test_live_loop_rejects_bad_speed(phr, desk_cfg):
    for speed in (0.0, -1.0):
        with pytest.raises(CoachError):
            make_loop(phr, desk_cfg, speed=speed)


def test_live_loop_full_run_publishes_log_verbatim(phr, desk_cfg):
    loop = make_loop(phr, desk_cfg, speed=1e6)
    published = []
    loop.on_publish(published.append)
    loop.start()
    time.sleep(0.2)
    # client timestamps are meaningless; the loop re-stamps at the slice edge
    loop.submit_steering(SteeringCommand(ts=0.0, kind=SteeringKind.WHAT_IF_REST))
    wait_done(loop)
    loop.stop()

    replies = [l for l in published if json.loads(l).get("rec") == "what_if_reply"]
    assert len(replies) == 1
    reply = json.loads(replies[0])
    assert 0 <= reply["seconds"] <= 60 and reply["message"]
    assert not any('"rec":"what_if_reply"' in line
                   for line in loop.engine.log.lines)

    contexts = [l for l in published if json.loads(l).get("rec") == "hr_context"]
    assert len(contexts) == 1                  # announced once, when known
    ctx = json.loads(contexts[0])
    assert ctx["baseline_bpm"] == loop.engine.hr_baseline
    assert ctx["target_bpm"] == loop.engine.hr_target
    assert ctx["safe_max_bpm"] == loop.engine.safe_max
    assert ctx["band_bpm"] > 0
    assert not any('"rec":"hr_context"' in line
                   for line in loop.engine.log.lines)

    stream = [l for l in published if l not in replies and l not in contexts]
    assert json.loads(stream[-1])["rec"] == "serve_done"
    # everything after the header reaches subscribers byte for byte
    assert stream[:-1] == loop.engine.log.lines[1:]
    kinds = {json.loads(l).get("rec") for l in stream}
    assert {"event", "snapshot", "intervention", "rest", "phase",
            "checkpoint", "end", "serve_done"} <= kinds


def test_live_loop_sim_budget_cutoff(phr, desk_cfg):
    loop = make_loop(phr, desk_cfg, speed=1e6, max_sim_s=35.0)
    published = []
    loop.on_publish(published.append)
    loop.start()
    wait_done(loop, timeout_s=30.0)
    loop.stop()
    end = json.loads(loop.engine.log.lines[-1])
    assert end["rec"] == "end"
    assert end["partial"] is True and end["reason"] == "stream_ended"
    assert json.loads(published[-1])["rec"] == "serve_done"


# ---------------------------------------------------------------------------
# HTTP and websocket surface


def test_health_and_index_pages(phr, desk_cfg, tmp_path):
    loop = make_loop(phr, desk_cfg)
    app = create_app(loop)
    with TestClient(app) as client:
        health = client.get("/health").json()
        assert health["state"] == "baseline"
        assert health["done"] is False
        assert health["clients"] == 0
        page = client.get("/")
        assert page.status_code == 200
        assert "coachloop" in page.text

    custom = tmp_path / "index.html"
    custom.write_text("<h1>console build</h1>", encoding="utf-8")
    (tmp_path / "main.js").write_text("export const ok = 1;", encoding="utf-8")
    loop2 = make_loop(phr, desk_cfg)
    app2 = create_app(loop2, static_dir=str(tmp_path))
    with TestClient(app2) as client:
        assert client.get("/").text == "<h1>console build</h1>"
        # sibling assets of the console build are served too
        assert client.get("/main.js").text == "export const ok = 1;"
        assert client.get("/health").status_code == 200


def test_late_joiner_gets_hr_context_after_hello(phr, desk_cfg):
    loop = make_loop(phr, desk_cfg, speed=1e6)
    app = create_app(loop)
    with TestClient(app) as client:
        wait_done(loop)
        with client.websocket_connect("/ws") as ws:
            hello = json.loads(ws.receive_text())
            assert hello["rec"] == "hello"
            ctx = json.loads(ws.receive_text())
            assert ctx["rec"] == "hr_context"
            assert ctx["target_bpm"] == loop.engine.hr_target
            assert ctx["safe_max_bpm"] == loop.engine.safe_max


def test_websocket_hello_ack_reject_and_what_if(phr, desk_cfg):
    loop = make_loop(phr, desk_cfg)
    app = create_app(loop)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            hello = json.loads(ws.receive_text())
            assert hello["rec"] == "hello"
            assert hello["speed"] == 1.0
            assert hello["records"] >= 1        # header is already logged
            assert hello["sim_ms"] >= 0.0

            ws.send_text("definitely not json")
            rejected = read_until(ws, lambda d: d.get("rec") == "rejected")
            assert rejected["reason"]

            ws.send_text(json.dumps({"t": "hr", "ts": 0, "bpm": 70}))
            rejected = read_until(ws, lambda d: d.get("rec") == "rejected")
            assert "steering" in rejected["reason"]

            time.sleep(0.3)     # let sim time move past the client's stale ts
            ws.send_text(json.dumps({"t": "steer", "ts": 0,
                                     "kind": "what_if_rest"}))
            ack = read_until(ws, lambda d: d.get("rec") == "ack")
            assert ack["kind"] == "what_if_rest"

            reply = read_until(ws, lambda d: d.get("rec") == "what_if_reply")
            # baselines are still settling this early in the session
            assert reply["seconds"] == desk_cfg.rest_floor_s
            assert "settling" in reply["message"]
    assert not any('"rec":"what_if_reply"' in line
                   for line in loop.engine.log.lines)


def test_second_connection_sees_the_gap(phr, desk_cfg):
    loop = make_loop(phr, desk_cfg, speed=50.0)
    app = create_app(loop)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            first = json.loads(ws.receive_text())
        time.sleep(0.5)
        with client.websocket_connect("/ws") as ws:
            second = json.loads(ws.receive_text())
            # a reconnecting console uses these to mark missed records
            assert second["records"] > first["records"]
            assert second["sim_ms"] > first["sim_ms"]
            doc = json.loads(ws.receive_text())
            assert "rec" in doc
