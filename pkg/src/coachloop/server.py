"""Live session server.

Runs the closed simulator loop on a wall-clock-paced driver thread and
fans every session log record out to connected websocket clients as
NDJSON lines, verbatim. Clients send steering commands over the same
socket; each is acknowledged (or rejected with a reason), stamped at
the next slice boundary, and applied to the running loop. What-if rest
replies travel to clients only; they never touch the session log.
"""
from __future__ import annotations

import asyncio
import dataclasses
import threading
import time
from contextlib import asynccontextmanager
from pathlib import Path
from typing import List, Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from .config import EngineConfig
from .core.phr import PhysicalHealthReport
from .core.plan import SessionPlan
from .core.types import SteeringCommand
from .core.wire import decode_event, dumps_doc
from .errors import CoachError
from .session import SessionEngine
from .simulator import _KIND_RANK, ExerciserProfile, Simulator

_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>coachloop</title>
<style>
 body { font: 14px/1.45 system-ui, sans-serif; margin: 2rem; max-width: 60rem; }
 #feed { white-space: pre-wrap; border: 1px solid #ccc; padding: .75rem;
         height: 24rem; overflow-y: auto; font-family: monospace; font-size: 12px; }
 button { margin-right: .5rem; }
</style></head>
<body>
<h1>coachloop live session</h1>
<p>Minimal built-in view; the full console is the frontend package.</p>
<div>
 <button onclick="steer({kind:'inject_form_error',error:'knee_over_toe',duration_s:5})">Inject knee-over-toe</button>
 <button onclick="steer({kind:'report_pain',level:'Medium',duration_s:3})">Report pain</button>
 <button onclick="steer({kind:'skip_rest'})">Skip rest</button>
 <button onclick="steer({kind:'what_if_rest'})">What-if rest</button>
 <button onclick="steer({kind:'pause_resume'})">Pause/resume</button>
</div>
<br><div id="feed"></div>
<script>
const feed = document.getElementById('feed');
let ws;
function connect() {
  ws = new WebSocket(`ws://${location.host}/ws`);
  ws.onmessage = (ev) => {
    const doc = JSON.parse(ev.data);
    if (doc.rec === 'event') return;
    feed.textContent += ev.data + "\\n";
    feed.scrollTop = feed.scrollHeight;
  };
  ws.onclose = () => { feed.textContent += "-- connection lost --\\n"; setTimeout(connect, 1000); };
}
function steer(doc) { ws.send(JSON.stringify({t: 'steer', ts: 0, ...doc})); }
connect();
</script>
</body></html>
"""


class LiveLoop:
    """Closed simulator loop on a daemon thread, paced against the wall clock."""

    def __init__(self, engine: SessionEngine, sim: Simulator,
                 slice_ms: float = 100.0, speed: float = 1.0,
                 max_sim_s: float = 3600.0):
        if speed <= 0:
            raise CoachError("speed must be positive")
        self.engine = engine
        self.sim = sim
        self.slice_ms = slice_ms
        self.speed = speed
        self.max_sim_s = max_sim_s
        self._steering: List[SteeringCommand] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._publish = lambda line: None
        self._hr_announced = False

    def hr_context(self) -> Optional[dict]:
        """HR display context, known once the baseline window closes."""
        eng = self.engine
        if eng.hr_target is None:
            return None
        return {"rec": "hr_context", "ts": self.sim.t_ms,
                "baseline_bpm": eng.hr_baseline, "target_bpm": eng.hr_target,
                "band_bpm": eng.zone_cfg.target_band_bpm,
                "safe_max_bpm": eng.safe_max}

    def on_publish(self, fn) -> None:
        self._publish = fn

    def submit_steering(self, cmd: SteeringCommand) -> None:
        with self._lock:
            self._steering.append(cmd)

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, name="coachloop-driver",
                                        daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _run(self) -> None:
        engine, sim = self.engine, self.sim
        sim.set_directive(engine.directive)
        wall0 = time.monotonic()
        sim0 = sim.t_ms
        while not engine.done and not self._stop.is_set():
            if sim.t_ms >= self.max_sim_s * 1000.0:
                engine.finalize_stream()
                break
            slice_start = sim.t_ms
            with self._lock:
                pending, self._steering = self._steering, []
            events = sim.advance(sim.t_ms + self.slice_ms)
            for cmd in pending:
                cmd = dataclasses.replace(cmd, ts=slice_start)
                sim.apply_steering(cmd)
                events.append(cmd)
            events.sort(key=lambda e: (e.ts, _KIND_RANK[type(e)]))
            out = engine.process_many(events)
            for iv in out.interventions:
                sim.observe_intervention(iv)
            sim.set_directive(engine.directive)
            for record in out.records:
                self._publish(dumps_doc(record))
            if not self._hr_announced:
                ctx = self.hr_context()
                if ctx is not None:
                    self._hr_announced = True
                    self._publish(dumps_doc(ctx))
            for _, plan in out.what_if:
                self._publish(dumps_doc({
                    "rec": "what_if_reply", "ts": sim.t_ms,
                    "seconds": plan.seconds, "message": plan.message}))
            lag = wall0 + (sim.t_ms - sim0) / 1000.0 / self.speed - time.monotonic()
            if lag > 0:
                time.sleep(lag)
        if engine.done:
            self._publish(dumps_doc({"rec": "serve_done", "ts": sim.t_ms}))


def create_app(loop: LiveLoop, static_dir: Optional[str] = None) -> FastAPI:
    clients: set = set()
    aio_loop: dict = {}

    @asynccontextmanager
    async def lifespan(app):
        aio_loop["loop"] = asyncio.get_running_loop()
        loop.start()
        yield
        loop.stop()

    app = FastAPI(title="coachloop", docs_url=None, redoc_url=None,
                  lifespan=lifespan)

    def publish(line: str) -> None:
        run_loop = aio_loop.get("loop")
        if run_loop is None:
            return
        for q in tuple(clients):
            run_loop.call_soon_threadsafe(q.put_nowait, line)

    loop.on_publish(publish)

    index_html = _FALLBACK_PAGE
    if static_dir:
        page = Path(static_dir) / "index.html"
        if page.is_file():
            index_html = page.read_text(encoding="utf-8")

    @app.get("/health")
    async def health():
        return {"state": loop.engine.state, "done": loop.engine.done,
                "sim_ms": loop.sim.t_ms, "clients": len(clients)}

    @app.get("/")
    async def index():
        return HTMLResponse(index_html)

    @app.websocket("/ws")
    async def ws(socket: WebSocket):
        await socket.accept()
        queue: asyncio.Queue = asyncio.Queue()
        clients.add(queue)
        await socket.send_text(dumps_doc({
            "rec": "hello", "speed": loop.speed,
            "records": len(loop.engine.log.lines), "sim_ms": loop.sim.t_ms}))
        # late joiners missed the broadcast; duplicates are harmless
        ctx = loop.hr_context()
        if ctx is not None:
            await socket.send_text(dumps_doc(ctx))

        async def pump_out():
            while True:
                await socket.send_text(await queue.get())

        async def pump_in():
            while True:
                text = await socket.receive_text()
                try:
                    cmd = decode_event(text)
                    if not isinstance(cmd, SteeringCommand):
                        raise CoachError("only steering commands are accepted")
                except (CoachError, ValueError) as err:
                    await socket.send_text(dumps_doc(
                        {"rec": "rejected", "reason": str(err)}))
                    continue
                loop.submit_steering(cmd)
                await socket.send_text(dumps_doc(
                    {"rec": "ack", "kind": cmd.kind.value, "sim_ms": loop.sim.t_ms}))

        out_task = asyncio.create_task(pump_out())
        try:
            await pump_in()
        except WebSocketDisconnect:
            pass
        finally:
            out_task.cancel()
            clients.discard(queue)

    # console asset files; registered last so /, /health, and /ws win
    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir), name="static")

    return app


def serve(phr: PhysicalHealthReport, plan: SessionPlan, config: EngineConfig,
          backend, port: int = 8787, host: str = "127.0.0.1",
          speed: float = 1.0, static_dir: Optional[str] = None,
          log_path: Optional[str] = None,
          vignette_path: Optional[str] = None,
          resting_bpm: float = 65.0, scenario=()) -> None:
    import uvicorn

    engine = SessionEngine(phr, plan, config, backend, log_path=log_path,
                           vignette_path=vignette_path)
    sim = Simulator(ExerciserProfile(age=phr.age, resting_bpm=resting_bpm),
                    config.sim, scenario)
    loop = LiveLoop(engine, sim, speed=speed)
    app = create_app(loop, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
