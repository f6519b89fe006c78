"""Command line entry points.

    run    drive a full session, closed-loop (simulated) or from traces
    serve  live session with a websocket console stream
    eval   rep-count and form-detection metrics on annotated corpora
    bench  stage-latency percentile report
    corpus materialize the bundled annotated corpora as NDJSON files
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import List, Optional

from . import evalbench
from .config import EngineConfig, desk_scale
from .core.phr import PhysicalHealthReport, load_phr, validate_phr
from .core.plan import SessionPlan, default_plan, load_plan
from .core.types import SteeringCommand
from .core.wire import decode_event, encode_event
from .errors import BaselineUnavailable, CoachError
from .reasoning import HTTPBackend, MockBackend
from .session import SessionEngine
from .simulator import ExerciserProfile, Simulator, run_closed_loop

DEFAULT_PHR_DOC = {
    "age": 30, "sex": "female", "height_cm": 170.0, "weight_kg": 65.0,
    "met_minutes_per_week": 900.0, "fitness_category": "Active",
    "preferred_intensity": "Moderate", "goal": "endurance",
}


def _phr(args) -> PhysicalHealthReport:
    if args.phr:
        return load_phr(args.phr)
    return validate_phr(dict(DEFAULT_PHR_DOC))


def _plan(args) -> SessionPlan:
    if args.plan:
        return load_plan(args.plan)
    return default_plan(cardio_s=args.cardio_s)


def _config(args) -> EngineConfig:
    cfg = EngineConfig.load(args.config) if args.config else EngineConfig()
    if args.desk_scale:
        cfg = desk_scale(cfg)
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, sim=dataclasses.replace(cfg.sim, seed=args.seed))
    return cfg


def _backend(args):
    if args.backend == "http":
        if not args.backend_url:
            raise CoachError("--backend http requires --backend-url")
        return HTTPBackend(args.backend_url)
    return MockBackend()


def _read_steering(path: str) -> List[SteeringCommand]:
    cmds = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cmd = decode_event(line)
            if not isinstance(cmd, SteeringCommand):
                raise CoachError(f"not a steering command: {line[:80]}")
            cmds.append(cmd)
    return cmds


def _iter_trace_events(paths):
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                if doc.get("t") == "meta":    # corpus annotation header
                    continue
                yield decode_event(line)


def _summarize(engine: SessionEngine, log_path: Optional[str]) -> None:
    records = engine.log.records
    ivs = [r for r in records if r.get("rec") == "intervention"]
    end = next((r for r in records if r.get("rec") == "end"), None)
    status = "complete" if end and not end.get("partial") else "partial"
    last_ts = records[-1].get("ts", 0.0) if len(records) > 1 else 0.0
    print(f"session {status}: {last_ts / 1000.0:.1f} s simulated, "
          f"{len(records)} records, {len(ivs)} interventions")
    if log_path:
        print(f"log written to {log_path}")


def cmd_run(args) -> int:
    phr = _phr(args)
    plan = _plan(args)
    cfg = _config(args)
    engine = SessionEngine(phr, plan, cfg, _backend(args), log_path=args.log,
                           vignette_path=args.vignettes)
    if args.trace:
        if args.steer or args.record:
            raise CoachError("--steer/--record apply to closed-loop runs only")
        for event in _iter_trace_events(args.trace):
            engine.process(event)
            if engine.done:
                break
        if not engine.done:
            engine.finalize_stream()
    else:
        steering = _read_steering(args.steer) if args.steer else ()
        sim = Simulator(ExerciserProfile(age=phr.age,
                                         resting_bpm=args.resting_bpm),
                        cfg.sim)
        sink = open(args.record, "w", encoding="utf-8") if args.record else None
        try:
            tap = None
            if sink is not None:
                def tap(events):
                    for e in events:
                        sink.write(encode_event(e) + "\n")
            run_closed_loop(engine, sim, steering=steering,
                            max_sim_s=args.max_sim_s, on_events=tap)
            if not engine.done:
                engine.finalize_stream()
        finally:
            if sink is not None:
                sink.close()
    engine.close()
    _summarize(engine, args.log)
    return 0


def cmd_serve(args) -> int:
    from . import server

    static_dir = args.static
    if static_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static_dir = str(bundled) if bundled.is_dir() else None
    server.serve(_phr(args), _plan(args), _config(args), _backend(args),
                 port=args.port, host=args.host, speed=args.speed,
                 static_dir=static_dir, log_path=args.log,
                 vignette_path=args.vignettes, resting_bpm=args.resting_bpm)
    return 0


def cmd_eval(args) -> int:
    cfg = EngineConfig.load(args.config) if args.config else EngineConfig()
    if args.corpus:
        traces = [evalbench.load_trace(str(p))
                  for p in sorted(Path(args.corpus).glob("*.ndjson"))]
        if not traces:
            raise CoachError(f"no .ndjson traces under {args.corpus}")
        rep_traces = [t for t in traces if t.rep_boundaries]
        form_traces = [t for t in traces if t.error_spans]
    else:
        rep_traces = evalbench.build_rep_corpus()
        form_traces = evalbench.build_form_corpus()
    if rep_traces:
        rows = evalbench.eval_reps(rep_traces, cfg)
        print("Rep counting")
        print(evalbench.rep_table(rows))
        if args.csv:
            evalbench.write_csv(str(Path(args.csv) / "reps.csv"),
                                list(rows[0].keys()),
                                [list(r.values()) for r in rows])
    if form_traces:
        rows = evalbench.eval_form(form_traces, cfg)
        print("Form detection (frame level)")
        print(evalbench.form_table(rows))
        if args.csv:
            evalbench.write_csv(str(Path(args.csv) / "form.csv"),
                                list(rows[0].keys()),
                                [list(r.values()) for r in rows])
    return 0


def cmd_bench(args) -> int:
    rows = evalbench.latency_report(evalbench.bench(events=args.events,
                                                    seed=args.seed))
    print("Stage latency (ms)")
    print(evalbench.latency_table(rows))
    if args.csv:
        evalbench.write_csv(args.csv, list(rows[0].keys()),
                            [list(r.values()) for r in rows])
    return 0


def cmd_corpus(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    if args.kind in ("reps", "both"):
        for i, trace in enumerate(evalbench.build_rep_corpus()):
            evalbench.save_trace(
                str(out / f"reps_{trace.exercise.value}_{i:03d}.ndjson"), trace)
            written += 1
    if args.kind in ("form", "both"):
        for i, trace in enumerate(evalbench.build_form_corpus()):
            evalbench.save_trace(
                str(out / f"form_{trace.exercise.value}_{i:03d}.ndjson"), trace)
            written += 1
    print(f"{written} traces written to {out}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--plan", help="session plan JSON file")
    p.add_argument("--phr", help="health report JSON file")
    p.add_argument("--config", help="engine config JSON file")
    p.add_argument("--backend", choices=("mock", "http"), default="mock")
    p.add_argument("--backend-url", help="coaching backend endpoint for --backend http")
    p.add_argument("--log", help="session log output (NDJSON)")
    p.add_argument("--vignettes", help="fine-tuning vignette output (NDJSON)")
    p.add_argument("--desk-scale", action="store_true",
                   help="desk-scale pacing for short cardio phases")
    p.add_argument("--cardio-s", type=float, default=600.0,
                   help="cardio duration for the built-in plan (ignored with --plan)")
    p.add_argument("--seed", type=int, help="simulator PRNG seed")
    p.add_argument("--resting-bpm", type=float, default=65.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coachloop",
                                     description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="drive a full session and write its log")
    _add_common(p)
    p.add_argument("--trace", nargs="+",
                   help="replay recorded event streams instead of simulating")
    p.add_argument("--steer", help="steering script (NDJSON) for closed-loop runs")
    p.add_argument("--record", help="record the simulated event stream (NDJSON)")
    p.add_argument("--max-sim-s", type=float, default=3600.0)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("serve", help="live session over HTTP + websocket")
    _add_common(p)
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--speed", type=float, default=1.0,
                   help="simulation speed multiplier")
    p.add_argument("--static", help="directory with a console build to serve")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("eval", help="rep and form metrics on annotated corpora")
    p.add_argument("--corpus", help="directory of annotated traces (default: bundled)")
    p.add_argument("--config", help="engine config JSON file")
    p.add_argument("--csv", help="directory for CSV copies of the tables")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="stage latency percentile report")
    p.add_argument("--events", type=int, default=None)
    p.add_argument("--seed", type=int, default=97)
    p.add_argument("--csv", help="CSV output path")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("corpus", help="write the bundled corpora to disk")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("reps", "form", "both"), default="both")
    p.set_defaults(fn=cmd_corpus)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BaselineUnavailable as err:
        print(f"error: {err} (trace has no usable baseline window)",
              file=sys.stderr)
        return 2
    except CoachError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
