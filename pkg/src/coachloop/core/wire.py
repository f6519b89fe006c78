"""Newline-delimited JSON codec for sensor events.

One event per line, UTF-8, newline-free. The same format is used for
trace files and the live protocol, so a recorded file replays exactly.
Numbers with integral values are written as integers to keep lines
compact and byte-stable; decode(encode(e)) == e holds for every valid
event since Python compares 72 == 72.0.

Line shapes:
    {"t":"hr","ts":1000,"bpm":72}
    {"t":"lm","ts":16.7,"pts":[[x,y,z,v], ... 33 entries ...]}
    {"t":"vocal","ts":100,"pitch_hz":150,"loudness_db":-20,"zcr":0.1}
    {"t":"pain","ts":500,"probs":[0.8,0.15,0.05]}
    {"t":"steer","ts":0,"kind":"set_exertion","level":"high"}
"""
from __future__ import annotations

import json
from typing import Iterable, Iterator

from ..errors import MalformedLine, UnknownEventKind
from .types import (
    HRSample,
    LandmarkFrame,
    PainObservation,
    SensorEvent,
    SteeringCommand,
    SteeringKind,
    VocalFrame,
)

_SEP = (",", ":")


def _num(v: float):
    """Render integral floats as ints (1000.0 -> 1000); exact for < 2**53."""
    if isinstance(v, float) and v.is_integer() and abs(v) < 2**53:
        return int(v)
    return v


def encode_event(e: SensorEvent) -> str:
    if isinstance(e, HRSample):
        doc = {"t": "hr", "ts": _num(e.ts), "bpm": _num(e.bpm)}
    elif isinstance(e, LandmarkFrame):
        doc = {"t": "lm", "ts": _num(e.ts),
               "pts": [[_num(c) for c in p] for p in e.landmarks]}
    elif isinstance(e, VocalFrame):
        doc = {"t": "vocal", "ts": _num(e.ts), "pitch_hz": _num(e.pitch_hz),
               "loudness_db": _num(e.loudness_db), "zcr": _num(e.zcr)}
    elif isinstance(e, PainObservation):
        doc = {"t": "pain", "ts": _num(e.ts), "probs": [_num(p) for p in e.probs]}
    elif isinstance(e, SteeringCommand):
        doc = {"t": "steer", "ts": _num(e.ts), "kind": e.kind.value}
        if e.level is not None:
            doc["level"] = e.level
        if e.error is not None:
            doc["error"] = e.error.value
        if e.duration_s is not None:
            doc["duration_s"] = _num(e.duration_s)
    else:
        raise UnknownEventKind(f"cannot encode {type(e).__name__}")
    return json.dumps(doc, separators=_SEP, ensure_ascii=False)


def _require(doc: dict, *names: str) -> list:
    missing = [n for n in names if n not in doc]
    if missing:
        raise MalformedLine(f"missing field(s): {', '.join(missing)}")
    return [doc[n] for n in names]


def decode_event(line: str) -> SensorEvent:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(f"invalid JSON: {exc.msg}", position=exc.pos) from exc
    if not isinstance(doc, dict):
        raise MalformedLine("event line must be a JSON object")
    tag = doc.get("t")
    if tag is None:
        raise MalformedLine("missing field(s): t")

    try:
        if tag == "hr":
            ts, bpm = _require(doc, "ts", "bpm")
            return HRSample(ts=ts, bpm=bpm)
        if tag == "lm":
            ts, pts = _require(doc, "ts", "pts")
            if not isinstance(pts, list):
                raise MalformedLine("pts must be a list")
            return LandmarkFrame(ts=ts, landmarks=tuple(tuple(p) for p in pts))
        if tag == "vocal":
            ts, pitch, loud, zcr = _require(doc, "ts", "pitch_hz", "loudness_db", "zcr")
            return VocalFrame(ts=ts, pitch_hz=pitch, loudness_db=loud, zcr=zcr)
        if tag == "pain":
            ts, probs = _require(doc, "ts", "probs")
            if not isinstance(probs, list):
                raise MalformedLine("probs must be a list")
            return PainObservation(ts=ts, probs=tuple(probs))
        if tag == "steer":
            ts, kind = _require(doc, "ts", "kind")
            try:
                kind = SteeringKind(kind)
            except ValueError as exc:
                raise MalformedLine(f"unknown steering kind {kind!r}") from exc
            return SteeringCommand(
                ts=ts, kind=kind,
                level=doc.get("level"),
                error=doc.get("error"),
                duration_s=doc.get("duration_s"),
            )
    except (TypeError, ValueError) as exc:
        # Wrong shapes or non-numeric values inside a known event kind.
        raise MalformedLine(str(exc)) from exc
    raise UnknownEventKind(f"unknown event kind {tag!r}")


def read_trace(path: str) -> Iterator[SensorEvent]:
    """Yield events from an NDJSON trace file, skipping blank lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield decode_event(line)


def write_trace(path: str, events: Iterable[SensorEvent]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(encode_event(e))
            fh.write("\n")
            n += 1
    return n


def dumps_doc(doc: dict) -> str:
    """Serialize a record document with the engine's canonical separators."""
    return json.dumps(doc, separators=_SEP, ensure_ascii=False, default=_num_default)


def _num_default(v):
    raise TypeError(f"not JSON serializable: {type(v).__name__}")
