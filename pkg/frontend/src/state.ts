// Console state as a pure reducer over validated engine frames. Every
// field below is copied from an engine message; nothing is simulated or
// predicted client-side. Views render this object and do nothing else.

import type {
  AckFrame,
  CheckpointRecord,
  EndRecord,
  EngineMessage,
  HelloFrame,
  HrContextFrame,
  InterventionRecord,
  RejectedFrame,
  RestRecord,
  SnapshotRecord,
  WhatIfReplyFrame,
} from "./records.js";
import { isLogRecord } from "./records.js";

export const FEED_LIMIT = 200;
export const BPM_TRAIL_LIMIT = 600;

export interface FeedEntry {
  kind: "intervention";
  ts: number;
  category: InterventionRecord["category"];
  source: InterventionRecord["source"];
  text: string;
  priority: number;
  urgent: boolean;
}

export interface GapEntry {
  kind: "gap";
  missed: number;
  atRecords: number;
}

export type FeedItem = FeedEntry | GapEntry;

export interface RestView extends Pick<
  RestRecord, "ts" | "seconds" | "source" | "safety" | "completed" | "next" | "message"
> {
  skipAcked: boolean;
}

export type Connection = "connecting" | "live" | "reconnecting" | "closed";

export interface ConsoleState {
  connection: Connection;
  hello: HelloFrame | null;
  recordsSeen: number;
  protocolErrors: number;
  lastTs: number;
  hr: HrContextFrame | null;
  snapshot: SnapshotRecord | null;
  bpmTrail: Array<{ ts: number; bpm: number }>;
  phaseLabel: string | null;
  phaseGroup: string | null;
  stageMs: { reasoning: number | null; tts: number | null };
  feed: FeedItem[];
  rest: RestView | null;
  whatIf: WhatIfReplyFrame | null;
  checkpoints: CheckpointRecord[];
  end: EndRecord | null;
  serveDone: boolean;
  lastAck: AckFrame | null;
  lastRejected: RejectedFrame | null;
}

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    hello: null,
    recordsSeen: 0,
    protocolErrors: 0,
    lastTs: 0,
    hr: null,
    snapshot: null,
    bpmTrail: [],
    phaseLabel: null,
    phaseGroup: null,
    stageMs: { reasoning: null, tts: null },
    feed: [],
    rest: null,
    whatIf: null,
    checkpoints: [],
    end: null,
    serveDone: false,
    lastAck: null,
    lastRejected: null,
  };
}

function pushFeed(feed: FeedItem[], item: FeedItem): FeedItem[] {
  const next = [...feed, item];
  return next.length > FEED_LIMIT ? next.slice(next.length - FEED_LIMIT) : next;
}

function onHello(s: ConsoleState, hello: HelloFrame): ConsoleState {
  let feed = s.feed;
  if (s.hello !== null) {
    // Reconnect. The server does not replay its backlog, so anything
    // logged while we were away is gone; mark the hole in the feed.
    const missed = hello.records - s.recordsSeen;
    if (missed > 0) {
      feed = pushFeed(feed, { kind: "gap", missed, atRecords: hello.records });
    }
  }
  return {
    ...s,
    connection: "live",
    hello,
    recordsSeen: hello.records,
    feed,
    lastTs: Math.max(s.lastTs, hello.sim_ms),
  };
}

function clearedRest(s: ConsoleState, snap: SnapshotRecord): RestView | null {
  if (s.rest === null) return null;
  // An acknowledged skip ends the rest; otherwise it runs out on its own.
  if (s.rest.skipAcked) return null;
  if (snap.ts >= s.rest.ts + s.rest.seconds * 1000) return null;
  return s.rest;
}

export function applyMessage(s: ConsoleState, msg: EngineMessage): ConsoleState {
  if (msg.rec === "hello") return onHello(s, msg);
  if (msg.rec === "hr_context") return { ...s, hr: msg };
  if (msg.rec === "what_if_reply") return { ...s, whatIf: msg };
  if (msg.rec === "rejected") return { ...s, lastRejected: msg, lastAck: null };
  if (msg.rec === "serve_done") return { ...s, serveDone: true };
  if (msg.rec === "ack") {
    const rest = msg.kind === "skip_rest" && s.rest !== null
      ? { ...s.rest, skipAcked: true }
      : s.rest;
    // An ack supersedes any earlier rejection shown inline, and vice versa.
    return { ...s, lastAck: msg, lastRejected: null, rest };
  }

  const next: ConsoleState = { ...s };
  if (isLogRecord(msg)) next.recordsSeen = s.recordsSeen + 1;
  switch (msg.rec) {
    case "event":
      next.lastTs = Math.max(s.lastTs, msg.ts);
      if (msg.t === "hr" && typeof msg.bpm === "number") {
        const trail = [...s.bpmTrail, { ts: msg.ts, bpm: msg.bpm }];
        next.bpmTrail = trail.length > BPM_TRAIL_LIMIT
          ? trail.slice(trail.length - BPM_TRAIL_LIMIT)
          : trail;
      }
      break;
    case "snapshot":
      next.lastTs = Math.max(s.lastTs, msg.ts);
      next.snapshot = msg;
      next.rest = clearedRest(s, msg);
      break;
    case "intervention":
      next.lastTs = Math.max(s.lastTs, msg.ts);
      next.feed = pushFeed(s.feed, {
        kind: "intervention",
        ts: msg.ts,
        category: msg.category,
        source: msg.source,
        text: msg.text,
        priority: msg.priority,
        urgent: msg.priority === 0 || msg.category === "interruption",
      });
      break;
    case "stage":
      next.stageMs = { ...s.stageMs, [msg.stage]: msg.ms };
      break;
    case "rest":
      next.lastTs = Math.max(s.lastTs, msg.ts);
      next.rest = {
        ts: msg.ts,
        seconds: msg.seconds,
        source: msg.source,
        safety: msg.safety,
        completed: msg.completed,
        next: msg.next,
        message: msg.message,
        skipAcked: false,
      };
      break;
    case "checkpoint":
      next.checkpoints = [...s.checkpoints, msg];
      break;
    case "phase":
      next.lastTs = Math.max(s.lastTs, msg.ts);
      if (msg.event === "start") {
        next.phaseLabel = msg.label;
        next.phaseGroup = msg.group;
      } else {
        next.phaseLabel = null;
        next.phaseGroup = null;
      }
      break;
    case "end":
      next.end = msg;
      break;
    default:
      break;
  }
  return next;
}

export function onSocketClosed(s: ConsoleState): ConsoleState {
  const connection: Connection = s.serveDone || s.end !== null ? "closed" : "reconnecting";
  return { ...s, connection };
}

export function onProtocolError(s: ConsoleState): ConsoleState {
  return { ...s, protocolErrors: s.protocolErrors + 1 };
}
