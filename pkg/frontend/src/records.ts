// Shapes of the NDJSON frames the engine sends over /ws. The runtime
// validator checks incoming frames against the shared schema file; these
// types only describe the same wire format to the compiler.

export type Category =
  | "goal_setting"
  | "intensity_adjust"
  | "relief"
  | "form_correction"
  | "progress_update"
  | "rep_count"
  | "rest_suggestion"
  | "milestone"
  | "end_motivation"
  | "interruption";

export type Source = "rule" | "backend" | "fallback";
export type HrZone = "Below" | "Target" | "Above";
export type PainLevel = "Low" | "Medium" | "High";

export type FormErrorKind =
  | "knee_over_toe"
  | "loose_upper_arm"
  | "weak_peak_contraction"
  | "high_back"
  | "low_back"
  | "misaligned_pose";

export type SteeringKind =
  | "set_exertion"
  | "inject_form_error"
  | "report_pain"
  | "skip_rest"
  | "pause_resume"
  | "what_if_rest";

export interface HeaderRecord {
  rec: "header";
  version: string;
  schema: 1;
  host: string;
  python: string;
  created_ms: number;
}

export interface EventRecord {
  rec: "event";
  t: "hr" | "lm" | "vocal" | "pain" | "steer";
  ts: number;
  bpm?: number;
  pitch_hz?: number;
  loudness_db?: number;
  zcr?: number;
  probs?: number[];
  kind?: SteeringKind;
  level?: string;
  error?: FormErrorKind;
  duration_s?: number;
}

export interface SnapshotRecord {
  rec: "snapshot";
  ts: number;
  exercise: string;
  rep_count: number;
  form_error: FormErrorKind | null;
  hr_zone: HrZone;
  fatigue_detected: boolean;
  current_bpm: number;
  pain: PainLevel;
  phase_progress: number;
}

export interface InterventionRecord {
  rec: "intervention";
  ts: number;
  category: Category;
  priority: number;
  source: Source;
  text: string;
  delivery_ms: number;
  delivered: boolean;
}

export interface StageRecord {
  rec: "stage";
  ts: number;
  stage: "reasoning" | "tts";
  ms: number;
}

export interface RestRecord {
  rec: "rest";
  ts: number;
  seconds: number;
  source: Source;
  safety: boolean;
  completed: string;
  next: string;
  message: string;
}

export interface CheckpointRecord {
  rec: "checkpoint";
  ts: number;
  name: "Start" | "Post-Cardio" | "Post-Strength" | "Post-Balance" | "Post-Flexibility";
  bpm: number;
}

export interface PhaseRecord {
  rec: "phase";
  ts: number;
  index: number;
  group: "cardio" | "strength" | "balance" | "flexibility";
  label: string;
  event: "start" | "end";
}

export interface AdjustmentRecord {
  rec: "adjustment";
  ts: number;
  phase_index: number;
  set_index: number;
  param: "weight_kg" | "hold_s";
  from: number;
  to: number;
  delta: -1 | 0 | 1;
}

export interface EndRecord {
  rec: "end";
  ts: number;
  partial: boolean;
  reason: "plan_complete" | "stream_ended";
}

// Server-only frames; these never appear in the session log.

export interface HelloFrame {
  rec: "hello";
  speed: number;
  records: number;
  sim_ms: number;
}

export interface HrContextFrame {
  rec: "hr_context";
  ts: number;
  baseline_bpm: number;
  target_bpm: number;
  band_bpm: number;
  safe_max_bpm: number;
}

export interface WhatIfReplyFrame {
  rec: "what_if_reply";
  ts: number;
  seconds: number;
  message: string;
}

export interface AckFrame {
  rec: "ack";
  kind: SteeringKind;
  sim_ms: number;
}

export interface RejectedFrame {
  rec: "rejected";
  reason: string;
}

export interface ServeDoneFrame {
  rec: "serve_done";
  ts: number;
}

// Outbound steering; discriminated by "t" instead of "rec".
export interface SteeringMessage {
  t: "steer";
  ts: number;
  kind: SteeringKind;
  level?: string;
  error?: FormErrorKind;
  duration_s?: number;
}

export type LogRecord =
  | HeaderRecord
  | EventRecord
  | SnapshotRecord
  | InterventionRecord
  | StageRecord
  | RestRecord
  | CheckpointRecord
  | PhaseRecord
  | AdjustmentRecord
  | EndRecord;

export type EngineMessage =
  | LogRecord
  | HelloFrame
  | HrContextFrame
  | WhatIfReplyFrame
  | AckFrame
  | RejectedFrame
  | ServeDoneFrame;

const LOG_RECS = new Set([
  "header", "event", "snapshot", "intervention", "stage",
  "rest", "checkpoint", "phase", "adjustment", "end",
]);

// Log records are what the hello frame's record count refers to; the
// server-only frames ride the same socket but are never logged.
export function isLogRecord(msg: EngineMessage): msg is LogRecord {
  return LOG_RECS.has(msg.rec);
}
