import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { parseEngineMessage, RecordValidator } from "../src/validate.js";

// The validator must agree with the engine's schema file byte for byte,
// so the tests load that file rather than a copy.
const schemaPath = fileURLToPath(
  new URL("../../schema/records.schema.json", import.meta.url),
);
const validator = new RecordValidator(JSON.parse(readFileSync(schemaPath, "utf-8")));

const GOOD: Record<string, object> = {
  header: {
    rec: "header", version: "0.1.0", schema: 1, host: "x", python: "3.10",
    created_ms: 1700000000000,
  },
  hr_event: { rec: "event", t: "hr", ts: 1000, bpm: 88 },
  lm_event: { rec: "event", t: "lm", ts: 1016.6 },
  vocal_event: {
    rec: "event", t: "vocal", ts: 1100, pitch_hz: 180.2, loudness_db: 61.0, zcr: 0.12,
  },
  pain_event: { rec: "event", t: "pain", ts: 1200, probs: [0.9, 0.07, 0.03] },
  steer_event: { rec: "event", t: "steer", ts: 1300, kind: "skip_rest" },
  snapshot: {
    rec: "snapshot", ts: 2000, exercise: "Lunges", rep_count: 3,
    form_error: null, hr_zone: "Target", fatigue_detected: false,
    current_bpm: 120.5, pain: "Low", phase_progress: 0.25,
  },
  intervention: {
    rec: "intervention", ts: 2100, category: "rep_count", priority: 4,
    source: "rule", text: "Three!", delivery_ms: 480.0, delivered: true,
  },
  stage: { rec: "stage", ts: 2200, stage: "tts", ms: 480.0 },
  rest: {
    rec: "rest", ts: 3000, seconds: 30, source: "backend", safety: false,
    completed: "Lunges", next: "Bicep Curls", message: "Breathe.",
  },
  checkpoint: { rec: "checkpoint", ts: 4000, name: "Post-Cardio", bpm: 130.0 },
  phase: {
    rec: "phase", ts: 5000, index: 1, group: "strength", label: "Lunges",
    event: "start",
  },
  adjustment: {
    rec: "adjustment", ts: 6000, phase_index: 1, set_index: 1,
    param: "weight_kg", from: 4.0, to: 5.0, delta: 1,
  },
  end: { rec: "end", ts: 7000, partial: false, reason: "plan_complete" },
  hello: { rec: "hello", speed: 4.0, records: 120, sim_ms: 12000 },
  hr_context: {
    rec: "hr_context", ts: 30000, baseline_bpm: 65.0, target_bpm: 152.5,
    band_bpm: 5.0, safe_max_bpm: 180.5,
  },
  what_if_reply: { rec: "what_if_reply", ts: 8000, seconds: 25, message: "ok" },
  ack: { rec: "ack", kind: "what_if_rest", sim_ms: 8000 },
  rejected: { rec: "rejected", reason: "only steering commands are accepted" },
  serve_done: { rec: "serve_done", ts: 9000 },
  steering: { t: "steer", ts: 100, kind: "inject_form_error", error: "knee_over_toe", duration_s: 5 },
};

describe("every frame kind on the wire validates", () => {
  for (const [name, doc] of Object.entries(GOOD)) {
    it(name, () => {
      expect(validator.validate(doc)).toEqual([]);
    });
  }
});

describe("violations are rejected", () => {
  it("unknown record kind", () => {
    expect(validator.validate({ rec: "bogus", ts: 1 })).not.toEqual([]);
  });

  it("extra keys are refused on every definition", () => {
    for (const [name, doc] of Object.entries(GOOD)) {
      const padded = { ...doc, extra_key: 1 };
      expect(validator.validate(padded), name).not.toEqual([]);
    }
  });

  it("missing required key", () => {
    const { text: _text, ...rest } = GOOD["intervention"] as Record<string, unknown>;
    expect(validator.validate(rest)).not.toEqual([]);
  });

  it("hr event without bpm", () => {
    expect(validator.validate({ rec: "event", t: "hr", ts: 1 })).not.toEqual([]);
  });

  it("vocal event missing a channel", () => {
    expect(
      validator.validate({ rec: "event", t: "vocal", ts: 1, pitch_hz: 180, zcr: 0.1 }),
    ).not.toEqual([]);
  });

  it("pain probs must be three values in [0, 1]", () => {
    expect(
      validator.validate({ rec: "event", t: "pain", ts: 1, probs: [0.5, 0.5] }),
    ).not.toEqual([]);
    expect(
      validator.validate({ rec: "event", t: "pain", ts: 1, probs: [0.5, 0.5, 1.2] }),
    ).not.toEqual([]);
  });

  it("snapshot form_error accepts null and known kinds only", () => {
    const snap = GOOD["snapshot"] as Record<string, unknown>;
    expect(validator.validate({ ...snap, form_error: "knee_over_toe" })).toEqual([]);
    expect(validator.validate({ ...snap, form_error: "bad_knee" })).not.toEqual([]);
  });

  it("rest seconds capped at 60", () => {
    const rest = GOOD["rest"] as Record<string, unknown>;
    expect(validator.validate({ ...rest, seconds: 61 })).not.toEqual([]);
    expect(validator.validate({ ...rest, seconds: -1 })).not.toEqual([]);
  });

  it("intervention text cannot be empty", () => {
    const iv = GOOD["intervention"] as Record<string, unknown>;
    expect(validator.validate({ ...iv, text: "" })).not.toEqual([]);
  });

  it("hello record count cannot be negative or fractional", () => {
    const hello = GOOD["hello"] as Record<string, unknown>;
    expect(validator.validate({ ...hello, records: -1 })).not.toEqual([]);
    expect(validator.validate({ ...hello, records: 1.5 })).not.toEqual([]);
  });

  it("hr_context values must be positive", () => {
    const ctx = GOOD["hr_context"] as Record<string, unknown>;
    expect(validator.validate({ ...ctx, band_bpm: 0 })).not.toEqual([]);
  });

  it("checkpoint names are the fixed five", () => {
    const cp = GOOD["checkpoint"] as Record<string, unknown>;
    expect(validator.validate({ ...cp, name: "Mid-Cardio" })).not.toEqual([]);
  });
});

describe("steering conditionals", () => {
  it("set_exertion needs a level from its own enum", () => {
    expect(validator.checkDef("steering", {
      t: "steer", ts: 0, kind: "set_exertion", level: "moderate",
    })).toEqual([]);
    expect(validator.checkDef("steering", {
      t: "steer", ts: 0, kind: "set_exertion",
    })).not.toEqual([]);
    expect(validator.checkDef("steering", {
      t: "steer", ts: 0, kind: "set_exertion", level: "Medium",
    })).not.toEqual([]);
  });

  it("report_pain levels are capitalized", () => {
    expect(validator.checkDef("steering", {
      t: "steer", ts: 0, kind: "report_pain", level: "High",
    })).toEqual([]);
    expect(validator.checkDef("steering", {
      t: "steer", ts: 0, kind: "report_pain", level: "high",
    })).not.toEqual([]);
  });

  it("inject_form_error needs error and a positive duration", () => {
    expect(validator.checkDef("steering", {
      t: "steer", ts: 0, kind: "inject_form_error", error: "low_back", duration_s: 2,
    })).toEqual([]);
    expect(validator.checkDef("steering", {
      t: "steer", ts: 0, kind: "inject_form_error", error: "low_back",
    })).not.toEqual([]);
    expect(validator.checkDef("steering", {
      t: "steer", ts: 0, kind: "inject_form_error", error: "low_back", duration_s: 0,
    })).not.toEqual([]);
  });

  it("bare kinds need nothing else", () => {
    for (const kind of ["skip_rest", "pause_resume", "what_if_rest"]) {
      expect(validator.checkDef("steering", { t: "steer", ts: 0, kind })).toEqual([]);
    }
  });
});

describe("parseEngineMessage", () => {
  it("accepts a valid line", () => {
    const res = parseEngineMessage(validator, JSON.stringify(GOOD["snapshot"]));
    expect(res.ok).toBe(true);
  });

  it("flags unparseable text", () => {
    const res = parseEngineMessage(validator, "{nope");
    expect(res.ok).toBe(false);
  });

  it("flags structurally invalid frames without throwing", () => {
    const res = parseEngineMessage(validator, '{"rec": "snapshot", "ts": 1}');
    expect(res.ok).toBe(false);
  });
});
