// Small display helpers, kept free of DOM so they are unit-testable.

import type { ConsoleState, RestView } from "./state.js";

// Simulated-session clock, m:ss or h:mm:ss past the hour.
export function fmtClock(ms: number): string {
  const total = Math.floor(ms / 1000);
  const s = total % 60;
  const m = Math.floor(total / 60) % 60;
  const h = Math.floor(total / 3600);
  const mmss = `${m}:${String(s).padStart(2, "0")}`;
  return h > 0 ? `${h}:${String(m).padStart(2, "0")}:${String(s).padStart(2, "0")}` : mmss;
}

export function categoryLabel(category: string): string {
  return category.replace(/_/g, " ");
}

// Whole seconds left on a rest, judged by the latest record timestamp.
export function restRemainingS(rest: RestView, lastTs: number): number {
  const left = (rest.ts + rest.seconds * 1000 - lastTs) / 1000;
  return Math.max(0, Math.ceil(left));
}

export interface SparklineGeometry {
  points: string;
  bandTop: number;
  bandHeight: number;
  safeMaxY: number;
  lo: number;
  hi: number;
}

// Maps the bpm trail onto a w-by-h box. The vertical scale always includes
// the target band and the safe-max line when HR context is known, so the
// band cannot drift off-screen.
export function sparkline(
  s: ConsoleState, w: number, h: number,
): SparklineGeometry | null {
  if (s.bpmTrail.length < 2) return null;
  const bpms = s.bpmTrail.map((p) => p.bpm);
  let lo = Math.min(...bpms);
  let hi = Math.max(...bpms);
  if (s.hr !== null) {
    lo = Math.min(lo, s.hr.target_bpm - s.hr.band_bpm);
    hi = Math.max(hi, s.hr.safe_max_bpm);
  }
  lo -= 4;
  hi += 4;
  const t0 = s.bpmTrail[0]!.ts;
  const t1 = s.bpmTrail[s.bpmTrail.length - 1]!.ts;
  const dt = Math.max(t1 - t0, 1);
  const y = (bpm: number) => h - ((bpm - lo) / (hi - lo)) * h;
  const points = s.bpmTrail
    .map((p) => `${(((p.ts - t0) / dt) * w).toFixed(1)},${y(p.bpm).toFixed(1)}`)
    .join(" ");
  const bandTop = s.hr ? y(s.hr.target_bpm + s.hr.band_bpm) : 0;
  const bandBottom = s.hr ? y(s.hr.target_bpm - s.hr.band_bpm) : 0;
  return {
    points,
    bandTop,
    bandHeight: Math.max(bandBottom - bandTop, 0),
    safeMaxY: s.hr ? y(s.hr.safe_max_bpm) : -1,
    lo,
    hi,
  };
}
