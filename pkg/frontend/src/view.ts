// DOM rendering. render() is called at most once per animation frame and
// paints only the panels whose backing state changed since the last paint,
// which the immutable reducer makes a cheap reference comparison.

import { categoryLabel, fmtClock, restRemainingS, sparkline } from "./format.js";
import type { ConsoleState, FeedItem } from "./state.js";

const SPARK_W = 240;
const SPARK_H = 64;

export interface View {
  conn: HTMLElement;
  clock: HTMLElement;
  speed: HTMLElement;
  records: HTMLElement;
  protoErrors: HTMLElement;
  exercise: HTMLElement;
  phase: HTMLElement;
  reps: HTMLElement;
  progress: HTMLElement;
  bpmNow: HTMLElement;
  zone: HTMLElement;
  spark: SVGSVGElement;
  hrLegend: HTMLElement;
  fatigue: HTMLElement;
  pain: HTMLElement;
  formError: HTMLElement;
  feed: HTMLElement;
  rest: HTMLElement;
  restRemaining: HTMLElement;
  restMsg: HTMLElement;
  restNext: HTMLElement;
  whatIf: HTMLElement;
  whatIfBody: HTMLElement;
  checkpoints: HTMLElement;
  controlStatus: HTMLElement;
  done: HTMLElement;
}

function el(root: Document, id: string): HTMLElement {
  const node = root.getElementById(id);
  if (node === null) throw new Error(`console page is missing #${id}`);
  return node;
}

export function bindView(root: Document): View {
  return {
    conn: el(root, "conn"),
    clock: el(root, "clock"),
    speed: el(root, "speed"),
    records: el(root, "records"),
    protoErrors: el(root, "proto-errors"),
    exercise: el(root, "exercise"),
    phase: el(root, "phase"),
    reps: el(root, "reps"),
    progress: el(root, "progress"),
    bpmNow: el(root, "bpm-now"),
    zone: el(root, "zone"),
    spark: el(root, "spark") as unknown as SVGSVGElement,
    hrLegend: el(root, "hr-legend"),
    fatigue: el(root, "fatigue"),
    pain: el(root, "pain"),
    formError: el(root, "form-error"),
    feed: el(root, "feed"),
    rest: el(root, "rest"),
    restRemaining: el(root, "rest-remaining"),
    restMsg: el(root, "rest-msg"),
    restNext: el(root, "rest-next"),
    whatIf: el(root, "whatif"),
    whatIfBody: el(root, "whatif-body"),
    checkpoints: el(root, "checkpoints"),
    controlStatus: el(root, "control-status"),
    done: el(root, "done"),
  };
}

function feedRow(item: FeedItem): HTMLElement {
  const li = document.createElement("li");
  if (item.kind === "gap") {
    li.className = "gap";
    li.textContent = `connection gap: missed ${item.missed} records`;
    return li;
  }
  li.className = item.urgent ? "item urgent" : "item";
  const when = document.createElement("span");
  when.className = "when";
  when.textContent = fmtClock(item.ts);
  const tag = document.createElement("span");
  tag.className = `tag cat-${item.category}`;
  tag.textContent = categoryLabel(item.category);
  const src = document.createElement("span");
  src.className = `tag src-${item.source}`;
  src.textContent = item.source;
  const text = document.createElement("span");
  text.className = "text";
  text.textContent = item.text;
  li.append(when, tag, src, text);
  return li;
}

function renderFeed(view: View, s: ConsoleState, prev: ConsoleState | null): void {
  if (prev !== null && prev.feed === s.feed) return;
  const atBottom =
    view.feed.scrollTop + view.feed.clientHeight >= view.feed.scrollHeight - 24;
  // The feed is capped and append-mostly; reuse the common prefix.
  const old = prev?.feed ?? [];
  let common = 0;
  while (common < old.length && common < s.feed.length && old[common] === s.feed[common]) {
    common += 1;
  }
  while (view.feed.childElementCount > common) {
    view.feed.lastElementChild?.remove();
  }
  for (let i = common; i < s.feed.length; i += 1) {
    view.feed.appendChild(feedRow(s.feed[i]!));
  }
  if (atBottom) view.feed.scrollTop = view.feed.scrollHeight;
}

function renderSpark(view: View, s: ConsoleState): void {
  const geo = sparkline(s, SPARK_W, SPARK_H);
  if (geo === null) {
    view.spark.innerHTML = "";
    return;
  }
  const band = s.hr !== null
    ? `<rect x="0" y="${geo.bandTop.toFixed(1)}" width="${SPARK_W}"` +
      ` height="${geo.bandHeight.toFixed(1)}" class="band"></rect>` +
      `<line x1="0" y1="${geo.safeMaxY.toFixed(1)}" x2="${SPARK_W}"` +
      ` y2="${geo.safeMaxY.toFixed(1)}" class="safe-max"></line>`
    : "";
  view.spark.innerHTML =
    band + `<polyline points="${geo.points}" class="trace"></polyline>`;
}

export function render(view: View, s: ConsoleState, prev: ConsoleState | null): void {
  if (prev === s) return;

  view.conn.textContent = s.connection;
  view.conn.className = `badge conn-${s.connection}`;
  view.clock.textContent = fmtClock(s.lastTs);
  view.speed.textContent = s.hello ? `${s.hello.speed}x` : "";
  view.records.textContent = String(s.recordsSeen);
  view.protoErrors.textContent = s.protocolErrors > 0
    ? `${s.protocolErrors} invalid frames dropped`
    : "";
  view.done.hidden = s.end === null && !s.serveDone;
  if (!view.done.hidden && s.end !== null) {
    view.done.textContent = s.end.partial
      ? `session ended early (${s.end.reason.replace(/_/g, " ")})`
      : "session complete";
  }

  const snap = s.snapshot;
  if (prev === null || prev.snapshot !== snap || prev.phaseLabel !== s.phaseLabel) {
    view.exercise.textContent = snap?.exercise ?? "waiting for session";
    view.phase.textContent = s.phaseLabel
      ? `${s.phaseLabel} (${s.phaseGroup})`
      : "";
    view.reps.textContent = snap ? String(snap.rep_count) : "0";
    view.progress.style.width = `${((snap?.phase_progress ?? 0) * 100).toFixed(1)}%`;
    view.fatigue.hidden = !(snap?.fatigue_detected ?? false);
    view.pain.textContent = snap ? `pain ${snap.pain}` : "";
    view.pain.className = `badge pain-${snap?.pain ?? "Low"}`;
    view.formError.hidden = (snap?.form_error ?? null) === null;
    view.formError.textContent = snap?.form_error
      ? `form: ${snap.form_error.replace(/_/g, " ")}`
      : "";
    view.bpmNow.textContent = snap ? `${Math.round(snap.current_bpm)} bpm` : "";
    view.zone.textContent = snap ? snap.hr_zone : "";
    view.zone.className = `badge zone-${snap?.hr_zone ?? "Below"}`;
  }

  if (prev === null || prev.bpmTrail !== s.bpmTrail || prev.hr !== s.hr) {
    renderSpark(view, s);
    view.hrLegend.textContent = s.hr
      ? `target ${Math.round(s.hr.target_bpm)}±${s.hr.band_bpm} bpm,` +
        ` safe max ${Math.round(s.hr.safe_max_bpm)}`
      : "measuring baseline";
  }

  renderFeed(view, s, prev);

  if (s.rest === null) {
    view.rest.hidden = true;
  } else {
    view.rest.hidden = false;
    view.restRemaining.textContent = s.rest.skipAcked
      ? "skipping"
      : `${restRemainingS(s.rest, s.lastTs)} s`;
    view.restMsg.textContent = s.rest.message;
    view.restNext.textContent = `${s.rest.completed} done, next up ${s.rest.next}`;
    view.rest.classList.toggle("safety", s.rest.safety);
  }

  if (s.whatIf === null) {
    view.whatIf.hidden = true;
  } else {
    view.whatIf.hidden = false;
    view.whatIfBody.textContent =
      `${s.whatIf.seconds} s: ${s.whatIf.message}`;
  }

  if (prev === null || prev.checkpoints !== s.checkpoints) {
    view.checkpoints.textContent = "";
    for (const cp of s.checkpoints) {
      const chip = document.createElement("span");
      chip.className = "chip";
      chip.textContent = `${cp.name} ${Math.round(cp.bpm)} bpm`;
      view.checkpoints.appendChild(chip);
    }
  }

  if (s.lastRejected !== null) {
    view.controlStatus.textContent = `rejected: ${s.lastRejected.reason}`;
    view.controlStatus.className = "control-status rejected";
  } else if (s.lastAck !== null) {
    view.controlStatus.textContent =
      `ack ${s.lastAck.kind.replace(/_/g, " ")} at ${fmtClock(s.lastAck.sim_ms)}`;
    view.controlStatus.className = "control-status ack";
  } else {
    view.controlStatus.textContent = "";
    view.controlStatus.className = "control-status";
  }
}
