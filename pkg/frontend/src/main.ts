// Entry point: one socket, one reducer, renders coalesced to animation
// frames. All session truth comes from engine frames; the page never
// computes or predicts workout state on its own.

import type { FormErrorKind, SteeringKind } from "./records.js";
import { ConsoleSocket } from "./socket.js";
import {
  applyMessage,
  initialState,
  onProtocolError,
  onSocketClosed,
  type ConsoleState,
} from "./state.js";
import { RecordValidator } from "./validate.js";
import { bindView, render } from "./view.js";

async function boot(): Promise<void> {
  const schema = await (await fetch("records.schema.json")).json();
  const validator = new RecordValidator(schema);
  const view = bindView(document);

  let state = initialState();
  let painted: ConsoleState | null = null;
  let framePending = false;

  function paint(): void {
    if (framePending) return;
    framePending = true;
    requestAnimationFrame(() => {
      framePending = false;
      render(view, state, painted);
      painted = state;
    });
  }

  function dispatch(step: (s: ConsoleState) => ConsoleState): void {
    state = step(state);
    paint();
  }

  const url = `ws://${location.host}/ws`;
  const socket = new ConsoleSocket(
    url,
    (u) => new WebSocket(u),
    validator,
    {
      onMessage: (msg) => dispatch((s) => applyMessage(s, msg)),
      onStatus: (status) => {
        if (status === "closed") dispatch(onSocketClosed);
      },
      onProtocolError: (errors, raw) => {
        console.warn("dropped invalid frame", errors, raw);
        dispatch(onProtocolError);
      },
    },
  );
  socket.start();

  function steer(cmd: { kind: SteeringKind; level?: string; error?: FormErrorKind; duration_s?: number }): void {
    socket.sendSteering(cmd, state.lastTs);
  }

  const pick = (id: string) => (document.getElementById(id) as HTMLSelectElement).value;
  const num = (id: string) => Number((document.getElementById(id) as HTMLInputElement).value);
  const on = (id: string, fn: () => void) => {
    document.getElementById(id)!.addEventListener("click", fn);
  };

  on("btn-exertion", () => steer({ kind: "set_exertion", level: pick("exertion-level") }));
  on("btn-error", () => steer({
    kind: "inject_form_error",
    error: pick("error-kind") as FormErrorKind,
    duration_s: num("error-duration"),
  }));
  on("btn-pain", () => steer({
    kind: "report_pain",
    level: pick("pain-level"),
    duration_s: num("pain-duration"),
  }));
  on("btn-skip-rest", () => steer({ kind: "skip_rest" }));
  on("btn-pause", () => steer({ kind: "pause_resume" }));
  on("btn-whatif", () => steer({ kind: "what_if_rest" }));
  on("whatif-close", () => dispatch((s) => ({ ...s, whatIf: null })));

  paint();
}

boot().catch((err) => {
  document.body.textContent = `console failed to start: ${err}`;
});
