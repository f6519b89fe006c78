// One websocket to the engine, with automatic reconnect. Inbound frames
// are validated against the shared schema before they reach the reducer;
// a frame that fails validation is dropped and counted, never rendered.

import type { EngineMessage, SteeringMessage } from "./records.js";
import { parseEngineMessage, RecordValidator, type SchemaError } from "./validate.js";

// Structural subset of the browser WebSocket, also satisfied by the "ws"
// package in tests.
export interface WebSocketLike {
  onopen: ((ev: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export interface SocketHooks {
  onMessage(msg: EngineMessage): void;
  onStatus(status: "connecting" | "open" | "closed"): void;
  onProtocolError(errors: SchemaError[], raw: string): void;
}

const BASE_DELAY_MS = 500;
const MAX_DELAY_MS = 8000;

export class ConsoleSocket {
  private ws: WebSocketLike | null = null;
  private attempts = 0;
  private stopped = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private factory: (url: string) => WebSocketLike,
    private validator: RecordValidator,
    private hooks: SocketHooks,
  ) {}

  start(): void {
    this.stopped = false;
    this.open();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.ws?.close();
    this.ws = null;
  }

  // Drops the current connection without stopping the client, so the
  // reconnect path can be exercised deliberately.
  kill(): void {
    this.ws?.close();
  }

  private open(): void {
    this.hooks.onStatus("connecting");
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.attempts = 0;
      this.hooks.onStatus("open");
    };
    ws.onmessage = (ev) => {
      const parsed = parseEngineMessage(this.validator, String(ev.data));
      if (parsed.ok) this.hooks.onMessage(parsed.doc);
      else this.hooks.onProtocolError(parsed.errors, parsed.raw);
    };
    ws.onerror = () => {
      ws.close();
    };
    ws.onclose = () => {
      if (this.ws !== ws) return;
      this.ws = null;
      this.hooks.onStatus("closed");
      if (!this.stopped) this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    const delay = Math.min(BASE_DELAY_MS * 2 ** this.attempts, MAX_DELAY_MS);
    this.attempts += 1;
    this.timer = setTimeout(() => {
      this.timer = null;
      if (!this.stopped) this.open();
    }, delay);
  }

  // The engine re-stamps steering to its next slice boundary, so ts only
  // needs to be a plausible session time. Outbound frames are validated
  // against the same schema as inbound ones; a malformed command is a
  // programming error here, not something to put on the wire.
  sendSteering(cmd: Omit<SteeringMessage, "t" | "ts">, ts: number): boolean {
    if (this.ws === null) return false;
    const doc: SteeringMessage = { t: "steer", ts, ...cmd };
    const errors = this.validator.checkDef("steering", doc);
    if (errors.length > 0) {
      throw new Error(`invalid steering command: ${errors[0]!.message}`);
    }
    this.ws.send(JSON.stringify(doc));
    return true;
  }
}
