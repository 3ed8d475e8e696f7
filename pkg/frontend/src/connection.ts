// Websocket client with validation, reconnect backoff, and schema handshake.

import {
  AckMessage,
  OperatorCommand,
  SCHEMA_VERSION,
  TelemetryFrame,
  encodeCommand,
  parseServerMessage,
} from "./schema.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConnectionCallbacks {
  onFrame?: (frame: TelemetryFrame) => void;
  onAck?: (ack: AckMessage) => void;
  onStatus?: (status: "connecting" | "connected" | "disconnected") => void;
  onSchemaMismatch?: (got: number) => void;
}

export const BACKOFF_INITIAL_MS = 500;
export const BACKOFF_MAX_MS = 8000;

export function nextBackoff(current: number): number {
  return Math.min(current * 2, BACKOFF_MAX_MS);
}

export class ConsoleConnection {
  private socket: SocketLike | null = null;
  private backoffMs = BACKOFF_INITIAL_MS;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly callbacks: ConnectionCallbacks,
    private readonly factory: SocketFactory =
      (u) => new WebSocket(u) as unknown as SocketLike,
  ) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
  }

  send(cmd: OperatorCommand): boolean {
    if (this.socket === null) return false;
    try {
      this.socket.send(encodeCommand(cmd));
      return true;
    } catch {
      return false;
    }
  }

  private open(): void {
    this.callbacks.onStatus?.("connecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.backoffMs = BACKOFF_INITIAL_MS;
      this.callbacks.onStatus?.("connected");
    };
    socket.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (msg === null) return;
      if (msg.type === "hello") {
        if (msg.schema !== SCHEMA_VERSION) this.callbacks.onSchemaMismatch?.(msg.schema);
      } else if (msg.type === "telemetry") {
        this.callbacks.onFrame?.(msg);
      } else {
        this.callbacks.onAck?.(msg);
      }
    };
    socket.onclose = () => this.scheduleReconnect();
    socket.onerror = () => socket.close();
  }

  private scheduleReconnect(): void {
    this.socket = null;
    this.callbacks.onStatus?.("disconnected");
    if (this.closed) return;
    const delay = this.backoffMs;
    this.backoffMs = nextBackoff(this.backoffMs);
    this.timer = setTimeout(() => this.open(), delay);
  }
}
