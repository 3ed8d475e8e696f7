// Console state: everything rendered comes from received frames, never from
// client-side physics.

import type { TelemetryFrame } from "./schema.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export const STALE_AFTER_MS = 500;
export const CHART_WINDOW_S = 10;

export interface ChartSample {
  t: number;
  quadZ: number;
  loadZ: number;
  mode: number;
  thrust: number;
}

export class ViewState {
  status: ConnectionStatus = "connecting";
  latest: TelemetryFrame | null = null;
  lastFrameWallMs = -Infinity;
  grabbed = false;
  dragTarget: [number, number, number] | null = null;
  selectedController = "hpa";
  history: ChartSample[] = [];

  pushFrame(frame: TelemetryFrame, wallMs: number): void {
    this.latest = frame;
    this.lastFrameWallMs = wallMs;
    this.history.push({
      t: frame.t,
      quadZ: frame.quad_pos[2],
      loadZ: frame.load_pos[2],
      mode: frame.mode,
      thrust: frame.thrust_cmd,
    });
    const cutoff = frame.t - CHART_WINDOW_S;
    while (this.history.length > 0 && this.history[0].t < cutoff) {
      this.history.shift();
    }
  }

  isStale(nowMs: number): boolean {
    return this.latest !== null && nowMs - this.lastFrameWallMs > STALE_AFTER_MS;
  }

  setStatus(status: ConnectionStatus): void {
    this.status = status;
    if (status !== "connected") {
      this.grabbed = false;
      this.dragTarget = null;
    }
  }
}
