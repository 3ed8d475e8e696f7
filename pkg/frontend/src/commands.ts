// Pointer gestures to operator commands: press on the payload grabs it,
// dragging streams rate-limited move_to targets, releasing lets go.

import type { OperatorCommand, TelemetryFrame, Vec3 } from "./schema.js";
import {
  ArenaBounds,
  ScreenPoint,
  ViewSpec,
  clampToArena,
  distancePx,
  sideFromScreen,
  sideToScreen,
  topFromScreen,
  topToScreen,
} from "./transform.js";

export type ViewKind = "top" | "side";

export interface PointerOptions {
  hitRadiusPx: number;
  minSendIntervalMs: number; // move_to rate limit (<= 30 Hz)
  arena: ArenaBounds;
}

export const DEFAULT_POINTER_OPTIONS: PointerOptions = {
  hitRadiusPx: 18,
  minSendIntervalMs: 1000 / 30,
  arena: { min: [-1.5, -1.5, 0.1], max: [1.5, 1.5, 2.0] },
};

export class PointerCommandSource {
  private dragging = false;
  private grabHeight = 0;
  private grabY = 0;
  private lastMoveMs = -Infinity;

  constructor(
    private readonly send: (cmd: OperatorCommand) => void,
    private readonly options: PointerOptions = DEFAULT_POINTER_OPTIONS,
  ) {}

  get isDragging(): boolean {
    return this.dragging;
  }

  pointerDown(view: ViewKind, spec: ViewSpec, pt: ScreenPoint,
              frame: TelemetryFrame | null, nowMs: number): boolean {
    if (frame === null) return false;
    const loadPx = view === "top" ? topToScreen(spec, frame.load_pos)
                                  : sideToScreen(spec, frame.load_pos);
    if (distancePx(pt, loadPx) > this.options.hitRadiusPx) {
      return false; // empty space: no command
    }
    this.dragging = true;
    this.grabHeight = frame.load_pos[2];
    this.grabY = frame.load_pos[1];
    this.send({ kind: "grab", timestamp: nowMs / 1000 });
    return true;
  }

  pointerMove(view: ViewKind, spec: ViewSpec, pt: ScreenPoint, nowMs: number): boolean {
    if (!this.dragging) return false;
    if (nowMs - this.lastMoveMs < this.options.minSendIntervalMs) return false;
    this.lastMoveMs = nowMs;
    const world: Vec3 = view === "top"
      ? topFromScreen(spec, pt, this.grabHeight)
      : sideFromScreen(spec, pt, this.grabY);
    this.send({
      kind: "move_to",
      point: clampToArena(world, this.options.arena),
      timestamp: nowMs / 1000,
    });
    return true;
  }

  pointerUp(nowMs: number): boolean {
    if (!this.dragging) return false;
    this.dragging = false;
    this.send({ kind: "release", timestamp: nowMs / 1000 });
    return true;
  }
}
