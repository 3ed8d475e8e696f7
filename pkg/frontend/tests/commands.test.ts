import { describe, expect, it } from "vitest";

import { DEFAULT_POINTER_OPTIONS, PointerCommandSource } from "../src/commands.js";
import type { OperatorCommand, TelemetryFrame } from "../src/schema.js";
import { topToScreen, ViewSpec } from "../src/transform.js";

const VIEW: ViewSpec = { widthPx: 400, heightPx: 400, centerA: 0, centerB: 0, pxPerMeter: 100 };

function frameWithLoad(x: number, y: number, z = 0.7): TelemetryFrame {
  return {
    type: "telemetry",
    t: 0,
    quad_pos: [x, y, z + 0.5],
    quad_att: [1, 0, 0, 0],
    load_pos: [x, y, z],
    cable_dir: [0, 0, -1],
    mode: 1,
    cam_load: [0, 0, -0.5],
    thrust_cmd: 8,
    rates_cmd: [0, 0, 0],
    fov_inside: true,
    controller: "hpa",
  };
}

function collector(): { sent: OperatorCommand[]; send: (c: OperatorCommand) => void } {
  const sent: OperatorCommand[] = [];
  return { sent, send: (c) => sent.push(c) };
}

describe("pointer to command pipeline", () => {
  it("click on empty space produces no command", () => {
    const { sent, send } = collector();
    const src = new PointerCommandSource(send);
    const hit = src.pointerDown("top", VIEW, { x: 10, y: 10 }, frameWithLoad(0, 0), 0);
    expect(hit).toBe(false);
    expect(sent).toHaveLength(0);
    src.pointerUp(10);
    expect(sent).toHaveLength(0);
  });

  it("press-drag-release emits grab, move_to stream, release in order", () => {
    const { sent, send } = collector();
    const src = new PointerCommandSource(send);
    const frame = frameWithLoad(0.2, -0.1);
    const loadPx = topToScreen(VIEW, frame.load_pos);
    expect(src.pointerDown("top", VIEW, loadPx, frame, 0)).toBe(true);
    for (let i = 1; i <= 10; i++) {
      src.pointerMove("top", VIEW, { x: loadPx.x + i * 4, y: loadPx.y }, i * 50);
    }
    src.pointerUp(600);
    expect(sent[0].kind).toBe("grab");
    expect(sent[sent.length - 1].kind).toBe("release");
    const middle = sent.slice(1, -1);
    expect(middle.length).toBeGreaterThanOrEqual(1);
    expect(middle.every((c) => c.kind === "move_to")).toBe(true);
    // world coordinates come back through the inverse view transform
    const last = middle[middle.length - 1];
    expect(last.point![0]).toBeCloseTo(0.2 + 0.4, 10);
    expect(last.point![1]).toBeCloseTo(-0.1, 10);
    expect(last.point![2]).toBeCloseTo(0.7, 10); // grab height preserved in top view
  });

  it("move_to stream is rate limited to 30 Hz", () => {
    const { sent, send } = collector();
    const src = new PointerCommandSource(send);
    const frame = frameWithLoad(0, 0);
    const loadPx = topToScreen(VIEW, frame.load_pos);
    src.pointerDown("top", VIEW, loadPx, frame, 0);
    // 100 moves over one second of fake time
    for (let i = 0; i < 100; i++) {
      src.pointerMove("top", VIEW, { x: loadPx.x + i, y: loadPx.y }, i * 10);
    }
    const moves = sent.filter((c) => c.kind === "move_to");
    expect(moves.length).toBeLessThanOrEqual(31);
    expect(moves.length).toBeGreaterThanOrEqual(25);
  });

  it("timestamps are monotone across rapid drags", () => {
    const { sent, send } = collector();
    const src = new PointerCommandSource(send);
    const frame = frameWithLoad(0, 0);
    const loadPx = topToScreen(VIEW, frame.load_pos);
    let now = 0;
    for (let rep = 0; rep < 2; rep++) {
      src.pointerDown("top", VIEW, loadPx, frame, now);
      for (let i = 0; i < 5; i++) {
        now += 40;
        src.pointerMove("top", VIEW, { x: loadPx.x + i, y: loadPx.y + rep }, now);
      }
      now += 40;
      src.pointerUp(now);
      now += 40;
    }
    const stamps = sent.map((c) => c.timestamp);
    for (let i = 1; i < stamps.length; i++) {
      expect(stamps[i]).toBeGreaterThanOrEqual(stamps[i - 1]);
    }
  });

  it("drag targets outside the arena are clamped to its bounds", () => {
    const { sent, send } = collector();
    const src = new PointerCommandSource(send);
    const frame = frameWithLoad(0, 0);
    const loadPx = topToScreen(VIEW, frame.load_pos);
    src.pointerDown("top", VIEW, loadPx, frame, 0);
    src.pointerMove("top", VIEW, { x: 99999, y: loadPx.y }, 100);
    const move = sent.find((c) => c.kind === "move_to")!;
    expect(move.point![0]).toBe(DEFAULT_POINTER_OPTIONS.arena.max[0]);
  });
});
