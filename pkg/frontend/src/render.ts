// Canvas drawing. Pure geometry helpers are exported for tests; painters
// only read received frame data.

import type { TelemetryFrame, Vec3 } from "./schema.js";
import {
  GaugeSpec,
  ScreenPoint,
  ViewSpec,
  gaugeMarker,
  sideToScreen,
  topToScreen,
} from "./transform.js";
import type { ChartSample } from "./viewstate.js";

export interface CablePath {
  style: "solid" | "dashed";
  from: ScreenPoint;
  mid: ScreenPoint;
  to: ScreenPoint;
}

// Taut cable: straight solid segment. Slack: dashed with a sag at the
// midpoint proportional to the spare length.
export function cablePath(view: "top" | "side", spec: ViewSpec,
                          frame: TelemetryFrame, cableLength = 0.5): CablePath {
  const toScreen = view === "top" ? topToScreen : sideToScreen;
  const from = toScreen(spec, frame.quad_pos);
  const to = toScreen(spec, frame.load_pos);
  const sep = Math.hypot(
    frame.load_pos[0] - frame.quad_pos[0],
    frame.load_pos[1] - frame.quad_pos[1],
    frame.load_pos[2] - frame.quad_pos[2],
  );
  const slack = frame.mode === 0;
  const sagMeters = slack ? Math.max(cableLength - sep, 0.02) * 0.5 : 0;
  const mid: ScreenPoint = {
    x: (from.x + to.x) / 2,
    y: (from.y + to.y) / 2 + sagMeters * spec.pxPerMeter,
  };
  return { style: slack ? "dashed" : "solid", from, mid, to };
}

export function drawScene(ctx: CanvasRenderingContext2D, view: "top" | "side",
                          spec: ViewSpec, frame: TelemetryFrame, refPoint: Vec3): void {
  ctx.clearRect(0, 0, spec.widthPx, spec.heightPx);
  ctx.save();
  const toScreen = view === "top" ? topToScreen : sideToScreen;

  const ref = toScreen(spec, refPoint);
  ctx.strokeStyle = "#4a90d9";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(ref.x - 6, ref.y);
  ctx.lineTo(ref.x + 6, ref.y);
  ctx.moveTo(ref.x, ref.y - 6);
  ctx.lineTo(ref.x, ref.y + 6);
  ctx.stroke();

  const cable = cablePath(view, spec, frame);
  ctx.strokeStyle = frame.mode === 1 ? "#222" : "#999";
  ctx.setLineDash(cable.style === "dashed" ? [6, 5] : []);
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(cable.from.x, cable.from.y);
  ctx.quadraticCurveTo(cable.mid.x, cable.mid.y, cable.to.x, cable.to.y);
  ctx.stroke();
  ctx.setLineDash([]);

  const quad = toScreen(spec, frame.quad_pos);
  ctx.fillStyle = "#333";
  ctx.beginPath();
  ctx.arc(quad.x, quad.y, 9, 0, Math.PI * 2);
  ctx.fill();
  ctx.strokeStyle = "#333";
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.moveTo(quad.x - 16, quad.y);
  ctx.lineTo(quad.x + 16, quad.y);
  ctx.stroke();

  const load = toScreen(spec, frame.load_pos);
  ctx.fillStyle = frame.mode === 1 ? "#c0392b" : "#e67e22";
  ctx.beginPath();
  ctx.arc(load.x, load.y, 8, 0, Math.PI * 2);
  ctx.fill();
  ctx.restore();
}

export function drawGauge(ctx: CanvasRenderingContext2D, spec: GaugeSpec,
                          frame: TelemetryFrame): void {
  ctx.clearRect(0, 0, spec.widthPx, spec.heightPx);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(0.5, 0.5, spec.widthPx - 1, spec.heightPx - 1);
  ctx.beginPath();
  ctx.moveTo(spec.widthPx / 2, 0);
  ctx.lineTo(spec.widthPx / 2, spec.heightPx);
  ctx.moveTo(0, spec.heightPx / 2);
  ctx.lineTo(spec.widthPx, spec.heightPx / 2);
  ctx.strokeStyle = "#ddd";
  ctx.stroke();
  const marker = gaugeMarker(spec, frame.cam_load);
  ctx.fillStyle = frame.fov_inside ? "#27ae60" : "#c0392b";
  ctx.beginPath();
  ctx.arc(marker.x, marker.y, 6, 0, Math.PI * 2);
  ctx.fill();
}

export interface ChartLayout {
  widthPx: number;
  heightPx: number;
}

export function drawCharts(ctx: CanvasRenderingContext2D, layout: ChartLayout,
                           history: ChartSample[], windowS: number): void {
  ctx.clearRect(0, 0, layout.widthPx, layout.heightPx);
  if (history.length < 2) return;
  const tEnd = history[history.length - 1].t;
  const tStart = tEnd - windowS;
  const xOf = (t: number) => ((t - tStart) / windowS) * layout.widthPx;

  const lanes = [
    { pick: (s: ChartSample) => s.quadZ, color: "#333", lo: 0, hi: 2 },
    { pick: (s: ChartSample) => s.loadZ, color: "#c0392b", lo: 0, hi: 2 },
    { pick: (s: ChartSample) => s.mode, color: "#8e44ad", lo: -0.2, hi: 1.2 },
    { pick: (s: ChartSample) => s.thrust, color: "#2471a3", lo: 0, hi: 16 },
  ];
  const laneH = layout.heightPx / lanes.length;
  lanes.forEach((lane, i) => {
    const y0 = i * laneH;
    ctx.strokeStyle = "#eee";
    ctx.strokeRect(0, y0 + 0.5, layout.widthPx, laneH - 1);
    ctx.strokeStyle = lane.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    history.forEach((s, j) => {
      const frac = (lane.pick(s) - lane.lo) / (lane.hi - lane.lo);
      const y = y0 + laneH - Math.min(Math.max(frac, 0), 1) * laneH;
      if (j === 0) ctx.moveTo(xOf(s.t), y);
      else ctx.lineTo(xOf(s.t), y);
    });
    ctx.stroke();
  });
}
