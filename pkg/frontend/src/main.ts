// Console wiring: connection, pointer handling, and the render loop.

import { PointerCommandSource } from "./commands.js";
import { ConsoleConnection } from "./connection.js";
import { drawCharts, drawGauge, drawScene } from "./render.js";
import type { OperatorCommand, Vec3 } from "./schema.js";
import { GaugeSpec, ViewSpec } from "./transform.js";
import { CHART_WINDOW_S, ViewState } from "./viewstate.js";

const BRIDGE_URL = `ws://${location.hostname || "127.0.0.1"}:8765`;

const state = new ViewState();
let reference: Vec3 = [0, 0, 0.7];

function canvas(id: string): HTMLCanvasElement {
  return document.getElementById(id) as HTMLCanvasElement;
}

const topCanvas = canvas("top-view");
const sideCanvas = canvas("side-view");
const gaugeCanvas = canvas("fov-gauge");
const chartCanvas = canvas("charts");

const topSpec: ViewSpec = {
  widthPx: topCanvas.width, heightPx: topCanvas.height,
  centerA: 0, centerB: 0, pxPerMeter: 120,
};
const sideSpec: ViewSpec = {
  widthPx: sideCanvas.width, heightPx: sideCanvas.height,
  centerA: 0, centerB: 1.0, pxPerMeter: 120,
};
const gaugeSpec: GaugeSpec = {
  widthPx: gaugeCanvas.width, heightPx: gaugeCanvas.height, gain: 140,
};

const connection = new ConsoleConnection(BRIDGE_URL, {
  onFrame: (frame) => state.pushFrame(frame, performance.now()),
  onStatus: (status) => state.setStatus(status),
  onAck: (ack) => {
    if (!ack.ok) setBanner(`command rejected: ${ack.error ?? "unknown"}`);
    else if (ack.kind === "grab") state.grabbed = true;
    else if (ack.kind === "release") state.grabbed = false;
  },
  onSchemaMismatch: (got) => setBanner(`schema mismatch: bridge speaks v${got}`),
});

function sendCommand(cmd: OperatorCommand): void {
  connection.send(cmd);
}

const pointer = new PointerCommandSource(sendCommand);

function bindPointer(el: HTMLCanvasElement, view: "top" | "side", spec: ViewSpec): void {
  const pos = (ev: PointerEvent) => {
    const rect = el.getBoundingClientRect();
    return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
  };
  el.addEventListener("pointerdown", (ev) => {
    if (pointer.pointerDown(view, spec, pos(ev), state.latest, performance.now())) {
      el.setPointerCapture(ev.pointerId);
    }
  });
  el.addEventListener("pointermove", (ev) => {
    pointer.pointerMove(view, spec, pos(ev), performance.now());
  });
  const up = () => pointer.pointerUp(performance.now());
  el.addEventListener("pointerup", up);
  el.addEventListener("pointercancel", up);
}

bindPointer(topCanvas, "top", topSpec);
bindPointer(sideCanvas, "side", sideSpec);

const controllerSelect = document.getElementById("controller") as HTMLSelectElement;
controllerSelect.addEventListener("change", () => {
  state.selectedController = controllerSelect.value;
  sendCommand({
    kind: "select_controller",
    controller: controllerSelect.value,
    timestamp: performance.now() / 1000,
  });
});

document.getElementById("impulse")!.addEventListener("click", () => {
  sendCommand({ kind: "impulse", vector: [0, 0, 0.2], timestamp: performance.now() / 1000 });
});

function setBanner(text: string): void {
  const el = document.getElementById("banner")!;
  el.textContent = text;
  el.classList.toggle("hidden", text === "");
}

function renderLoop(): void {
  const now = performance.now();
  const statusEl = document.getElementById("status")!;
  const modeEl = document.getElementById("mode")!;
  if (state.status !== "connected") {
    setBanner(`bridge ${state.status}, retrying...`);
  } else if (state.isStale(now)) {
    setBanner("telemetry stale");
  } else {
    setBanner("");
  }
  statusEl.textContent = state.status;
  const frame = state.latest;
  if (frame !== null) {
    modeEl.textContent = frame.mode === 1 ? "TAUT" : "SLACK";
    modeEl.className = frame.mode === 1 ? "taut" : "slack";
    document.getElementById("thrust")!.textContent = `${frame.thrust_cmd.toFixed(2)} N`;
    document.getElementById("fov")!.textContent = frame.fov_inside ? "in view" : "OUT OF VIEW";
    drawScene(topCanvas.getContext("2d")!, "top", topSpec, frame, reference);
    drawScene(sideCanvas.getContext("2d")!, "side", sideSpec, frame, reference);
    drawGauge(gaugeCanvas.getContext("2d")!, gaugeSpec, frame);
    drawCharts(chartCanvas.getContext("2d")!,
               { widthPx: chartCanvas.width, heightPx: chartCanvas.height },
               state.history, CHART_WINDOW_S);
  }
  requestAnimationFrame(renderLoop);
}

connection.connect();
requestAnimationFrame(renderLoop);
