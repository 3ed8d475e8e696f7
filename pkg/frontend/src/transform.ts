// Orthographic view transforms between world coordinates and canvas pixels,
// plus the camera-gauge linear map. All pure functions.

import type { Vec3 } from "./schema.js";

export interface ViewSpec {
  widthPx: number;
  heightPx: number;
  // world coordinates at the canvas center, in the two displayed axes
  centerA: number;
  centerB: number;
  pxPerMeter: number;
}

export interface ScreenPoint {
  x: number;
  y: number;
}

// Top view displays world (x, y); canvas y grows downward so world y maps
// to -y on screen.
export function topToScreen(view: ViewSpec, world: Vec3): ScreenPoint {
  return {
    x: view.widthPx / 2 + (world[0] - view.centerA) * view.pxPerMeter,
    y: view.heightPx / 2 - (world[1] - view.centerB) * view.pxPerMeter,
  };
}

export function topFromScreen(view: ViewSpec, pt: ScreenPoint, worldZ: number): Vec3 {
  return [
    view.centerA + (pt.x - view.widthPx / 2) / view.pxPerMeter,
    view.centerB - (pt.y - view.heightPx / 2) / view.pxPerMeter,
    worldZ,
  ];
}

// Side view displays world (x, z).
export function sideToScreen(view: ViewSpec, world: Vec3): ScreenPoint {
  return {
    x: view.widthPx / 2 + (world[0] - view.centerA) * view.pxPerMeter,
    y: view.heightPx / 2 - (world[2] - view.centerB) * view.pxPerMeter,
  };
}

export function sideFromScreen(view: ViewSpec, pt: ScreenPoint, worldY: number): Vec3 {
  return [
    view.centerA + (pt.x - view.widthPx / 2) / view.pxPerMeter,
    worldY,
    view.centerB - (pt.y - view.heightPx / 2) / view.pxPerMeter,
  ];
}

export interface ArenaBounds {
  min: Vec3;
  max: Vec3;
}

export function clampToArena(p: Vec3, bounds: ArenaBounds): Vec3 {
  return [
    Math.min(Math.max(p[0], bounds.min[0]), bounds.max[0]),
    Math.min(Math.max(p[1], bounds.min[1]), bounds.max[1]),
    Math.min(Math.max(p[2], bounds.min[2]), bounds.max[2]),
  ] as Vec3;
}

// Camera gauge: the payload's camera-frame (x, y) in meters maps linearly to
// gauge pixels; gaugeGain pixels per meter of camera offset.
export interface GaugeSpec {
  widthPx: number;
  heightPx: number;
  gain: number;
}

export function gaugeMarker(spec: GaugeSpec, camLoad: Vec3): ScreenPoint {
  return {
    x: spec.widthPx / 2 + camLoad[0] * spec.gain,
    y: spec.heightPx / 2 + camLoad[1] * spec.gain,
  };
}

export function distancePx(a: ScreenPoint, b: ScreenPoint): number {
  return Math.hypot(a.x - b.x, a.y - b.y);
}
