// Wire schema shared with the bridge service (version 1).

export const SCHEMA_VERSION = 1;

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];

export interface TelemetryFrame {
  type: "telemetry";
  t: number;
  quad_pos: Vec3;
  quad_att: Quat;
  load_pos: Vec3;
  cable_dir: Vec3;
  mode: 0 | 1; // 0 slack, 1 taut
  cam_load: Vec3;
  thrust_cmd: number;
  rates_cmd: Vec3;
  fov_inside: boolean;
  controller: string;
}

export interface HelloMessage {
  type: "hello";
  schema: number;
}

export interface AckMessage {
  type: "ack";
  ok: boolean;
  kind?: string;
  error?: string;
}

export type ServerMessage = TelemetryFrame | HelloMessage | AckMessage;

export type CommandKind =
  | "grab"
  | "move_to"
  | "release"
  | "impulse"
  | "set_reference"
  | "select_controller";

export interface OperatorCommand {
  kind: CommandKind;
  point?: Vec3;
  vector?: Vec3;
  controller?: string;
  timestamp: number;
}

function isVec3(v: unknown): v is Vec3 {
  return Array.isArray(v) && v.length === 3 && v.every((x) => typeof x === "number");
}

function isQuat(v: unknown): v is Quat {
  return Array.isArray(v) && v.length === 4 && v.every((x) => typeof x === "number");
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: Record<string, unknown>;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (data === null || typeof data !== "object") return null;
  switch (data.type) {
    case "hello":
      return typeof data.schema === "number" ? { type: "hello", schema: data.schema } : null;
    case "ack":
      if (typeof data.ok !== "boolean") return null;
      return {
        type: "ack",
        ok: data.ok,
        kind: typeof data.kind === "string" ? data.kind : undefined,
        error: typeof data.error === "string" ? data.error : undefined,
      };
    case "telemetry": {
      if (
        typeof data.t !== "number" ||
        !isVec3(data.quad_pos) ||
        !isQuat(data.quad_att) ||
        !isVec3(data.load_pos) ||
        !isVec3(data.cable_dir) ||
        (data.mode !== 0 && data.mode !== 1) ||
        !isVec3(data.cam_load) ||
        typeof data.thrust_cmd !== "number" ||
        !isVec3(data.rates_cmd) ||
        typeof data.fov_inside !== "boolean" ||
        typeof data.controller !== "string"
      ) {
        return null;
      }
      return data as unknown as TelemetryFrame;
    }
    default:
      return null;
  }
}

export function encodeCommand(cmd: OperatorCommand): string {
  return JSON.stringify(cmd);
}
