// Wire protocol (proto_version 1) spoken with the simulation service.
// JSON messages with a `type` field; telemetry frames are pure sim state
// (no wall-clock fields), which is what makes offline log replay exact.

export const PROTO_VERSION = 1;

export interface PlaneState {
  theta: number;
  theta_dot: number;
  phi_dot: number;
}

export interface TelemetryFrame {
  t: number;
  tick: number;
  status: "running" | "paused" | "failed";
  command: { v: number; heading: number; yaw_rate: number };
  active: number[];
  motors: { u: number[] };
  flags: { failed: boolean; slip: boolean };
  planes?: { x: PlaneState; y: PlaneState; z: { theta: number; omega: number } };
  plane?: { theta: number; phi: number; theta_dot: number; phi_dot: number };
  position: { x?: number; y?: number };
  margins?: number[] | null;
  speed: number;
}

export interface CommandMessage {
  type: "command";
  v: number;
  heading: number;
  yaw_rate: number;
}

export interface ControlMessage {
  type: "control";
  action: "start" | "pause" | "reset" | "set_param" | "scenario";
  name?: string;
  value?: number;
}

export type Outgoing = CommandMessage | ControlMessage;

export interface TelemetryMessage {
  type: "telemetry";
  proto_version: number;
  frame: TelemetryFrame;
  drops: number;
}

export interface AckMessage {
  type: "ack";
  proto_version: number;
  of: string;
  [key: string]: unknown;
}

export interface ErrorMessage {
  type: "error";
  proto_version: number;
  detail: string;
}

export type Incoming = TelemetryMessage | AckMessage | ErrorMessage;

export function makeCommand(v: number, heading: number, yawRate: number): CommandMessage {
  return { type: "command", v, heading, yaw_rate: yawRate };
}

export function decode(raw: string): Incoming {
  const msg = JSON.parse(raw);
  if (typeof msg !== "object" || msg === null || typeof msg.type !== "string") {
    throw new Error("malformed message");
  }
  if (msg.proto_version !== undefined && msg.proto_version !== PROTO_VERSION) {
    throw new Error(`protocol version mismatch: got ${msg.proto_version}`);
  }
  return msg as Incoming;
}
