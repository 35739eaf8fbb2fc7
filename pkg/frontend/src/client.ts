// Socket client: one websocket per session, commands sent on a fixed
// 20 Hz tick (latest input wins, nothing queued beyond one message), and
// telemetry surfaced through a callback.

import { decode, Incoming, makeCommand, Outgoing, TelemetryFrame } from "./protocol.js";
import { StickCommand } from "./input.js";

export const COMMAND_RATE_HZ = 20;

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
}

export interface ClientHooks {
  onFrame(frame: TelemetryFrame, drops: number): void;
  onAck?(msg: Incoming): void;
  onError?(detail: string): void;
  onOpen?(): void;
  onClose?(): void;
}

export class TeleopClient {
  private socket: SocketLike | null = null;
  private pendingInput: StickCommand | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  private hooks: ClientHooks;
  lastSendAt = -Infinity;

  constructor(hooks: ClientHooks) {
    this.hooks = hooks;
  }

  attach(socket: SocketLike): void {
    this.socket = socket;
    socket.onopen = () => this.hooks.onOpen?.();
    socket.onclose = () => {
      this.hooks.onClose?.();
      this.stop();
    };
    socket.onmessage = (ev) => {
      let msg: Incoming;
      try {
        msg = decode(ev.data);
      } catch (err) {
        this.hooks.onError?.(String(err));
        return;
      }
      if (msg.type === "telemetry") this.hooks.onFrame(msg.frame, msg.drops);
      else if (msg.type === "error") this.hooks.onError?.(msg.detail);
      else this.hooks.onAck?.(msg);
    };
    this.timer = setInterval(() => this.flush(), 1000 / COMMAND_RATE_HZ);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  // Record the latest input; it goes out with the next 20 Hz tick.  A
  // zero-deflection input is still sent explicitly (dead-man behaviour).
  setInput(cmd: StickCommand): void {
    this.pendingInput = cmd;
  }

  flush(): void {
    if (!this.socket || this.pendingInput === null) return;
    const c = this.pendingInput;
    this.pendingInput = null; // never queue more than the latest command
    this.send(makeCommand(c.v, c.heading, c.yawRate));
    this.lastSendAt = Date.now();
  }

  send(msg: Outgoing): void {
    this.socket?.send(JSON.stringify(msg));
  }

  control(action: "start" | "pause" | "reset"): void {
    this.send({ type: "control", action });
  }

  scenario(name: string): void {
    this.send({ type: "control", action: "scenario", name });
  }
}
