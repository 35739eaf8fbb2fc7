// Offline telemetry-log replay: a .jsonl file with one telemetry frame per
// line drives the exact same view/render path as a live socket.

import { TelemetryFrame } from "./protocol.js";
import { createView, pushFrame, UiSessionView } from "./state.js";

export function parseJsonlLog(text: string): TelemetryFrame[] {
  const frames: TelemetryFrame[] = [];
  for (const line of text.split("\n")) {
    const s = line.trim();
    if (!s) continue;
    const obj = JSON.parse(s);
    // Accept either bare frames or full telemetry envelopes.
    frames.push(obj.type === "telemetry" ? obj.frame : obj);
  }
  frames.sort((a, b) => a.tick - b.tick);
  return frames;
}

export function viewFromFrames(frames: TelemetryFrame[],
                               streamHz = 50): UiSessionView {
  const view = createView(streamHz);
  view.connected = false;
  for (const f of frames) pushFrame(view, f, 0);
  return view;
}

export interface ReplayHandle {
  tick(nowMs: number): boolean; // false when the log is exhausted
  view: UiSessionView;
}

// Paced replay: frames are released according to their sim-time spacing.
export function startReplay(frames: TelemetryFrame[], streamHz = 50): ReplayHandle {
  const view = createView(streamHz);
  let i = 0;
  let t0ms: number | null = null;
  const base = frames.length ? frames[0].t : 0;
  return {
    view,
    tick(nowMs: number): boolean {
      if (t0ms === null) t0ms = nowMs;
      const simNow = base + (nowMs - t0ms) / 1000;
      while (i < frames.length && frames[i].t <= simNow) {
        pushFrame(view, frames[i], 0);
        i++;
      }
      return i < frames.length;
    },
  };
}
