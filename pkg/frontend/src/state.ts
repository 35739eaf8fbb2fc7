// UI session state: everything drawn is derived from received telemetry
// frames plus local input state -- no client-side physics.

import { TelemetryFrame } from "./protocol.js";

export interface Series {
  t: number[];
  v: number[];
}

export interface UiSessionView {
  connected: boolean;
  latest: TelemetryFrame | null;
  frameSpacing: number; // nominal seconds between frames (from stream rate)
  windowS: number;      // ring-buffer span
  speed: Series;
  speedCmd: Series;
  tiltX: Series;
  tiltY: Series;
  torque: Series[];     // per motor
  margins: Series[];    // per omniwheel
  dropsTotal: number;
  phaseMarks: { t: number; label: string }[];
  toast: string | null;
}

export function createView(streamHz = 50, windowS = 30): UiSessionView {
  return {
    connected: false,
    latest: null,
    frameSpacing: 1 / streamHz,
    windowS,
    speed: { t: [], v: [] },
    speedCmd: { t: [], v: [] },
    tiltX: { t: [], v: [] },
    tiltY: { t: [], v: [] },
    torque: [0, 1, 2].map(() => ({ t: [], v: [] })),
    margins: [0, 1, 2].map(() => ({ t: [], v: [] })),
    dropsTotal: 0,
    phaseMarks: [],
    toast: null,
  };
}

function push(series: Series, t: number, v: number, windowS: number): void {
  series.t.push(t);
  series.v.push(v);
  const cutoff = t - windowS;
  let drop = 0;
  while (drop < series.t.length && series.t[drop] < cutoff) drop++;
  if (drop > 0) {
    series.t.splice(0, drop);
    series.v.splice(0, drop);
  }
}

function allSeries(view: UiSessionView): Series[] {
  return [view.speed, view.speedCmd, view.tiltX, view.tiltY,
          ...view.torque, ...view.margins];
}

// A NaN sample breaks the plotted line: charts show gaps instead of
// interpolating across missing frames.
function markGap(view: UiSessionView, t: number): void {
  for (const s of allSeries(view)) push(s, t, NaN, view.windowS);
}

export function pushFrame(view: UiSessionView, frame: TelemetryFrame,
                          drops = 0): void {
  const prev = view.latest;
  view.dropsTotal += drops;
  const gap = prev !== null
    && (frame.t - prev.t > 2.5 * view.frameSpacing || drops > 0);
  if (gap) markGap(view, (prev!.t + frame.t) / 2);
  view.latest = frame;
  const w = view.windowS;
  push(view.speed, frame.t, frame.speed, w);
  push(view.speedCmd, frame.t, Math.abs(frame.command.v), w);
  if (frame.planes) {
    push(view.tiltX, frame.t, frame.planes.x.theta, w);
    push(view.tiltY, frame.t, frame.planes.y.theta, w);
  } else if (frame.plane) {
    push(view.tiltY, frame.t, frame.plane.theta, w);
    push(view.tiltX, frame.t, 0, w);
  }
  frame.motors.u.forEach((u, i) => push(view.torque[i], frame.t, u, w));
  const margins = frame.margins ?? [NaN, NaN, NaN];
  margins.forEach((m, i) =>
    push(view.margins[i], frame.t, m === null ? NaN : m, w));
}

export function addPhaseMark(view: UiSessionView, label: string): void {
  if (view.latest) view.phaseMarks.push({ t: view.latest.t, label });
}
