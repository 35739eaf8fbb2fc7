// Frame rendering: top-down heading rose, side tilt indicator, strip
// charts, and friction-margin gauges.  Every dynamic quantity comes from
// the received telemetry (the view), never from local simulation.

import { drawMarginGauges, drawStripChart, Surface } from "./charts.js";
import { UiSessionView } from "./state.js";

export interface RenderSurfaces {
  rose: Surface;
  tilt: Surface;
  speedChart: Surface;
  tiltChart: Surface;
  torqueChart: Surface;
  gauges: Surface;
}

// World-to-screen: OW1 axis (heading 0) points screen-down, matching the
// stick mapping where screen-up commands heading 180.
function worldToScreen(vx: number, vy: number): [number, number] {
  return [vy, vx];
}

export function drawHeadingRose(surface: Surface, view: UiSessionView): void {
  surface.clear();
  const cx = surface.width / 2;
  const cy = surface.height / 2;
  const R = Math.min(cx, cy) - 14;
  surface.circle(cx, cy, R, "#3a4350");
  for (let i = 0; i < 3; i++) {
    const az = (i * 2 * Math.PI) / 3; // OW azimuth in world frame
    const [dx, dy] = worldToScreen(Math.cos(az), Math.sin(az));
    surface.line([[cx, cy], [cx + R * dx, cy + R * dy]], "#55606c", 1);
    surface.text(`OW${i + 1}`, cx + (R + 4) * dx - 8, cy + (R + 8) * dy + 4,
                 "#8a97a6");
  }
  const f = view.latest;
  if (!f || !f.planes) return;
  // Velocity vector from the per-plane wheel speeds (plane y -> +x world).
  const speed = f.speed;
  if (speed > 1e-3) {
    const vx = f.planes.y.phi_dot;
    const vy = f.planes.x.phi_dot;
    const norm = Math.hypot(vx, vy);
    const [dx, dy] = worldToScreen(vx / norm, vy / norm);
    const len = R * Math.min(1, speed / 2.0);
    surface.line([[cx, cy], [cx + len * dx, cy + len * dy]], "#56b4e9", 3);
  }
  // Yaw needle.
  const yaw = f.planes.z.theta;
  const [nx, ny] = worldToScreen(Math.cos(yaw), Math.sin(yaw));
  surface.line([[cx, cy], [cx + 0.5 * R * nx, cy + 0.5 * R * ny]],
               "#e0c060", 2);
  surface.text(`v=${speed.toFixed(2)} m/s`, 6, surface.height - 6, "#56b4e9");
}

export function drawTiltIndicator(surface: Surface, view: UiSessionView): void {
  surface.clear();
  const f = view.latest;
  const cx = surface.width / 2;
  const base = surface.height - 12;
  const len = surface.height - 30;
  let tilt = 0;
  if (f?.planes) tilt = Math.hypot(f.planes.x.theta, f.planes.y.theta);
  else if (f?.plane) tilt = f.plane.theta;
  const failed = f?.flags.failed ?? false;
  // Exaggerate tilt 3x for visibility; the number is printed verbatim.
  const a = 3 * tilt;
  surface.line([[cx - 20, base], [cx + 20, base]], "#55606c", 2);
  surface.line([[cx, base], [cx + len * Math.sin(a), base - len * Math.cos(a)]],
               failed ? "#d14b4b" : "#3fa66a", 4);
  surface.text(`tilt ${(tilt * 180 / Math.PI).toFixed(2)} deg`, 6, 12,
               failed ? "#d14b4b" : "#8a97a6");
  if (failed) surface.text("BALANCE FAILURE - reset", 6, 26, "#d14b4b");
}

export function renderView(view: UiSessionView, s: RenderSurfaces): void {
  const tNow = view.latest?.t ?? 0;
  drawHeadingRose(s.rose, view);
  drawTiltIndicator(s.tilt, view);
  drawStripChart(s.speedChart, {
    series: [
      { data: view.speed, color: "#56b4e9", label: "v" },
      { data: view.speedCmd, color: "#8a97a6", label: "|v cmd|" },
    ],
    marks: view.phaseMarks,
    windowS: view.windowS,
    yLabel: "speed m/s",
  }, tNow);
  drawStripChart(s.tiltChart, {
    series: [
      { data: view.tiltX, color: "#e0c060", label: "theta_x" },
      { data: view.tiltY, color: "#3fa66a", label: "theta_y" },
    ],
    marks: view.phaseMarks,
    windowS: view.windowS,
    yLabel: "tilt rad",
  }, tNow);
  drawStripChart(s.torqueChart, {
    series: view.torque.map((data, i) => ({
      data,
      color: ["#56b4e9", "#e0c060", "#3fa66a"][i],
      label: `u${i + 1}`,
    })),
    marks: view.phaseMarks,
    windowS: view.windowS,
    yLabel: "torque N m",
  }, tNow);
  drawMarginGauges(s.gauges, view.latest?.margins ?? null, 400);
}
