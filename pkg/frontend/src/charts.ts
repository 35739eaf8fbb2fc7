// Canvas strip charts and gauges, written against a minimal 2D-context
// surface so rendering is testable without a browser canvas.

import { Series } from "./state.js";

export interface Surface {
  width: number;
  height: number;
  clear(): void;
  line(points: [number, number][], color: string, width?: number): void;
  rect(x: number, y: number, w: number, h: number, color: string): void;
  text(s: string, x: number, y: number, color: string): void;
  circle(x: number, y: number, r: number, color: string, fill?: boolean): void;
}

// Adapter from a real CanvasRenderingContext2D.
export function canvasSurface(ctx: CanvasRenderingContext2D, width: number,
                              height: number): Surface {
  return {
    width,
    height,
    clear: () => {
      ctx.fillStyle = "#101418";
      ctx.fillRect(0, 0, width, height);
    },
    line: (points, color, w = 1.5) => {
      if (points.length < 2) return;
      ctx.strokeStyle = color;
      ctx.lineWidth = w;
      ctx.beginPath();
      let pen = false;
      for (const [x, y] of points) {
        if (Number.isNaN(x) || Number.isNaN(y)) {
          pen = false;
          continue;
        }
        if (pen) ctx.lineTo(x, y);
        else ctx.moveTo(x, y);
        pen = true;
      }
      ctx.stroke();
    },
    rect: (x, y, w, h, color) => {
      ctx.fillStyle = color;
      ctx.fillRect(x, y, w, h);
    },
    text: (s, x, y, color) => {
      ctx.fillStyle = color;
      ctx.font = "11px monospace";
      ctx.fillText(s, x, y);
    },
    circle: (x, y, r, color, fill = false) => {
      ctx.beginPath();
      ctx.arc(x, y, r, 0, 2 * Math.PI);
      if (fill) {
        ctx.fillStyle = color;
        ctx.fill();
      } else {
        ctx.strokeStyle = color;
        ctx.lineWidth = 1.5;
        ctx.stroke();
      }
    },
  };
}

export interface ChartSpec {
  series: { data: Series; color: string; label: string }[];
  marks?: { t: number; label: string }[];
  windowS: number;
  yLabel: string;
}

export function drawStripChart(surface: Surface, spec: ChartSpec,
                               tNow: number): void {
  surface.clear();
  const t0 = tNow - spec.windowS;
  let lo = Infinity;
  let hi = -Infinity;
  for (const s of spec.series) {
    for (const v of s.data.v) {
      if (Number.isNaN(v)) continue;
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!Number.isFinite(lo)) {
    lo = -1;
    hi = 1;
  }
  if (hi - lo < 1e-9) {
    hi += 0.5;
    lo -= 0.5;
  }
  const pad = 0.08 * (hi - lo);
  lo -= pad;
  hi += pad;
  const xOf = (t: number) => ((t - t0) / spec.windowS) * surface.width;
  const yOf = (v: number) => surface.height * (1 - (v - lo) / (hi - lo));
  if (lo < 0 && hi > 0) {
    surface.line([[0, yOf(0)], [surface.width, yOf(0)]], "#3a4350", 1);
  }
  for (const mark of spec.marks ?? []) {
    if (mark.t >= t0 && mark.t <= tNow) {
      surface.line([[xOf(mark.t), 0], [xOf(mark.t), surface.height]],
                   "#905050", 1);
      surface.text(mark.label, xOf(mark.t) + 2, 10, "#b08080");
    }
  }
  spec.series.forEach((s, i) => {
    const pts: [number, number][] = s.data.t.map((t, k) => {
      const v = s.data.v[k];
      return [xOf(t), Number.isNaN(v) ? NaN : yOf(v)] as [number, number];
    });
    surface.line(pts, s.color);
    surface.text(s.label, 4, 12 + 12 * i, s.color);
  });
  surface.text(`${spec.yLabel}  [${lo.toFixed(2)}, ${hi.toFixed(2)}]`,
               4, surface.height - 4, "#8a97a6");
}

export const MARGIN_OK = "#3fa66a";
export const MARGIN_ALARM = "#d14b4b";
export const MARGIN_UNKNOWN = "#6b7683";

export function drawMarginGauges(surface: Surface,
                                 margins: (number | null)[] | null,
                                 fullScale: number): void {
  surface.clear();
  const n = 3;
  const bw = surface.width / n;
  for (let i = 0; i < n; i++) {
    const m = margins?.[i] ?? null;
    const x = i * bw + 6;
    const w = bw - 12;
    let color = MARGIN_UNKNOWN;
    let frac = 0;
    if (m !== null && !Number.isNaN(m)) {
      color = m < 0 ? MARGIN_ALARM : MARGIN_OK;
      frac = Math.max(0, Math.min(1, m / fullScale));
    }
    surface.rect(x, 14, w, surface.height - 30, "#1d242c");
    const h = (surface.height - 30) * frac;
    surface.rect(x, 14 + (surface.height - 30) - h, w, h, color);
    surface.text(`OW${i + 1}`, x, 11, "#8a97a6");
    surface.text(m === null || Number.isNaN(m) ? "n/a" : m.toFixed(0),
                 x, surface.height - 4, color);
  }
}
