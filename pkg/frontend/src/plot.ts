// Minimal canvas line chart: seven fixed-color emotion series on a shared
// 0..1 axis, with activity markers pinned at their dt. No chart library;
// redraws are O(points) and fine at one frame per second for an hour.

import { EMOTIONS, formatClock } from "./efs.js";
import { ActivityMarker } from "./state.js";

export const SERIES_COLORS = [
  "#d62728", // anger
  "#8c564b", // disgust
  "#9467bd", // fear
  "#ffbf00", // happiness
  "#1f77b4", // sadness
  "#ff7f0e", // surprise
  "#7f7f7f", // neutral
] as const;

export interface PlotData {
  points: { dtMs: number; values: number[] }[];
  activities: ActivityMarker[];
}

const PAD = { left: 44, right: 12, top: 10, bottom: 22 };

export class EmotionPlot {
  private ctx: CanvasRenderingContext2D;

  constructor(private canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
  }

  draw(data: PlotData): void {
    const { ctx, canvas } = this;
    const w = canvas.width;
    const h = canvas.height;
    ctx.clearRect(0, 0, w, h);
    const x0 = PAD.left, x1 = w - PAD.right;
    const y0 = h - PAD.bottom, y1 = PAD.top;

    const dts = data.points.map((p) => p.dtMs);
    const tMin = dts.length ? dts[0] : 0;
    const tMax = dts.length ? Math.max(dts[dts.length - 1], tMin + 1000) : 1000;
    const xOf = (dt: number) => x0 + ((dt - tMin) / (tMax - tMin)) * (x1 - x0);
    const yOf = (v: number) => y0 - v * (y0 - y1);

    // axes and 0/50/100% gridlines
    ctx.strokeStyle = "#ccc";
    ctx.fillStyle = "#666";
    ctx.font = "11px sans-serif";
    ctx.lineWidth = 1;
    for (const frac of [0, 0.5, 1]) {
      const y = yOf(frac);
      ctx.beginPath();
      ctx.moveTo(x0, y);
      ctx.lineTo(x1, y);
      ctx.stroke();
      ctx.fillText(`${Math.round(frac * 100)}%`, 6, y + 4);
    }
    for (const dt of [tMin, (tMin + tMax) / 2, tMax]) {
      ctx.fillText(formatClock(dt), xOf(dt) - 14, h - 6);
    }

    // series
    for (let s = 0; s < EMOTIONS.length; s++) {
      ctx.strokeStyle = SERIES_COLORS[s];
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      data.points.forEach((p, i) => {
        const x = xOf(p.dtMs);
        const y = yOf(p.values[s]);
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
    }

    // activity markers
    for (const act of data.activities) {
      const x = xOf(act.dtMs);
      ctx.strokeStyle = act.status === "saved" ? "#2ca02c"
        : act.status === "pending" ? "#999" : "#d62728";
      ctx.setLineDash(act.status === "saved" ? [] : [4, 3]);
      ctx.beginPath();
      ctx.moveTo(x, y1);
      ctx.lineTo(x, y0);
      ctx.stroke();
      ctx.setLineDash([]);
    }
  }
}

/** Build the fixed, labeled legend next to the plot. */
export function renderLegend(container: HTMLElement): void {
  container.innerHTML = "";
  EMOTIONS.forEach((name, i) => {
    const item = document.createElement("span");
    item.className = "legend-item";
    const swatch = document.createElement("span");
    swatch.className = "legend-swatch";
    swatch.style.backgroundColor = SERIES_COLORS[i];
    item.appendChild(swatch);
    item.appendChild(document.createTextNode(name));
    container.appendChild(item);
  });
}
