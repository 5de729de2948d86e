// Minimal time-series chart: dots for every value, line segments only
// within gap-free runs. Values are plotted exactly as parsed.

import { Ctx2D } from "./map.js";
import { FeedSeries, SeriesPoint, gapSegments } from "./feeds.js";

export interface ChartStyle {
  background: string;
  axis: string;
  colors: string[];
  padding: number;
}

export const CHART_STYLE: ChartStyle = {
  background: "#10141a",
  axis: "#39414d",
  colors: ["#e0a93e", "#d35a5a", "#5a9bd3", "#67c587"],
  padding: 8,
};

export interface ChartSummary {
  pointsDrawn: number; // dots, i.e. non-null values
  pointCount: number; // one slot per feed entry, gaps included
  segments: number;
  empty: boolean;
}

interface TextCtx extends Ctx2D {
  fillText?(text: string, x: number, y: number): void;
}

export function drawChart(
  ctx: TextCtx,
  width: number,
  height: number,
  seriesList: FeedSeries[],
  style: ChartStyle = CHART_STYLE,
): ChartSummary {
  ctx.fillStyle = style.background;
  ctx.fillRect(0, 0, width, height);

  const all: SeriesPoint[] = seriesList.flatMap((s) => s.points);
  const values = all.filter((p) => p.value !== null).map((p) => p.value as number);
  const pointCount = seriesList.length > 0 ? seriesList[0].points.length : 0;

  if (values.length === 0) {
    if (ctx.fillText) {
      ctx.fillStyle = style.axis;
      ctx.fillText("no data yet", width / 2 - 30, height / 2);
    }
    return { pointsDrawn: 0, pointCount, segments: 0, empty: true };
  }

  const pad = style.padding;
  let tMin = Infinity;
  let tMax = -Infinity;
  for (const p of all) {
    if (p.t < tMin) tMin = p.t;
    if (p.t > tMax) tMax = p.t;
  }
  let vMin = Math.min(...values);
  let vMax = Math.max(...values);
  if (vMin === vMax) {
    vMin -= 1;
    vMax += 1;
  }
  const tSpan = tMax === tMin ? 1 : tMax - tMin;
  const toX = (t: number) => pad + ((t - tMin) / tSpan) * (width - 2 * pad);
  const toY = (v: number) => height - pad - ((v - vMin) / (vMax - vMin)) * (height - 2 * pad);

  ctx.strokeStyle = style.axis;
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(pad, height - pad);
  ctx.lineTo(width - pad, height - pad);
  ctx.stroke();

  let pointsDrawn = 0;
  let segments = 0;
  seriesList.forEach((series, i) => {
    const color = style.colors[i % style.colors.length];
    for (const run of gapSegments(series.points)) {
      segments += 1;
      if (run.length > 1) {
        ctx.beginPath();
        ctx.moveTo(toX(run[0].t), toY(run[0].value as number));
        for (let j = 1; j < run.length; j++) {
          ctx.lineTo(toX(run[j].t), toY(run[j].value as number));
        }
        ctx.strokeStyle = color;
        ctx.lineWidth = 1.5;
        ctx.stroke();
      }
      for (const p of run) {
        ctx.beginPath();
        ctx.arc(toX(p.t), toY(p.value as number), 2.5, 0, Math.PI * 2);
        ctx.fillStyle = color;
        ctx.fill();
        pointsDrawn += 1;
      }
    }
  });

  return { pointsDrawn, pointCount, segments, empty: false };
}
