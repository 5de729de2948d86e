import { describe, expect, it } from "vitest";
import { CHART_STYLE, drawChart } from "../src/chart.js";
import { FeedSeries } from "../src/feeds.js";
import { Ctx2D } from "../src/map.js";

class RecordingCtx implements Ctx2D {
  fillStyle: unknown = "";
  strokeStyle: unknown = "";
  lineWidth = 1;
  ops: Array<{ op: string; args: unknown[] }> = [];

  clearRect(...args: number[]) { this.ops.push({ op: "clearRect", args }); }
  fillRect(...args: number[]) { this.ops.push({ op: "fillRect", args }); }
  beginPath() { this.ops.push({ op: "beginPath", args: [] }); }
  moveTo(...args: number[]) { this.ops.push({ op: "moveTo", args }); }
  lineTo(...args: number[]) { this.ops.push({ op: "lineTo", args }); }
  arc(...args: number[]) { this.ops.push({ op: "arc", args }); }
  closePath() { this.ops.push({ op: "closePath", args: [] }); }
  stroke() { this.ops.push({ op: "stroke", args: [] }); }
  fill() { this.ops.push({ op: "fill", args: [] }); }
  fillText(...args: unknown[]) { this.ops.push({ op: "fillText", args }); }

  count(op: string): number {
    return this.ops.filter((o) => o.op === op).length;
  }
}

function series(field: string, values: Array<number | null>): FeedSeries {
  return {
    field,
    name: field,
    points: values.map((value, i) => ({
      t: Date.parse("2024-01-01T00:00:15Z") + i * 15_000,
      entryId: i + 1,
      value,
    })),
  };
}

describe("drawChart", () => {
  it("draws one dot per value and keeps one slot per entry", () => {
    const ctx = new RecordingCtx();
    const summary = drawChart(ctx, 280, 140, [series("field1", [75, null, 76, 74])]);
    expect(summary.pointCount).toBe(4); // entries, gap included
    expect(summary.pointsDrawn).toBe(3); // dots, gap excluded
    expect(summary.empty).toBe(false);
    expect(ctx.count("arc")).toBe(3);
  });

  it("breaks the line at gaps instead of bridging them", () => {
    const ctx = new RecordingCtx();
    const summary = drawChart(ctx, 280, 140, [series("field1", [75, null, 76, 74])]);
    expect(summary.segments).toBe(2);
    // only the two-point run gets a polyline; axis uses one lineTo too
    const lineTos = ctx.count("lineTo");
    expect(lineTos).toBe(2); // 1 axis + 1 segment continuation
  });

  it("shows the empty state when there are no values", () => {
    const ctx = new RecordingCtx();
    const summary = drawChart(ctx, 280, 140, [series("field1", [])]);
    expect(summary.empty).toBe(true);
    expect(summary.pointsDrawn).toBe(0);
    expect(ctx.count("fillText")).toBe(1);
  });

  it("treats an all-gap series as empty", () => {
    const summary = drawChart(new RecordingCtx(), 280, 140, [series("field1", [null, null])]);
    expect(summary.empty).toBe(true);
    expect(summary.pointCount).toBe(2);
  });

  it("plots multiple series on one chart", () => {
    const ctx = new RecordingCtx();
    const summary = drawChart(ctx, 280, 140, [
      series("field2", [120, 121, 119]),
      series("field3", [80, 79, 81]),
    ]);
    expect(summary.pointsDrawn).toBe(6);
    expect(summary.segments).toBe(2);
  });

  it("copes with a single point", () => {
    const ctx = new RecordingCtx();
    const summary = drawChart(ctx, 280, 140, [series("field4", [36.5])]);
    expect(summary.pointsDrawn).toBe(1);
    expect(summary.empty).toBe(false);
  });

  it("cycles colors per series", () => {
    expect(CHART_STYLE.colors.length).toBeGreaterThanOrEqual(2);
  });
});
