// Top-down map: obstacles, the chair with a heading arrow, the 5-ray
// sensor fan (red while blocked), and the last 30 s of poses as a trail.
// The view stays centered on the chair, north up.

import { StateFrame } from "./frames.js";

export const RAY_COUNT = 5;
export const MAX_RANGE_M = 2.5;
export const TRAIL_KEEP_MS = 30_000;

export interface TrailPoint {
  t: number;
  x: number;
  y: number;
}

export class TrailBuffer {
  private buf: TrailPoint[] = [];

  constructor(private readonly keepMs: number = TRAIL_KEEP_MS) {}

  push(t: number, x: number, y: number): void {
    const last = this.buf[this.buf.length - 1];
    if (last && t < last.t) this.buf = []; // sim restarted, old trail is stale
    this.buf.push({ t, x, y });
    const cutoff = t - this.keepMs;
    let drop = 0;
    while (drop < this.buf.length && this.buf[drop].t < cutoff) drop += 1;
    if (drop > 0) this.buf = this.buf.slice(drop);
  }

  points(): readonly TrailPoint[] {
    return this.buf;
  }
}

// Just the 2D-context surface the renderer touches, so tests can hand in
// a recording stand-in instead of a real canvas. The style properties
// are unknown-typed because the DOM allows gradients there too.
export interface Ctx2D {
  fillStyle: unknown;
  strokeStyle: unknown;
  lineWidth: number;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  stroke(): void;
  fill(): void;
}

export interface MapStyle {
  scale: number; // pixels per meter
  background: string;
  obstacle: string;
  trail: string;
  chair: string;
  fanBlocked: string;
  fanFree: string;
}

export const DEFAULT_STYLE: MapStyle = {
  scale: 60,
  background: "#10141a",
  obstacle: "#5a6472",
  trail: "#3b6ea5",
  chair: "#e8e3d3",
  fanBlocked: "#d33c3c",
  fanFree: "#6f7a66",
};

export interface MapSummary {
  obstaclesDrawn: number;
  rays: number;
  fanColor: string;
  trailPoints: number;
}

export function drawMap(
  ctx: Ctx2D,
  width: number,
  height: number,
  frame: StateFrame,
  trail: TrailBuffer,
  style: MapStyle = DEFAULT_STYLE,
): MapSummary {
  const s = style.scale;
  const pose = frame.pose;
  const toX = (wx: number) => width / 2 + (wx - pose.x) * s;
  const toY = (wy: number) => height / 2 - (wy - pose.y) * s;

  ctx.fillStyle = style.background;
  ctx.fillRect(0, 0, width, height);

  for (const o of frame.obstacles) {
    ctx.beginPath();
    ctx.arc(toX(o.cx), toY(o.cy), o.radius * s, 0, Math.PI * 2);
    ctx.fillStyle = style.obstacle;
    ctx.fill();
  }

  const pts = trail.points();
  if (pts.length > 1) {
    ctx.beginPath();
    ctx.moveTo(toX(pts[0].x), toY(pts[0].y));
    for (let i = 1; i < pts.length; i++) ctx.lineTo(toX(pts[i].x), toY(pts[i].y));
    ctx.strokeStyle = style.trail;
    ctx.lineWidth = 2;
    ctx.stroke();
  }

  // sensor fan from the ranger position, spread across the beam
  const half = frame.chair.beam_half_angle;
  const sx = pose.x + Math.cos(pose.heading) * frame.chair.sensor_offset;
  const sy = pose.y + Math.sin(pose.heading) * frame.chair.sensor_offset;
  const reach = frame.distance === null ? MAX_RANGE_M : frame.distance;
  const fanColor = frame.blocked ? style.fanBlocked : style.fanFree;
  ctx.strokeStyle = fanColor;
  ctx.lineWidth = 1;
  for (let k = 0; k < RAY_COUNT; k++) {
    const a = pose.heading + half * (k / ((RAY_COUNT - 1) / 2) - 1);
    ctx.beginPath();
    ctx.moveTo(toX(sx), toY(sy));
    ctx.lineTo(toX(sx + Math.cos(a) * reach), toY(sy + Math.sin(a) * reach));
    ctx.stroke();
  }

  // chair body: a triangle pointing along the heading
  const w = frame.chair.track_width;
  const nose = { x: pose.x + Math.cos(pose.heading) * w, y: pose.y + Math.sin(pose.heading) * w };
  const left = {
    x: pose.x + Math.cos(pose.heading + (Math.PI * 3) / 4) * (w / 1.4),
    y: pose.y + Math.sin(pose.heading + (Math.PI * 3) / 4) * (w / 1.4),
  };
  const right = {
    x: pose.x + Math.cos(pose.heading - (Math.PI * 3) / 4) * (w / 1.4),
    y: pose.y + Math.sin(pose.heading - (Math.PI * 3) / 4) * (w / 1.4),
  };
  ctx.beginPath();
  ctx.moveTo(toX(nose.x), toY(nose.y));
  ctx.lineTo(toX(left.x), toY(left.y));
  ctx.lineTo(toX(right.x), toY(right.y));
  ctx.closePath();
  ctx.fillStyle = style.chair;
  ctx.fill();

  return {
    obstaclesDrawn: frame.obstacles.length,
    rays: RAY_COUNT,
    fanColor,
    trailPoints: pts.length,
  };
}
