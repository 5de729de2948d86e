// Browser wiring: settings panel, joystick widget, map + vitals render
// loop, and the feed charts. All the logic lives in the other modules;
// this file only touches the DOM.

import { StateFrame, safetyBadge } from "./frames.js";
import { SimLink, LinkStatus } from "./link.js";
import { JoystickLoop, attachPointer, StickVector } from "./joystick.js";
import { TrailBuffer, drawMap } from "./map.js";
import { FeedPoller, FeedUpdate, ParsedFeeds, FeedSeries } from "./feeds.js";
import { drawChart } from "./chart.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function canvasCtx(id: string): [HTMLCanvasElement, CanvasRenderingContext2D] {
  const canvas = el<HTMLCanvasElement>(id);
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error(`no 2d context on #${id}`);
  return [canvas, ctx];
}

const wsInput = el<HTMLInputElement>("ws-url");
const feedInput = el<HTMLInputElement>("feed-url");
const banner = el<HTMLDivElement>("banner");
const stopBadge = el<HTMLDivElement>("stop-badge");
const staleBadge = el<HTMLSpanElement>("stale-badge");
const feedEmpty = el<HTMLDivElement>("feed-empty");

wsInput.value = localStorage.getItem("chairsim.ws") ?? "ws://127.0.0.1:8765";
feedInput.value =
  localStorage.getItem("chairsim.feed") ?? "http://127.0.0.1:8100/channels/1/feeds.json";

const [mapCanvas, mapCtx] = canvasCtx("map");
const [stickCanvas, stickCtx] = canvasCtx("stick");
const trail = new TrailBuffer();

// --- simulator link -------------------------------------------------------

const STATUS_TEXT: Record<LinkStatus, string> = {
  connecting: "connecting...",
  open: "connected",
  closed: "disconnected",
  busy: "another operator is connected (try later)",
};

let link: SimLink | null = null;

function onStatus(status: LinkStatus): void {
  banner.textContent = STATUS_TEXT[status];
  banner.className = status === "open" ? "banner ok" : "banner down";
  stick.setEnabled(status === "open");
  drawStick(stick.vector);
}

function onFrame(frame: StateFrame): void {
  trail.push(frame.t, frame.pose.x, frame.pose.y);
}

el<HTMLButtonElement>("connect").addEventListener("click", () => {
  localStorage.setItem("chairsim.ws", wsInput.value);
  if (link) link.close();
  link = new SimLink(wsInput.value, { onStatus, onFrame });
  link.connect();
});

// --- joystick -------------------------------------------------------------

function drawStick(v: StickVector): void {
  const w = stickCanvas.width;
  const h = stickCanvas.height;
  stickCtx.clearRect(0, 0, w, h);
  stickCtx.beginPath();
  stickCtx.arc(w / 2, h / 2, w / 2 - 4, 0, Math.PI * 2);
  stickCtx.strokeStyle = stick ? "#39414d" : "#222";
  stickCtx.lineWidth = 2;
  stickCtx.stroke();
  stickCtx.beginPath();
  stickCtx.arc(w / 2 + (v.x * (w / 2 - 14)), h / 2 - (v.y * (h / 2 - 14)), 12, 0, Math.PI * 2);
  stickCtx.fillStyle = link && link.state === "open" ? "#e0a93e" : "#555";
  stickCtx.fill();
}

const stick = new JoystickLoop((v) => {
  if (link) link.send(v.x, v.y);
  drawStick(v);
});
stick.setEnabled(false);
attachPointer(stickCanvas, stick);
drawStick({ x: 0, y: 0 });

// --- state frame rendering ------------------------------------------------

const hrOut = el<HTMLSpanElement>("hr-out");
const bpOut = el<HTMLSpanElement>("bp-out");
const tempOut = el<HTMLSpanElement>("temp-out");
const stepsOut = el<HTMLSpanElement>("steps-out");
const distOut = el<HTMLSpanElement>("dist-out");
const commandOut = el<HTMLSpanElement>("command-out");
const pinsOut = el<HTMLSpanElement>("pins-out");
const uploadOut = el<HTMLSpanElement>("upload-out");
const lcd1 = el<HTMLDivElement>("lcd1");
const lcd2 = el<HTMLDivElement>("lcd2");

function renderFrame(frame: StateFrame): void {
  drawMap(mapCtx, mapCanvas.width, mapCanvas.height, frame, trail);

  const badge = safetyBadge(frame);
  stopBadge.textContent = badge.text;
  stopBadge.className = badge.stop ? "badge stop" : "badge clear";

  const v = frame.vitals;
  hrOut.textContent = v.heart_rate === null ? "---" : `${v.heart_rate} bpm`;
  bpOut.textContent = `${v.systolic}/${v.diastolic}`;
  tempOut.textContent = `${v.temp_c.toFixed(1)} C`;
  stepsOut.textContent = `${v.steps}`;
  distOut.textContent = frame.distance === null ? "clear" : `${frame.distance.toFixed(2)} m`;
  commandOut.textContent = frame.command;
  const p = frame.pins;
  pinsOut.textContent = `${p.en1}${p.in1}${p.in2} ${p.en2}${p.in3}${p.in4}`;
  lcd1.textContent = frame.display[0];
  lcd2.textContent = frame.display[1];

  const up = frame.last_upload;
  if (up === null) {
    uploadOut.textContent = "none yet";
  } else {
    const id = "entry_id" in up ? ` #${up.entry_id}` : "";
    uploadOut.textContent = `${up.status}${id} at ${up.created_at}`;
  }
}

function renderLoop(): void {
  if (link) {
    const frame = link.slot.take();
    if (frame) renderFrame(frame);
  }
  requestAnimationFrame(renderLoop);
}
requestAnimationFrame(renderLoop);

// --- feed charts ----------------------------------------------------------

const chartIds: Array<[string, string[]]> = [
  ["chart-hr", ["field1"]],
  ["chart-bp", ["field2", "field3"]],
  ["chart-temp", ["field4"]],
  ["chart-steps", ["field5"]],
];

function pick(feeds: ParsedFeeds, fields: string[]): FeedSeries[] {
  return feeds.series.filter((s) => fields.includes(s.field));
}

function renderFeeds(update: FeedUpdate): void {
  staleBadge.style.display = update.stale ? "inline" : "none";
  const feeds = update.feeds;
  if (feeds === null) return; // nothing fetched yet, keep the empty state
  feedEmpty.style.display = feeds.entryCount === 0 ? "block" : "none";
  for (const [id, fields] of chartIds) {
    const [canvas, ctx] = canvasCtx(id);
    drawChart(ctx, canvas.width, canvas.height, pick(feeds, fields));
  }
}

let poller: FeedPoller | null = null;

el<HTMLButtonElement>("poll").addEventListener("click", () => {
  localStorage.setItem("chairsim.feed", feedInput.value);
  if (poller) poller.stop();
  poller = new FeedPoller(feedInput.value, renderFeeds);
  poller.start();
});
