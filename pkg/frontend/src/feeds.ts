// Channel history from the telemetry service's feeds.json endpoint,
// polled every 15 s. Every entry becomes exactly one point per named
// field; a missing field is a gap (null), never a zero, and values are
// taken as-is with no smoothing.

export const POLL_MS = 15_000;

export interface SeriesPoint {
  t: number; // ms since epoch, from created_at
  entryId: number;
  value: number | null;
}

export interface FeedSeries {
  field: string; // "field1".."field8"
  name: string; // channel's label for it
  points: SeriesPoint[];
}

export interface ParsedFeeds {
  channelName: string;
  entryCount: number;
  series: FeedSeries[];
}

function isObj(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

export function parseFeeds(doc: unknown): ParsedFeeds | null {
  if (!isObj(doc) || !isObj(doc.channel) || !Array.isArray(doc.feeds)) return null;
  const channel = doc.channel;
  if (typeof channel.name !== "string") return null;

  const fields: Array<{ field: string; name: string }> = [];
  for (let i = 1; i <= 8; i++) {
    const name = channel[`field${i}`];
    if (typeof name === "string") fields.push({ field: `field${i}`, name });
  }

  const series: FeedSeries[] = fields.map((f) => ({ ...f, points: [] }));
  for (const row of doc.feeds) {
    if (!isObj(row)) return null;
    const stamp = row.created_at;
    const entryId = row.entry_id;
    if (typeof stamp !== "string" || typeof entryId !== "number") return null;
    const t = Date.parse(stamp);
    if (Number.isNaN(t)) return null;
    for (const s of series) {
      const raw = row[s.field];
      let value: number | null = null;
      if (typeof raw === "string" && raw !== "") {
        const n = Number(raw);
        value = Number.isFinite(n) ? n : null;
      } else if (typeof raw === "number" && Number.isFinite(raw)) {
        value = raw;
      }
      s.points.push({ t, entryId, value });
    }
  }

  return { channelName: channel.name, entryCount: doc.feeds.length, series };
}

/** Consecutive runs of real values; a null point ends the current run. */
export function gapSegments(points: readonly SeriesPoint[]): SeriesPoint[][] {
  const segments: SeriesPoint[][] = [];
  let run: SeriesPoint[] = [];
  for (const p of points) {
    if (p.value === null) {
      if (run.length > 0) segments.push(run);
      run = [];
    } else {
      run.push(p);
    }
  }
  if (run.length > 0) segments.push(run);
  return segments;
}

export interface FeedUpdate {
  feeds: ParsedFeeds | null; // last good parse, kept across failures
  stale: boolean;
}

export type FetchLike = (url: string) => Promise<{ ok: boolean; json(): Promise<unknown> }>;

export class FeedPoller {
  private last: ParsedFeeds | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  private readonly fetchFn: FetchLike;

  constructor(
    private url: string,
    private readonly onUpdate: (u: FeedUpdate) => void,
    opts: { intervalMs?: number; fetchFn?: FetchLike } = {},
  ) {
    this.fetchFn = opts.fetchFn ?? ((u) => fetch(u));
    this.intervalMs = opts.intervalMs ?? POLL_MS;
  }

  private readonly intervalMs: number;

  start(): void {
    this.stop();
    void this.poll();
    this.timer = setInterval(() => void this.poll(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  setUrl(url: string): void {
    this.url = url;
  }

  async poll(): Promise<void> {
    try {
      const res = await this.fetchFn(this.url);
      if (!res.ok) throw new Error("bad status");
      const parsed = parseFeeds(await res.json());
      if (parsed === null) throw new Error("bad document");
      this.last = parsed;
      this.onUpdate({ feeds: parsed, stale: false });
    } catch {
      this.onUpdate({ feeds: this.last, stale: true });
    }
  }
}
