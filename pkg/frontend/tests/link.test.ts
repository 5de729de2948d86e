import { describe, expect, it } from "vitest";
import { BUSY_CLOSE_CODE, FrameSlot, LinkStatus, SimLink, SocketLike } from "../src/link.js";
import { StateFrame, parseFrame } from "../src/frames.js";

class FakeSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev: { code?: number }) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: string[] = [];
  closed = false;

  constructor(readonly url: string) {}

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
  }
}

function frameJson(over: Record<string, unknown> = {}): string {
  return JSON.stringify({
    schema_version: 1,
    t: 100,
    pose: { x: 0, y: 0, heading: 0 },
    vitals: { heart_rate: null, systolic: 120, diastolic: 80, temp_c: 36.5, steps: 0 },
    distance: null,
    pins: { en1: 0, in1: 0, in2: 0, en2: 0, in3: 0, in4: 0 },
    blocked: false,
    display: ["HR:--- T:36.5C  ", "BP:120/080 S:000"],
    command: "Stop",
    last_upload: null,
    obstacles: [],
    chair: { sensor_offset: 0.4, beam_half_angle: 0.26, track_width: 0.5 },
    ...over,
  });
}

function makeLink(onFrame?: (f: StateFrame) => void) {
  const sockets: FakeSocket[] = [];
  const statuses: LinkStatus[] = [];
  const link = new SimLink("ws://test", {
    socketFactory: (url) => {
      const s = new FakeSocket(url);
      sockets.push(s);
      return s;
    },
    onStatus: (s) => statuses.push(s),
    onFrame,
  });
  return { link, sockets, statuses };
}

describe("SimLink", () => {
  it("reports connecting then open", () => {
    const { link, sockets, statuses } = makeLink();
    link.connect();
    expect(statuses).toEqual(["connecting"]);
    sockets[0].onopen!();
    expect(statuses).toEqual(["connecting", "open"]);
    expect(link.state).toBe("open");
  });

  it("refuses to send until the socket is open", () => {
    const { link, sockets } = makeLink();
    expect(link.send(0, 1)).toBe(false);
    link.connect();
    expect(link.send(0, 1)).toBe(false);
    sockets[0].onopen!();
    expect(link.send(0, 1)).toBe(true);
    expect(JSON.parse(sockets[0].sent[0])).toEqual({ x_norm: 0, y_norm: 1 });
  });

  it("parses inbound frames into the slot and callback", () => {
    const got: StateFrame[] = [];
    const { link, sockets } = makeLink((f) => got.push(f));
    link.connect();
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: frameJson() });
    expect(link.framesSeen).toBe(1);
    expect(got).toHaveLength(1);
    expect(link.slot.peek()!.t).toBe(100);
  });

  it("drops frames with the wrong schema, counting them", () => {
    const { link, sockets } = makeLink();
    link.connect();
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: frameJson({ schema_version: 99 }) });
    sockets[0].onmessage!({ data: "garbage" });
    expect(link.framesDropped).toBe(2);
    expect(link.framesSeen).toBe(0);
    expect(link.slot.peek()).toBeNull();
  });

  it("keeps only the newest frame for the render loop", () => {
    const { link, sockets } = makeLink();
    link.connect();
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: frameJson({ t: 100 }) });
    sockets[0].onmessage!({ data: frameJson({ t: 200 }) });
    const frame = link.slot.take();
    expect(frame!.t).toBe(200);
    expect(link.slot.take()).toBeNull(); // consumed
  });

  it("maps close code 1013 to busy", () => {
    const { link, sockets, statuses } = makeLink();
    link.connect();
    sockets[0].onopen!();
    sockets[0].onclose!({ code: BUSY_CLOSE_CODE });
    expect(statuses[statuses.length - 1]).toBe("busy");
    expect(link.send(0, 0)).toBe(false);
  });

  it("maps a normal close to closed", () => {
    const { link, sockets } = makeLink();
    link.connect();
    sockets[0].onopen!();
    sockets[0].onclose!({ code: 1000 });
    expect(link.state).toBe("closed");
  });

  it("ignores close events from a superseded socket", () => {
    const { link, sockets } = makeLink();
    link.connect();
    sockets[0].onopen!();
    link.connect(); // reconnect replaces the socket
    sockets[1].onopen!();
    sockets[0].onclose!({ code: 1000 });
    expect(link.state).toBe("open");
  });

  it("close() shuts the socket and reports closed", () => {
    const { link, sockets } = makeLink();
    link.connect();
    sockets[0].onopen!();
    link.close();
    expect(sockets[0].closed).toBe(true);
    expect(link.state).toBe("closed");
  });
});

describe("FrameSlot", () => {
  it("is a single-slot mailbox", () => {
    const slot = new FrameSlot();
    expect(slot.take()).toBeNull();
    const a = parseFrame(frameJson({ t: 100 }))!;
    const b = parseFrame(frameJson({ t: 200 }))!;
    slot.put(a);
    slot.put(b);
    expect(slot.peek()!.t).toBe(200);
    expect(slot.take()!.t).toBe(200);
    expect(slot.peek()).toBeNull();
  });
});
