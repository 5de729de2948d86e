// WebSocket connection to the simulator. Inbound frames land in a
// latest-frame slot so the render loop repaints at its own pace instead
// of once per message. One socket, one operator; the server closes
// extras with code 1013.

import { StateFrame, parseFrame } from "./frames.js";

export const BUSY_CLOSE_CODE = 1013;

export type LinkStatus = "connecting" | "open" | "closed" | "busy";

// The slice of the browser WebSocket API the link uses; the ws package
// and test fakes satisfy it too.
export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: { code?: number }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export class FrameSlot {
  private frame: StateFrame | null = null;

  put(frame: StateFrame): void {
    this.frame = frame;
  }

  /** Newest frame since the last take, or null. Consumes it. */
  take(): StateFrame | null {
    const f = this.frame;
    this.frame = null;
    return f;
  }

  peek(): StateFrame | null {
    return this.frame;
  }
}

export interface LinkOptions {
  socketFactory?: SocketFactory;
  onStatus?: (status: LinkStatus) => void;
  onFrame?: (frame: StateFrame) => void;
}

export class SimLink {
  readonly slot = new FrameSlot();
  framesSeen = 0;
  framesDropped = 0;

  private socket: SocketLike | null = null;
  private status: LinkStatus = "closed";
  private readonly makeSocket: SocketFactory;
  private readonly onStatus: (status: LinkStatus) => void;
  private readonly onFrame: ((frame: StateFrame) => void) | null;

  constructor(private readonly url: string, opts: LinkOptions = {}) {
    this.makeSocket = opts.socketFactory ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.onStatus = opts.onStatus ?? (() => {});
    this.onFrame = opts.onFrame ?? null;
  }

  get state(): LinkStatus {
    return this.status;
  }

  connect(): void {
    if (this.socket) this.close();
    this.setStatus("connecting");
    const ws = this.makeSocket(this.url);
    this.socket = ws;
    ws.onopen = () => this.setStatus("open");
    ws.onmessage = (ev) => this.receive(ev.data);
    ws.onclose = (ev) => {
      if (this.socket !== ws) return; // superseded by a reconnect
      this.socket = null;
      this.setStatus(ev && ev.code === BUSY_CLOSE_CODE ? "busy" : "closed");
    };
    ws.onerror = () => {};
  }

  close(): void {
    const ws = this.socket;
    this.socket = null;
    if (ws) {
      try {
        ws.close();
      } catch {
        // already dead
      }
    }
    this.setStatus("closed");
  }

  /** Send one joystick vector. Returns false when not connected. */
  send(xNorm: number, yNorm: number): boolean {
    if (!this.socket || this.status !== "open") return false;
    this.socket.send(JSON.stringify({ x_norm: xNorm, y_norm: yNorm }));
    return true;
  }

  private receive(data: unknown): void {
    const text = typeof data === "string" ? data : String(data);
    const frame = parseFrame(text);
    if (frame === null) {
      this.framesDropped += 1;
      return;
    }
    this.framesSeen += 1;
    this.slot.put(frame);
    if (this.onFrame) this.onFrame(frame);
  }

  private setStatus(status: LinkStatus): void {
    this.status = status;
    this.onStatus(status);
  }
}
