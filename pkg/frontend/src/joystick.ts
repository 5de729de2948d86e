// Virtual joystick. Pointer position maps to a vector in [-1,1]^2 with
// up positive; while engaged the current vector is resent every 40 ms
// (25 Hz) so the sim's failsafe never starves, and release snaps to
// (0,0) immediately.

export interface StickVector {
  x: number;
  y: number;
}

export const RESEND_MS = 40;

function clamp(n: number, lo: number, hi: number): number {
  return n < lo ? lo : n > hi ? hi : n;
}

export interface WidgetRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** Pointer coordinates to a normalized stick vector. Top edge is (0,1). */
export function normalizeStick(px: number, py: number, rect: WidgetRect): StickVector {
  const cx = rect.left + rect.width / 2;
  const cy = rect.top + rect.height / 2;
  // cy - py, not -(py - cy): keeps the center at +0, not -0
  return {
    x: clamp((px - cx) / (rect.width / 2), -1, 1),
    y: clamp((cy - py) / (rect.height / 2), -1, 1),
  };
}

export class JoystickLoop {
  private current: StickVector = { x: 0, y: 0 };
  private engaged = false;
  private enabled = true;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly send: (v: StickVector) => void,
    private readonly periodMs: number = RESEND_MS,
  ) {}

  get isEngaged(): boolean {
    return this.engaged;
  }

  get vector(): StickVector {
    return { ...this.current };
  }

  engage(v: StickVector): void {
    if (!this.enabled) return;
    this.engaged = true;
    this.current = v;
    this.send(v);
    if (this.timer === null) {
      this.timer = setInterval(() => this.send(this.current), this.periodMs);
    }
  }

  move(v: StickVector): void {
    if (!this.engaged) return;
    this.current = v;
    this.send(v);
  }

  release(): void {
    if (!this.engaged) return;
    this.engaged = false;
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    this.current = { x: 0, y: 0 };
    this.send(this.current); // failsafe: recenter within one frame
  }

  /** Disabling mid-drag releases first so the chair is never left moving. */
  setEnabled(enabled: boolean): void {
    if (!enabled && this.engaged) this.release();
    this.enabled = enabled;
  }
}

interface PointerTarget {
  addEventListener(type: string, cb: (ev: any) => void): void;
  getBoundingClientRect(): WidgetRect;
  setPointerCapture?(id: number): void;
}

/** Wire pointer events on a widget element to a JoystickLoop. */
export function attachPointer(el: PointerTarget, loop: JoystickLoop): void {
  const vectorAt = (ev: { clientX: number; clientY: number }) =>
    normalizeStick(ev.clientX, ev.clientY, el.getBoundingClientRect());

  el.addEventListener("pointerdown", (ev) => {
    if (el.setPointerCapture && typeof ev.pointerId === "number") {
      try {
        el.setPointerCapture(ev.pointerId);
      } catch {
        // capture is best-effort
      }
    }
    loop.engage(vectorAt(ev));
  });
  el.addEventListener("pointermove", (ev) => loop.move(vectorAt(ev)));
  el.addEventListener("pointerup", () => loop.release());
  el.addEventListener("pointercancel", () => loop.release());
}
