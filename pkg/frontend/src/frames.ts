// Inbound state frames from the simulator's WebSocket, one every 100 ms.
// A frame is rendered in full or dropped in full: parseFrame rebuilds a
// clean object and returns null if anything is off, so no half-validated
// data ever reaches the UI.

export const SUPPORTED_SCHEMA = 1;

export interface Pose {
  x: number;
  y: number;
  heading: number;
}

export interface Vitals {
  heart_rate: number | null;
  systolic: number;
  diastolic: number;
  temp_c: number;
  steps: number;
}

export interface Pins {
  en1: number;
  in1: number;
  in2: number;
  en2: number;
  in3: number;
  in4: number;
}

export interface Obstacle {
  cx: number;
  cy: number;
  radius: number;
}

export interface ChairShape {
  sensor_offset: number;
  beam_half_angle: number;
  track_width: number;
}

export interface StateFrame {
  schema_version: number;
  t: number;
  pose: Pose;
  vitals: Vitals;
  distance: number | null;
  pins: Pins;
  blocked: boolean;
  display: [string, string];
  command: string;
  last_upload: Record<string, unknown> | null;
  obstacles: Obstacle[];
  chair: ChairShape;
}

const PIN_KEYS = ["en1", "in1", "in2", "en2", "in3", "in4"] as const;

function isNum(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isObj(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

export function parseFrame(raw: unknown): StateFrame | null {
  let doc: unknown = raw;
  if (typeof raw === "string") {
    try {
      doc = JSON.parse(raw);
    } catch {
      return null;
    }
  }
  if (!isObj(doc)) return null;
  if (doc.schema_version !== SUPPORTED_SCHEMA) return null;
  if (!isNum(doc.t) || doc.t < 0) return null;

  const pose = doc.pose;
  if (!isObj(pose) || !isNum(pose.x) || !isNum(pose.y) || !isNum(pose.heading)) {
    return null;
  }

  const v = doc.vitals;
  if (!isObj(v)) return null;
  if (v.heart_rate !== null && !isNum(v.heart_rate)) return null;
  if (!isNum(v.systolic) || !isNum(v.diastolic) || !isNum(v.temp_c) || !isNum(v.steps)) {
    return null;
  }

  if (doc.distance !== null && !isNum(doc.distance)) return null;

  const pins = doc.pins;
  if (!isObj(pins)) return null;
  for (const key of PIN_KEYS) {
    if (pins[key] !== 0 && pins[key] !== 1) return null;
  }

  if (typeof doc.blocked !== "boolean") return null;

  const display = doc.display;
  if (!Array.isArray(display) || display.length !== 2) return null;
  if (typeof display[0] !== "string" || typeof display[1] !== "string") return null;

  if (typeof doc.command !== "string") return null;
  if (doc.last_upload !== null && !isObj(doc.last_upload)) return null;

  const obstacles = doc.obstacles;
  if (!Array.isArray(obstacles)) return null;
  const cleanObstacles: Obstacle[] = [];
  for (const o of obstacles) {
    if (!isObj(o) || !isNum(o.cx) || !isNum(o.cy) || !isNum(o.radius)) return null;
    cleanObstacles.push({ cx: o.cx, cy: o.cy, radius: o.radius });
  }

  const chair = doc.chair;
  if (!isObj(chair) || !isNum(chair.sensor_offset) || !isNum(chair.beam_half_angle)
      || !isNum(chair.track_width)) {
    return null;
  }

  return {
    schema_version: SUPPORTED_SCHEMA,
    t: doc.t,
    pose: { x: pose.x, y: pose.y, heading: pose.heading },
    vitals: {
      heart_rate: v.heart_rate === null ? null : (v.heart_rate as number),
      systolic: v.systolic as number,
      diastolic: v.diastolic as number,
      temp_c: v.temp_c as number,
      steps: v.steps as number,
    },
    distance: doc.distance === null ? null : (doc.distance as number),
    pins: {
      en1: pins.en1 as number, in1: pins.in1 as number, in2: pins.in2 as number,
      en2: pins.en2 as number, in3: pins.in3 as number, in4: pins.in4 as number,
    },
    blocked: doc.blocked,
    display: [display[0], display[1]],
    command: doc.command,
    last_upload: doc.last_upload === null ? null : { ...(doc.last_upload as object) },
    obstacles: cleanObstacles,
    chair: {
      sensor_offset: chair.sensor_offset as number,
      beam_half_angle: chair.beam_half_angle as number,
      track_width: chair.track_width as number,
    },
  };
}

export interface Badge {
  stop: boolean;
  text: string;
}

/** The safety indicator shown over the map. */
export function safetyBadge(frame: StateFrame): Badge {
  if (frame.blocked) {
    const d = frame.distance;
    return { stop: true, text: d === null ? "STOP" : `STOP ${d.toFixed(2)} m` };
  }
  return { stop: false, text: "CLEAR" };
}
