"""Scenario execution: wires devices, firmware, world, link, and trace
into the tick loop, and replays finished traces to re-check invariants.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Optional, Protocol
from urllib.parse import unquote_plus, urlsplit

from . import devices
from .atlink import (
    DEFAULT_EPOCH,
    AtDriver,
    AtModem,
    AtTransportError,
    LinkConfig,
    format_virtual_time,
)
from .firmware import (
    MOUNT_THETA_RAD,
    STOP_THRESHOLD_M,
    V_SOUND_M_S,
    Firmware,
    MotorCommand,
    TickResult,
    VitalsSample,
    command_to_pins,
)
from .scenario import Scenario
from .simcore import SimClock, Rng, Trace, TraceEvent
from .world import Pose, raycast_front, step_kinematics

FORWARD_FRAME = command_to_pins(MotorCommand.FORWARD)

FRAME_SCHEMA_VERSION = 1
PUBLISH_PERIOD_MS = 100  # outbound state frames at 10 Hz


def printable_bytes(data: bytes) -> str:
    """Bytes to a safely printable one-line string (escape round-trips)."""
    return data.decode("latin-1").encode("unicode_escape").decode("ascii")


def unprintable_bytes(text: str) -> bytes:
    return text.encode("ascii").decode("unicode_escape").encode("latin-1")


class ControlSource(Protocol):
    """Where joystick input comes from in interactive mode."""

    def joystick(self) -> tuple[float, float]: ...
    def publish(self, frame: dict) -> None: ...


class _ScriptSource:
    """Replays the scenario's joystick script; centered before the first point."""

    def __init__(self, script) -> None:
        self._script = script
        self._idx = 0
        self._current = (0.0, 0.0)

    def at(self, now: int) -> tuple[float, float]:
        while self._idx < len(self._script) and self._script[self._idx].t_ms <= now:
            p = self._script[self._idx]
            self._current = (p.x_norm, p.y_norm)
            self._idx += 1
        return self._current


class _ScenarioBus:
    """DeviceBus over the scenario profile; every read lands in the trace."""

    def __init__(self, scenario: Scenario, rng: Rng, trace: Trace,
                 range_to_obstacle: Callable[[], Optional[float]]) -> None:
        occ = scenario.occupant
        self._occ = occ
        self._noise = scenario.noise
        self._trace = trace
        self._range = range_to_obstacle
        self._rng_ppg = rng.fork("ppg")
        self._rng_accel = rng.fork("accel")
        self._rng_temp = rng.fork("lm35")
        self._rng_bp = rng.fork("bp")
        self._rng_ultra = rng.fork("ultrasonic")
        self.joystick_norm = (0.0, 0.0)

    def _emit(self, t: int, payload: dict) -> None:
        self._trace.emit(TraceEvent(t=t, kind="sensor", payload=payload))

    def read_ppg(self, t: int) -> devices.PpgSample:
        s = devices.gen_ppg(t, self._occ.heart_rate_bpm, self._rng_ppg, self._noise)
        self._emit(t, {"device": "ppg", "amplitude": s.amplitude})
        return s

    def read_accel(self, t: int) -> devices.AccelSample:
        s = devices.gen_accel(t, self._occ.gait, self._occ.cadence, self._rng_accel, self._noise)
        self._emit(t, {"device": "accel", "ax": s.ax, "ay": s.ay, "az": s.az})
        return s

    def read_joystick(self, t: int) -> tuple[devices.AnalogReading, devices.AnalogReading]:
        x, y = devices.read_joystick(*self.joystick_norm)
        self._emit(t, {"device": "joystick", "x": x.value, "y": y.value})
        return x, y

    def ping_ultrasonic(self, t: int) -> devices.EchoReading:
        echo = devices.ping_ultrasonic(
            self._range(), V_SOUND_M_S, MOUNT_THETA_RAD,
            self._rng_ultra, self._noise,
        )
        payload: dict = {"device": "ultrasonic"}
        if echo.t_echo is not None:
            payload["echo_s"] = echo.t_echo
        self._emit(t, payload)
        return echo

    def read_temp(self, t: int) -> devices.AnalogReading:
        r = devices.read_lm35(self._occ.temp_c, self._rng_temp, self._noise)
        self._emit(t, {"device": "lm35", "mv_counts": r.value})
        return r

    def read_bp(self, t: int) -> devices.BpReading:
        r = devices.read_bp(self._occ.bp_systolic, self._occ.bp_diastolic, self._rng_bp, self._noise)
        self._emit(t, {"device": "bp", "systolic": r.systolic, "diastolic": r.diastolic})
        return r


def _vitals_fields(v: VitalsSample, epoch: datetime) -> dict[str, str]:
    """The update fields exactly as they go on the wire (all strings)."""
    out: dict[str, str] = {}
    if v.heart_rate is not None:
        out["field1"] = str(v.heart_rate)
    out["field2"] = str(v.systolic)
    out["field3"] = str(v.diastolic)
    out["field4"] = f"{v.temp_c:.2f}"
    out["field5"] = str(v.steps)
    if v.distance_m is not None:
        out["field6"] = f"{v.distance_m:.2f}"
    out["created_at"] = format_virtual_time(v.t, epoch)
    return out


@dataclass
class RunResult:
    exit_code: int
    trace: Trace
    ticks: int = 0
    violations: int = 0
    uploads: list[dict] = field(default_factory=list)


def run_scenario(
    scenario: Scenario,
    out_path: Optional[str] = None,
    no_cloud: bool = False,
    control: Optional[ControlSource] = None,
    connector=None,
    epoch: datetime = DEFAULT_EPOCH,
) -> RunResult:
    """Run the whole system for the scenario's duration.

    Headless runs are deterministic; interactive runs (control is set)
    are paced to one tick per tick_len of wall time. Returns exit code 0,
    or 2 when the in-run safety monitor saw forward pins held past the
    one-tick reaction allowance.
    """
    rng = Rng(scenario.seed)
    clock = SimClock(now=0, tick_len=scenario.tick_len_ms)
    trace = Trace()
    firmware = Firmware()
    pose = Pose()
    script = _ScriptSource(scenario.joystick_script)

    bus = _ScenarioBus(
        scenario, rng, trace,
        lambda: raycast_front(pose, scenario.chair, scenario.obstacles),
    )

    driver = None
    if not no_cloud:
        if scenario.cloud is None or scenario.wifi is None:
            raise ValueError("scenario has no cloud endpoint; pass no_cloud=True")
        link = LinkConfig(
            ssid=scenario.wifi.ssid,
            password=scenario.wifi.password,
            host=scenario.cloud.host,
            port=scenario.cloud.port,
            api_key=scenario.cloud.api_key,
        )
        now_ref = {"t": 0}
        modem_kwargs = {} if connector is None else {"connector": connector}
        modem = AtModem(link.ssid, link.password, **modem_kwargs)

        def record(direction: str, data: bytes) -> None:
            kind = "at_tx" if direction == "tx" else "at_rx"
            trace.emit(TraceEvent(t=now_ref["t"], kind=kind,
                                  payload={"data": printable_bytes(data)}))

        driver = AtDriver(modem, link, recorder=record, epoch=epoch)

    result = RunResult(exit_code=0, trace=trace)
    pace = control is not None
    deadline = time.perf_counter()
    prev_display: Optional[tuple[str, str]] = None
    prev_blocked = False
    prev_distance: Optional[float] = None
    last_upload: Optional[dict] = None

    for _ in range(scenario.ticks):
        now = clock.advance()
        if driver is not None:
            now_ref["t"] = now
        result.ticks += 1

        if control is not None:
            bus.joystick_norm = control.joystick()
        else:
            bus.joystick_norm = script.at(now)

        r = firmware.tick(now, bus)

        cmd_payload: dict = {
            "raw": r.raw_command.value,
            "gated": r.gated_command.value,
            "blocked": int(r.safety.blocked),
        }
        if r.distance is not None:
            cmd_payload["distance"] = r.distance
        trace.emit(TraceEvent(t=now, kind="command", payload=cmd_payload))

        p = r.pins
        trace.emit(TraceEvent(t=now, kind="pins", payload={
            "en1": p.en1, "in1": p.in1, "in2": p.in2,
            "en2": p.en2, "in3": p.in3, "in4": p.in4,
        }))

        if prev_distance is not None and prev_distance < STOP_THRESHOLD_M and p == FORWARD_FRAME:
            result.violations += 1
            trace.emit(TraceEvent(t=now, kind="fsm", payload={
                "event": "violation", "distance": prev_distance,
            }))
        prev_distance = r.distance

        if r.safety.blocked != prev_blocked:
            fsm_payload: dict = {
                "event": "safety",
                "state": "Blocked" if r.safety.blocked else "Free",
            }
            if r.distance is not None:
                fsm_payload["distance"] = r.distance
            trace.emit(TraceEvent(t=now, kind="fsm", payload=fsm_payload))
            prev_blocked = r.safety.blocked

        if r.display != prev_display:
            trace.emit(TraceEvent(t=now, kind="fsm", payload={
                "event": "display", "line1": r.display[0], "line2": r.display[1],
            }))
            prev_display = r.display

        pose = step_kinematics(pose, r.gated_command, scenario.chair,
                               scenario.tick_len_ms / 1000.0)
        trace.emit(TraceEvent(t=now, kind="pose", payload={
            "x": pose.x, "y": pose.y, "heading": pose.heading,
        }))

        if r.vitals_for_upload is not None:
            sent = _vitals_fields(r.vitals_for_upload, epoch)
            if driver is None:
                payload = {"status": "skipped", **sent}
            else:
                try:
                    entry_id = driver.upload(r.vitals_for_upload)
                    payload = {"status": "accepted", "entry_id": entry_id, **sent}
                except AtTransportError as exc:
                    payload = {"status": "error", "step": exc.step, **sent}
            trace.emit(TraceEvent(t=now, kind="http", payload=payload))
            result.uploads.append(payload)
            last_upload = payload

        if control is not None and now % PUBLISH_PERIOD_MS == 0:
            control.publish(_state_frame(now, pose, r, last_upload, scenario))

        if pace:
            deadline += scenario.tick_len_ms / 1000.0
            delay = deadline - time.perf_counter()
            if delay > 0:
                time.sleep(delay)

    if result.violations:
        result.exit_code = 2
    if out_path is not None:
        trace.save(out_path)
    return result


def _state_frame(now: int, pose: Pose, r: TickResult, last_upload: Optional[dict],
                 scenario: Scenario) -> dict:
    v = r.vitals
    return {
        "schema_version": FRAME_SCHEMA_VERSION,
        "t": now,
        "pose": {"x": pose.x, "y": pose.y, "heading": pose.heading},
        "vitals": {
            "heart_rate": v.heart_rate,
            "systolic": v.systolic,
            "diastolic": v.diastolic,
            "temp_c": v.temp_c,
            "steps": v.steps,
        },
        "distance": r.distance,
        "pins": {
            "en1": r.pins.en1, "in1": r.pins.in1, "in2": r.pins.in2,
            "en2": r.pins.en2, "in3": r.pins.in3, "in4": r.pins.in4,
        },
        "blocked": r.safety.blocked,
        "display": [r.display[0], r.display[1]],
        "command": r.gated_command.value,
        "last_upload": last_upload,
        "obstacles": [
            {"cx": o.cx, "cy": o.cy, "radius": o.radius} for o in scenario.obstacles
        ],
        "chair": {
            "sensor_offset": scenario.chair.sensor_offset,
            "beam_half_angle": scenario.chair.beam_half_angle,
            "track_width": scenario.chair.track_width,
        },
    }


# ---------------------------------------------------------------------------
# replay

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ReplaySummary:
    checks: list[CheckResult] = field(default_factory=list)
    corrupt_lines: list[int] = field(default_factory=list)
    events: int = 0

    @property
    def ok(self) -> bool:
        return not self.corrupt_lines and all(c.passed for c in self.checks)


def _parse_update_query(data: str) -> Optional[dict[str, str]]:
    if not data.startswith("GET /update?"):
        return None
    request_line = data.split("\\r\\n", 1)[0]
    target = request_line.split(" ")[1]
    query = urlsplit(target).query
    out = {}
    for pair in query.split("&"):
        key, _, value = pair.partition("=")
        out[unquote_plus(key)] = unquote_plus(value)
    return out


def replay_trace(path: str) -> ReplaySummary:
    """Re-derive the run's invariants from its trace file alone."""
    summary = ReplaySummary()
    events: list[TraceEvent] = []
    last_t: Optional[int] = None
    time_ok = True
    time_detail = ""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                ev = TraceEvent.from_line(line)
            except (ValueError, KeyError):
                summary.corrupt_lines.append(lineno)
                continue
            if last_t is not None and ev.t < last_t:
                time_ok = False
                time_detail = f"t went backwards at line {lineno}"
            last_t = ev.t
            events.append(ev)
    summary.events = len(events)
    summary.checks.append(CheckResult("monotone_time", time_ok, time_detail))

    # safety: forward pins while the previous tick's decoded range was
    # inside the stop threshold (one tick of reaction latency allowed)
    safety_ok = True
    safety_detail = ""
    dist_prev: Optional[float] = None
    dist_cur: Optional[float] = None
    for ev in events:
        if ev.kind == "command":
            dist_prev = dist_cur
            dist_cur = ev.payload.get("distance")
        elif ev.kind == "pins" and safety_ok:
            if dist_prev is not None and dist_prev < STOP_THRESHOLD_M:
                frame = tuple(ev.payload.get(k) for k in
                              ("en1", "in1", "in2", "en2", "in3", "in4"))
                if frame == (1, 1, 0, 1, 1, 0):
                    safety_ok = False
                    safety_detail = f"forward pins at t={ev.t} after range {dist_prev}"
    summary.checks.append(CheckResult("safety_stop", safety_ok, safety_detail))

    uploads = [ev for ev in events if ev.kind == "http"]

    steps_ok = True
    steps_detail = ""
    last_steps: Optional[int] = None
    for ev in uploads:
        steps = int(ev.payload["field5"])
        if last_steps is not None and steps < last_steps:
            steps_ok = False
            steps_detail = f"steps fell {last_steps} -> {steps} at t={ev.t}"
        last_steps = steps
    summary.checks.append(CheckResult("steps_monotone", steps_ok, steps_detail))

    hr_ok = True
    hr_detail = ""
    for ev in uploads:
        if "field1" in ev.payload:
            hr = int(ev.payload["field1"])
            if not 30 <= hr <= 220:
                hr_ok = False
                hr_detail = f"heart rate {hr} out of range at t={ev.t}"
    summary.checks.append(CheckResult("heart_rate_bounds", hr_ok, hr_detail))

    # each upload's request bytes must carry exactly the fields the
    # firmware emitted for that tick
    match_ok = True
    match_detail = ""
    queries: dict[int, dict[str, str]] = {}
    for ev in events:
        if ev.kind == "at_tx":
            q = _parse_update_query(ev.payload.get("data", ""))
            if q is not None:
                queries[ev.t] = q
    for ev in uploads:
        if ev.payload.get("status") == "skipped":
            continue
        q = queries.get(ev.t)
        if q is None:
            match_ok = False
            match_detail = f"no request bytes for upload at t={ev.t}"
            break
        expected = {k: v for k, v in ev.payload.items()
                    if k.startswith("field") or k == "created_at"}
        got = {k: v for k, v in q.items() if k != "api_key"}
        if expected != got:
            match_ok = False
            match_detail = f"upload at t={ev.t}: request {got} != emitted {expected}"
            break
    summary.checks.append(CheckResult("upload_request_match", match_ok, match_detail))
    return summary
