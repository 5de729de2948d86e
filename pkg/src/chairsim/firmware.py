"""The microcontroller-role control program.

Samples devices on a fixed schedule, turns raw signals into vitals,
maps the joystick to motor commands, enforces the obstacle-stop state
machine, drives the H-bridge pins, formats the character display, and
emits one vitals snapshot per upload period for the modem link.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Protocol

from .devices import (
    ADC_MAX,
    ADC_MID,
    GRAVITY_G,
    ULTRA_MAX_RANGE_M,
    AccelSample,
    AnalogChannel,
    AnalogReading,
    BpReading,
    EchoReading,
    PinFrame,
    PpgSample,
)

STOP_THRESHOLD_M = 0.30
RELEASE_THRESHOLD_M = 0.45
DEADZONE_COUNTS = 100.0

HR_BOUNDS_BPM = (30.0, 220.0)

V_SOUND_M_S = 343.0
MOUNT_THETA_RAD = 0.0  # sensor mounting angle vs horizontal


class MotorCommand(Enum):
    STOP = "Stop"
    FORWARD = "Forward"
    REVERSE = "Reverse"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"


@dataclass(frozen=True)
class VitalsSample:
    """One timestamped snapshot of everything the watch reports."""

    t: int
    heart_rate: Optional[int]
    systolic: int
    diastolic: int
    temp_c: float
    steps: int
    distance_m: Optional[float]


@dataclass(frozen=True)
class SafetyState:
    blocked: bool
    last_distance: Optional[float]

    @classmethod
    def free(cls) -> "SafetyState":
        return cls(blocked=False, last_distance=None)


def decode_distance(echo: EchoReading, v_sound: float, theta: float) -> Optional[float]:
    """Echo time to range: d = v * t * cos(theta) / 2; None past sensor range."""
    if v_sound <= 0:
        raise ValueError(f"v_sound must be positive, got {v_sound}")
    if echo.t_echo is None:
        return None
    d = v_sound * echo.t_echo * math.cos(theta) / 2.0
    if d > ULTRA_MAX_RANGE_M:
        return None
    return d


class BeatDetector:
    """Threshold-crossing pulse detector with a refractory window.

    A beat is an upward crossing of 0.5 at least 300 ms after the last
    one; rate is the mean of the last five inter-beat intervals, reported
    once two beats have been seen.
    """

    THRESHOLD = 0.5
    REFRACTORY_MS = 300

    def __init__(self) -> None:
        self._prev: Optional[float] = None
        self._last_beat_t: Optional[int] = None
        self._ibis: deque[int] = deque(maxlen=5)

    def update(self, sample: PpgSample) -> Optional[float]:
        crossing = (
            self._prev is not None
            and self._prev < self.THRESHOLD <= sample.amplitude
        )
        if crossing and (
            self._last_beat_t is None
            or sample.t - self._last_beat_t >= self.REFRACTORY_MS
        ):
            if self._last_beat_t is not None:
                self._ibis.append(sample.t - self._last_beat_t)
            self._last_beat_t = sample.t
        self._prev = sample.amplitude
        return self.bpm

    @property
    def bpm(self) -> Optional[float]:
        if not self._ibis:
            return None
        rate = 60000.0 / (sum(self._ibis) / len(self._ibis))
        lo, hi = HR_BOUNDS_BPM
        return min(hi, max(lo, rate))


class StepCounter:
    """Counts crossings of |a| above 1.3 g with a 250 ms refractory."""

    THRESHOLD_G = 0.3  # above 1 g
    REFRACTORY_MS = 250

    def __init__(self) -> None:
        self._prev_excess: Optional[float] = None
        self._last_step_t: Optional[int] = None
        self.steps = 0

    def update(self, sample: AccelSample) -> int:
        excess = sample.magnitude() - GRAVITY_G
        crossing = (
            self._prev_excess is not None
            and self._prev_excess <= self.THRESHOLD_G < excess
        )
        if crossing and (
            self._last_step_t is None
            or sample.t - self._last_step_t >= self.REFRACTORY_MS
        ):
            self.steps += 1
            self._last_step_t = sample.t
        self._prev_excess = excess
        return self.steps


def mv_to_celsius(reading: AnalogReading) -> float:
    """Millivolt-calibrated channel back to degrees C (10 mV per degree)."""
    if reading.channel is not AnalogChannel.TEMP_MV:
        raise ValueError(f"expected temp_mv channel, got {reading.channel.value}")
    return reading.value / 10.0


def map_joystick(x: int, y: int) -> MotorCommand:
    """ADC pair to drive command: deadzone, then dominant-axis selection.

    Ties go to the longitudinal axis so the map is total and deterministic.
    """
    for name, v in (("x", x), ("y", y)):
        if not 0 <= v <= ADC_MAX:
            raise ValueError(f"joystick {name}={v} outside 0..{ADC_MAX}")
    dx = x - ADC_MID
    dy = y - ADC_MID
    if math.hypot(dx, dy) < DEADZONE_COUNTS:
        return MotorCommand.STOP
    if abs(dy) >= abs(dx):
        return MotorCommand.FORWARD if dy > 0 else MotorCommand.REVERSE
    return MotorCommand.TURN_RIGHT if dx > 0 else MotorCommand.TURN_LEFT


def safety_gate(
    state: SafetyState, distance: Optional[float], cmd: MotorCommand
) -> tuple[SafetyState, MotorCommand]:
    """Obstacle-stop latch with hysteresis.

    Blocks below 0.30 m, releases at 0.45 m (or when nothing is in range).
    While blocked, forward and turning commands become Stop; Reverse passes
    through so the occupant can back away.
    """
    blocked = state.blocked
    if not blocked:
        if distance is not None and distance < STOP_THRESHOLD_M:
            blocked = True
    else:
        if distance is None or distance >= RELEASE_THRESHOLD_M:
            blocked = False
    new_state = SafetyState(blocked=blocked, last_distance=distance)
    if blocked and cmd in (
        MotorCommand.FORWARD,
        MotorCommand.TURN_LEFT,
        MotorCommand.TURN_RIGHT,
    ):
        return new_state, MotorCommand.STOP
    return new_state, cmd


_PIN_TABLE = {
    MotorCommand.STOP: PinFrame(1, 0, 0, 1, 0, 0),  # brake, not coast
    MotorCommand.FORWARD: PinFrame(1, 1, 0, 1, 1, 0),
    MotorCommand.REVERSE: PinFrame(1, 0, 1, 1, 0, 1),
    MotorCommand.TURN_LEFT: PinFrame(1, 0, 1, 1, 1, 0),  # left back, right fwd
    MotorCommand.TURN_RIGHT: PinFrame(1, 1, 0, 1, 0, 1),
}


def command_to_pins(cmd: MotorCommand) -> PinFrame:
    """Drive command to L293D levels; enables stay high for every command."""
    return _PIN_TABLE[cmd]


def format_display(v: VitalsSample, s: SafetyState) -> tuple[str, str]:
    """Two 16-character lines for the local display module.

    Line 1 carries rate and temperature (last char '!' while blocked),
    line 2 carries blood pressure and step count, truncated to fit.
    """
    hr_txt = "---" if v.heart_rate is None else f"{v.heart_rate:03d}"
    line1 = f"HR:{hr_txt} T:{v.temp_c:04.1f}C"
    line1 = f"{line1:<16.16}"
    if s.blocked:
        line1 = line1[:15] + "!"
    line2 = f"BP:{v.systolic:03d}/{v.diastolic:03d} S:{v.steps:05d}"
    return line1, f"{line2:<16.16}"


class DeviceBus(Protocol):
    """What the firmware samples from; implemented by the scenario runner."""

    def read_ppg(self, t: int) -> PpgSample: ...
    def read_accel(self, t: int) -> AccelSample: ...
    def read_joystick(self, t: int) -> tuple[AnalogReading, AnalogReading]: ...
    def ping_ultrasonic(self, t: int) -> EchoReading: ...
    def read_temp(self, t: int) -> AnalogReading: ...
    def read_bp(self, t: int) -> BpReading: ...


@dataclass(frozen=True)
class Schedule:
    """Sampling periods in ms. Sensors fire on the first tick, then every
    period; uploads fire on positive multiples of the upload period."""

    ppg_ms: int = 10
    accel_ms: int = 20
    joystick_ms: int = 20
    ultrasonic_ms: int = 100
    temp_ms: int = 1000
    bp_ms: int = 60_000
    upload_ms: int = 15_000


@dataclass(frozen=True)
class TickResult:
    pins: PinFrame
    display: tuple[str, str]
    vitals: VitalsSample
    vitals_for_upload: Optional[VitalsSample]
    raw_command: MotorCommand
    gated_command: MotorCommand
    safety: SafetyState
    distance: Optional[float]


class Firmware:
    """Tick-driven state machine; one call per 10 ms tick, never re-entered."""

    def __init__(
        self,
        schedule: Schedule = Schedule(),
        v_sound: float = V_SOUND_M_S,
        mount_theta: float = MOUNT_THETA_RAD,
    ) -> None:
        self.schedule = schedule
        self.v_sound = v_sound
        self.mount_theta = mount_theta
        self.beat = BeatDetector()
        self.pedometer = StepCounter()
        self.safety = SafetyState.free()
        self._first_tick: Optional[int] = None
        self._hr: Optional[float] = None
        self._joy_x = ADC_MID
        self._joy_y = ADC_MID
        self._distance: Optional[float] = None
        self._temp_c = 0.0
        self._bp: Optional[BpReading] = None

    def _due(self, now: int, period: int) -> bool:
        return (now - self._first_tick) % period == 0

    def vitals(self, now: int) -> VitalsSample:
        bp = self._bp
        return VitalsSample(
            t=now,
            heart_rate=None if self._hr is None else round(self._hr),
            systolic=bp.systolic if bp else 0,
            diastolic=bp.diastolic if bp else 0,
            temp_c=self._temp_c,
            steps=self.pedometer.steps,
            distance_m=self._distance,
        )

    def tick(self, now: int, bus: DeviceBus) -> TickResult:
        if self._first_tick is None:
            self._first_tick = now
        sched = self.schedule

        if self._due(now, sched.ppg_ms):
            self._hr = self.beat.update(bus.read_ppg(now))
        if self._due(now, sched.accel_ms):
            self.pedometer.update(bus.read_accel(now))
        if self._due(now, sched.joystick_ms):
            jx, jy = bus.read_joystick(now)
            self._joy_x, self._joy_y = jx.value, jy.value
        if self._due(now, sched.ultrasonic_ms):
            echo = bus.ping_ultrasonic(now)
            self._distance = decode_distance(echo, self.v_sound, self.mount_theta)
        if self._due(now, sched.temp_ms):
            self._temp_c = mv_to_celsius(bus.read_temp(now))
        if self._due(now, sched.bp_ms):
            self._bp = bus.read_bp(now)

        raw = map_joystick(self._joy_x, self._joy_y)
        self.safety, gated = safety_gate(self.safety, self._distance, raw)
        pins = command_to_pins(gated)

        snapshot = self.vitals(now)
        upload = snapshot if now > 0 and now % sched.upload_ms == 0 else None
        return TickResult(
            pins=pins,
            display=format_display(snapshot, self.safety),
            vitals=snapshot,
            vitals_for_upload=upload,
            raw_command=raw,
            gated_command=gated,
            safety=self.safety,
            distance=self._distance,
        )
