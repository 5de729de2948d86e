"""Models of the physical devices: sensors on the input side, the
H-bridge motor driver on the output side.

Sensor generation is pure given (virtual time, occupant profile, rng);
noise is uniform and can be disabled wholesale for exact tests.  The
latch side is a total pure function over pin levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

GRAVITY_G = 1.0  # accel samples are expressed in g

# Noise bounds (uniform, symmetric). Ultrasonic matches the sensor's
# rated 3 cm accuracy; the rest are plausible part-level jitter.
PPG_NOISE = 0.02
ACCEL_NOISE_G = 0.05
TEMP_NOISE_MV = 2.0
BP_NOISE_MMHG = 4.0
ULTRA_NOISE_M = 0.03

ULTRA_MAX_RANGE_M = 2.5
LM35_MV_PER_C = 10.0
ADC_MAX = 1023
ADC_MID = 512

PPG_PERIOD_BOUNDS_BPM = (30, 220)
CADENCE_BOUNDS = (60, 180)
BP_BOUNDS = (40, 260)

_PPG_PEAK_WIDTH_MS = 200.0
_PPG_BASELINE = 0.2


class AnalogChannel(Enum):
    TEMP_MV = "temp_mv"
    JOY_X = "joy_x"
    JOY_Y = "joy_y"


@dataclass(frozen=True)
class PpgSample:
    t: int
    amplitude: float


@dataclass(frozen=True)
class AccelSample:
    t: int
    ax: float
    ay: float
    az: float

    def magnitude(self) -> float:
        return math.sqrt(self.ax * self.ax + self.ay * self.ay + self.az * self.az)


@dataclass(frozen=True)
class AnalogReading:
    channel: AnalogChannel
    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value <= ADC_MAX:
            raise ValueError(f"ADC value {self.value} outside 0..{ADC_MAX}")


@dataclass(frozen=True)
class EchoReading:
    """Ultrasonic echo time in seconds; t_echo=None means timeout."""

    t_echo: Optional[float]

    @property
    def timed_out(self) -> bool:
        return self.t_echo is None


@dataclass(frozen=True)
class BpReading:
    systolic: int
    diastolic: int

    def __post_init__(self) -> None:
        lo, hi = BP_BOUNDS
        if not (lo <= self.diastolic < self.systolic <= hi):
            raise ValueError(
                f"BP {self.systolic}/{self.diastolic} violates {lo} <= dia < sys <= {hi}"
            )


@dataclass(frozen=True)
class PinFrame:
    """L293D input levels: enable + direction pair per motor."""

    en1: int
    in1: int
    in2: int
    en2: int
    in3: int
    in4: int

    def __post_init__(self) -> None:
        for name in ("en1", "in1", "in2", "en2", "in3", "in4"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"pin {name} must be 0 or 1")


class BridgeOutput(Enum):
    COAST = "coast"
    FORWARD = "forward"
    REVERSE = "reverse"
    BRAKE = "brake"


@dataclass(frozen=True)
class MotorDriveState:
    left: BridgeOutput
    right: BridgeOutput


def gen_ppg(t_ms: int, occupant_hr: float, rng, noise: bool = True) -> PpgSample:
    """Pulse waveform sample: raised-cosine peaks at the heart-rate period.

    Baseline 0.2 rising to 1.0 at each peak (200 ms wide), so amplitude
    stays in [0, 1] even before clamping the +/-0.02 noise.
    """
    lo, hi = PPG_PERIOD_BOUNDS_BPM
    if not lo <= occupant_hr <= hi:
        raise ValueError(f"heart rate {occupant_hr} outside {lo}..{hi} bpm")
    period = 60000.0 / occupant_hr
    s = t_ms % period
    amp = _PPG_BASELINE
    if s < _PPG_PEAK_WIDTH_MS:
        amp += 0.8 * (0.5 - 0.5 * math.cos(2.0 * math.pi * s / _PPG_PEAK_WIDTH_MS))
    if noise:
        amp += rng.next_uniform(-PPG_NOISE, PPG_NOISE)
    return PpgSample(t=t_ms, amplitude=min(1.0, max(0.0, amp)))


def gen_accel(t_ms: int, gait: str, cadence: float, rng, noise: bool = True) -> AccelSample:
    """Accelerometer sample: 1 g vertical at rest, cosine step spikes walking."""
    if gait not in ("rest", "walk"):
        raise ValueError(f"unknown gait {gait!r}")
    az = GRAVITY_G
    if gait == "walk":
        lo, hi = CADENCE_BOUNDS
        if not lo <= cadence <= hi:
            raise ValueError(f"cadence {cadence} outside {lo}..{hi} steps/min")
        period = 60000.0 / cadence
        phase = 2.0 * math.pi * (t_ms % period) / period
        az += 0.8 * max(0.0, math.cos(phase))
    ax = ay = 0.0
    if noise:
        ax += rng.next_uniform(-ACCEL_NOISE_G, ACCEL_NOISE_G)
        ay += rng.next_uniform(-ACCEL_NOISE_G, ACCEL_NOISE_G)
        az += rng.next_uniform(-ACCEL_NOISE_G, ACCEL_NOISE_G)
    return AccelSample(t=t_ms, ax=ax, ay=ay, az=az)


def read_lm35(occupant_temp_c: float, rng, noise: bool = True) -> AnalogReading:
    """Temperature as a millivolt-calibrated ADC count (10 mV/degC)."""
    mv = LM35_MV_PER_C * occupant_temp_c
    if noise:
        mv += rng.next_uniform(-TEMP_NOISE_MV, TEMP_NOISE_MV)
    value = min(ADC_MAX, max(0, round(mv)))
    return AnalogReading(channel=AnalogChannel.TEMP_MV, value=value)


def read_bp(baseline_sys: int, baseline_dia: int, rng, noise: bool = True) -> BpReading:
    """Cuff reading: baseline plus independent +/-4 mmHg jitter.

    The baseline itself must already be a valid pairing; jittered draws
    that invert the ordering are re-drawn.
    """
    lo, hi = BP_BOUNDS
    if not (lo <= baseline_dia < baseline_sys <= hi):
        raise ValueError(f"invalid BP profile {baseline_sys}/{baseline_dia}")
    if not noise:
        return BpReading(systolic=baseline_sys, diastolic=baseline_dia)
    for _ in range(1000):
        sys_v = round(baseline_sys + rng.next_uniform(-BP_NOISE_MMHG, BP_NOISE_MMHG))
        dia_v = round(baseline_dia + rng.next_uniform(-BP_NOISE_MMHG, BP_NOISE_MMHG))
        sys_v = min(hi, max(lo, sys_v))
        dia_v = min(hi, max(lo, dia_v))
        if sys_v > dia_v:
            return BpReading(systolic=sys_v, diastolic=dia_v)
    raise RuntimeError("BP re-draw failed to satisfy sys > dia")  # pragma: no cover


def read_joystick(x_norm: float, y_norm: float) -> tuple[AnalogReading, AnalogReading]:
    """Two-potentiometer stick: normalized [-1, 1] to ADC counts around 512."""
    for name, v in (("x", x_norm), ("y", y_norm)):
        if not -1.0 <= v <= 1.0:
            raise ValueError(f"joystick {name}={v} outside [-1, 1]")

    def to_adc(norm: float) -> int:
        return min(ADC_MAX, max(0, round(ADC_MID + 511.0 * norm)))

    return (
        AnalogReading(channel=AnalogChannel.JOY_X, value=to_adc(x_norm)),
        AnalogReading(channel=AnalogChannel.JOY_Y, value=to_adc(y_norm)),
    )


def ping_ultrasonic(
    world_distance: Optional[float],
    v_sound: float,
    theta: float,
    rng,
    noise: bool = True,
) -> EchoReading:
    """Round-trip echo time for a target distance, or timeout past 2.5 m.

    Inverts the range equation the firmware decodes with: the echo takes
    t = 2*d / (v*cos(theta)), with up to +/-3 cm of distance jitter.
    """
    if v_sound <= 0:
        raise ValueError(f"v_sound must be positive, got {v_sound}")
    if not 0 <= theta < math.pi / 2:
        raise ValueError(f"theta {theta} outside [0, pi/2)")
    if world_distance is None or world_distance > ULTRA_MAX_RANGE_M:
        if noise:
            rng.next_uniform(-ULTRA_NOISE_M, ULTRA_NOISE_M)  # keep stream aligned
        return EchoReading(t_echo=None)
    d = world_distance
    if noise:
        d = max(0.0, d + rng.next_uniform(-ULTRA_NOISE_M, ULTRA_NOISE_M))
    return EchoReading(t_echo=2.0 * d / (v_sound * math.cos(theta)))


_BRIDGE_TABLE = {
    (1, 0): BridgeOutput.FORWARD,
    (0, 1): BridgeOutput.REVERSE,
    (0, 0): BridgeOutput.BRAKE,
    (1, 1): BridgeOutput.BRAKE,
}


def latch_pins(frame: PinFrame) -> MotorDriveState:
    """H-bridge truth table: EN low coasts, else the IN pair picks the mode."""

    def one(en: int, in_a: int, in_b: int) -> BridgeOutput:
        if en == 0:
            return BridgeOutput.COAST
        return _BRIDGE_TABLE[(in_a, in_b)]

    return MotorDriveState(
        left=one(frame.en1, frame.in1, frame.in2),
        right=one(frame.en2, frame.in3, frame.in4),
    )
