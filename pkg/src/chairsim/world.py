"""2-D wheelchair kinematics, obstacle geometry, and the line-of-sight
query that feeds the ultrasonic echo model.

The chair is a differential-drive body that either translates along its
heading or pivots in place (counter-rotating wheels); obstacles are
circles so every sensor query is one ray-circle quadratic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .devices import ULTRA_MAX_RANGE_M
from .firmware import MotorCommand


def normalize_heading(heading: float) -> float:
    """Wrap into (-pi, pi]."""
    h = (heading + math.pi) % (2.0 * math.pi) - math.pi
    if h == -math.pi:
        h = math.pi
    return h


@dataclass(frozen=True)
class Pose:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0


@dataclass(frozen=True)
class Obstacle:
    cx: float
    cy: float
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class ChairParams:
    wheel_speed: float = 0.5  # m/s
    track_width: float = 0.6  # m
    sensor_offset: float = 0.4  # m ahead of the pose origin
    beam_half_angle: float = 0.26  # rad, ~15 deg

    def __post_init__(self) -> None:
        for name in ("wheel_speed", "track_width", "sensor_offset", "beam_half_angle"):
            if getattr(self, name) <= 0:
                raise ValueError(f"chair param {name} must be positive")


def step_kinematics(pose: Pose, cmd: MotorCommand, params: ChairParams, dt: float) -> Pose:
    """Euler step: translate along heading or pivot in place.

    Pivot rate comes from counter-rotating wheels at wheel_speed across
    the track: omega = 2*v / track_width.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if cmd is MotorCommand.STOP:
        return pose
    if cmd in (MotorCommand.FORWARD, MotorCommand.REVERSE):
        sign = 1.0 if cmd is MotorCommand.FORWARD else -1.0
        dist = sign * params.wheel_speed * dt
        return replace(
            pose,
            x=pose.x + dist * math.cos(pose.heading),
            y=pose.y + dist * math.sin(pose.heading),
        )
    omega = 2.0 * params.wheel_speed / params.track_width
    sign = 1.0 if cmd is MotorCommand.TURN_LEFT else -1.0
    return replace(pose, heading=normalize_heading(pose.heading + sign * omega * dt))


def _ray_circle(ox: float, oy: float, ux: float, uy: float, obs: Obstacle) -> Optional[float]:
    """Smallest positive t with |o + t*u - c| = r, for unit u; None if no hit."""
    fx = ox - obs.cx
    fy = oy - obs.cy
    b = fx * ux + fy * uy
    c = fx * fx + fy * fy - obs.radius * obs.radius
    disc = b * b - c
    if disc < 0:
        return None
    root = math.sqrt(disc)
    t_near = -b - root
    if t_near > 0:
        return t_near
    t_far = -b + root
    if t_far > 0:
        return t_far  # ray origin inside the circle
    return None


def sensor_position(pose: Pose, params: ChairParams) -> tuple[float, float]:
    return (
        pose.x + params.sensor_offset * math.cos(pose.heading),
        pose.y + params.sensor_offset * math.sin(pose.heading),
    )


def raycast_front(
    pose: Pose, params: ChairParams, obstacles: Sequence[Obstacle]
) -> Optional[float]:
    """Nearest hit across a 5-ray fan from the front-mounted sensor.

    Rays at heading + k*(half_angle/2) for k in -2..2 approximate the wide
    diffuse beam; None when nothing lies within the 2.5 m sensor range.
    """
    ox, oy = sensor_position(pose, params)
    best: Optional[float] = None
    for k in range(-2, 3):
        ang = pose.heading + k * params.beam_half_angle / 2.0
        ux, uy = math.cos(ang), math.sin(ang)
        for obs in obstacles:
            hit = _ray_circle(ox, oy, ux, uy, obs)
            if hit is not None and hit <= ULTRA_MAX_RANGE_M:
                if best is None or hit < best:
                    best = hit
    return best
