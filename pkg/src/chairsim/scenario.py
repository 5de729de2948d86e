"""Scenario files: the JSON configuration a run is built from.

Parsing is strict: unknown keys anywhere are rejected so a typo in an
experiment config fails loudly instead of silently using a default.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .devices import BP_BOUNDS, CADENCE_BOUNDS, PPG_PERIOD_BOUNDS_BPM
from .world import ChairParams, Obstacle

SCHEMA_VERSION = 1
TEMP_BOUNDS_C = (30.0, 45.0)
_API_KEY_RE = re.compile(r"^[A-Za-z0-9]{16}$")


class ScenarioError(ValueError):
    """The scenario file cannot be used (missing, malformed, or invalid)."""


@dataclass(frozen=True)
class OccupantProfile:
    heart_rate_bpm: float = 75.0
    temp_c: float = 36.5
    bp_systolic: int = 120
    bp_diastolic: int = 80
    gait: str = "rest"
    cadence: float = 110.0


@dataclass(frozen=True)
class ScriptPoint:
    t_ms: int
    x_norm: float
    y_norm: float


@dataclass(frozen=True)
class WifiCredentials:
    ssid: str
    password: str


@dataclass(frozen=True)
class CloudEndpoint:
    host: str
    port: int
    api_key: str


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration_s: float
    tick_len_ms: int = 10
    noise: bool = True
    occupant: OccupantProfile = OccupantProfile()
    obstacles: tuple[Obstacle, ...] = ()
    chair: ChairParams = ChairParams()
    joystick_script: tuple[ScriptPoint, ...] = ()
    interactive: bool = False
    wifi: Optional[WifiCredentials] = None
    cloud: Optional[CloudEndpoint] = None

    @property
    def duration_ms(self) -> int:
        return round(self.duration_s * 1000)

    @property
    def ticks(self) -> int:
        return self.duration_ms // self.tick_len_ms


def _require_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")


def _number(obj: dict, key: str, where: str, default=None):
    if key not in obj:
        if default is None:
            raise ScenarioError(f"{where}: missing {key}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{where}: {key} must be a number, got {v!r}")
    return v


def _string(obj: dict, key: str, where: str) -> str:
    v = obj.get(key)
    if not isinstance(v, str):
        raise ScenarioError(f"{where}: {key} must be a string, got {v!r}")
    return v


def _occupant(obj: dict) -> OccupantProfile:
    _require_keys(obj, {"heart_rate_bpm", "temp_c", "bp", "gait", "cadence"}, "occupant")
    defaults = OccupantProfile()
    hr = _number(obj, "heart_rate_bpm", "occupant", defaults.heart_rate_bpm)
    lo, hi = PPG_PERIOD_BOUNDS_BPM
    if not lo <= hr <= hi:
        raise ScenarioError(f"occupant: heart_rate_bpm {hr} outside {lo}..{hi}")
    temp = _number(obj, "temp_c", "occupant", defaults.temp_c)
    lo_t, hi_t = TEMP_BOUNDS_C
    if not lo_t <= temp <= hi_t:
        raise ScenarioError(f"occupant: temp_c {temp} outside {lo_t}..{hi_t}")
    bp = obj.get("bp", [defaults.bp_systolic, defaults.bp_diastolic])
    if (
        not isinstance(bp, list)
        or len(bp) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in bp)
    ):
        raise ScenarioError(f"occupant: bp must be [systolic, diastolic], got {bp!r}")
    lo_b, hi_b = BP_BOUNDS
    if not lo_b <= bp[1] < bp[0] <= hi_b:
        raise ScenarioError(f"occupant: bp {bp} violates {lo_b} <= dia < sys <= {hi_b}")
    gait = obj.get("gait", defaults.gait)
    if gait not in ("rest", "walk"):
        raise ScenarioError(f"occupant: gait must be rest or walk, got {gait!r}")
    cadence = _number(obj, "cadence", "occupant", defaults.cadence)
    lo_c, hi_c = CADENCE_BOUNDS
    if gait == "walk" and not lo_c <= cadence <= hi_c:
        raise ScenarioError(f"occupant: cadence {cadence} outside {lo_c}..{hi_c}")
    return OccupantProfile(
        heart_rate_bpm=float(hr),
        temp_c=float(temp),
        bp_systolic=bp[0],
        bp_diastolic=bp[1],
        gait=gait,
        cadence=float(cadence),
    )


def _obstacles(items) -> tuple[Obstacle, ...]:
    if not isinstance(items, list):
        raise ScenarioError(f"obstacles must be a list, got {items!r}")
    out = []
    for i, obj in enumerate(items):
        where = f"obstacles[{i}]"
        if not isinstance(obj, dict):
            raise ScenarioError(f"{where}: must be an object")
        _require_keys(obj, {"cx", "cy", "radius"}, where)
        try:
            out.append(
                Obstacle(
                    cx=float(_number(obj, "cx", where)),
                    cy=float(_number(obj, "cy", where)),
                    radius=float(_number(obj, "radius", where)),
                )
            )
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}") from None
    return tuple(out)


def _chair(obj: dict) -> ChairParams:
    _require_keys(
        obj, {"wheel_speed", "track_width", "sensor_offset", "beam_half_angle"}, "chair"
    )
    d = ChairParams()
    try:
        return ChairParams(
            wheel_speed=float(_number(obj, "wheel_speed", "chair", d.wheel_speed)),
            track_width=float(_number(obj, "track_width", "chair", d.track_width)),
            sensor_offset=float(_number(obj, "sensor_offset", "chair", d.sensor_offset)),
            beam_half_angle=float(
                _number(obj, "beam_half_angle", "chair", d.beam_half_angle)
            ),
        )
    except ValueError as exc:
        raise ScenarioError(f"chair: {exc}") from None


def _script(items) -> tuple[ScriptPoint, ...]:
    if not isinstance(items, list):
        raise ScenarioError(f"joystick_script must be a list, got {items!r}")
    out = []
    last_t = None
    for i, obj in enumerate(items):
        where = f"joystick_script[{i}]"
        if not isinstance(obj, dict):
            raise ScenarioError(f"{where}: must be an object")
        _require_keys(obj, {"t_ms", "x_norm", "y_norm"}, where)
        t = _number(obj, "t_ms", where)
        if not isinstance(t, int) or t < 0:
            raise ScenarioError(f"{where}: t_ms must be a non-negative integer")
        if last_t is not None and t <= last_t:
            raise ScenarioError(f"{where}: t_ms {t} not after {last_t}")
        last_t = t
        x = float(_number(obj, "x_norm", where))
        y = float(_number(obj, "y_norm", where))
        for name, v in (("x_norm", x), ("y_norm", y)):
            if not -1.0 <= v <= 1.0:
                raise ScenarioError(f"{where}: {name} {v} outside [-1, 1]")
        out.append(ScriptPoint(t_ms=t, x_norm=x, y_norm=y))
    return tuple(out)


_TOP_KEYS = {
    "schema_version",
    "seed",
    "duration_s",
    "tick_len_ms",
    "noise",
    "occupant",
    "obstacles",
    "chair",
    "joystick_script",
    "interactive",
    "wifi",
    "cloud",
}


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError(f"scenario must be a JSON object, got {doc!r}")
    _require_keys(doc, _TOP_KEYS, "scenario")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    seed = doc.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ScenarioError(f"seed must be a non-negative integer, got {seed!r}")
    duration = _number(doc, "duration_s", "scenario")
    if duration <= 0:
        raise ScenarioError(f"duration_s must be positive, got {duration}")
    tick_len = doc.get("tick_len_ms", 10)
    if not isinstance(tick_len, int) or isinstance(tick_len, bool) or tick_len <= 0:
        raise ScenarioError(f"tick_len_ms must be a positive integer, got {tick_len!r}")
    noise = doc.get("noise", True)
    if not isinstance(noise, bool):
        raise ScenarioError(f"noise must be a boolean, got {noise!r}")
    interactive = doc.get("interactive", False)
    if not isinstance(interactive, bool):
        raise ScenarioError(f"interactive must be a boolean, got {interactive!r}")

    occupant = OccupantProfile()
    if "occupant" in doc:
        if not isinstance(doc["occupant"], dict):
            raise ScenarioError("occupant must be an object")
        occupant = _occupant(doc["occupant"])
    obstacles = _obstacles(doc.get("obstacles", []))
    chair = ChairParams()
    if "chair" in doc:
        if not isinstance(doc["chair"], dict):
            raise ScenarioError("chair must be an object")
        chair = _chair(doc["chair"])
    script = _script(doc.get("joystick_script", []))
    if interactive and script:
        raise ScenarioError("joystick_script and interactive are mutually exclusive")

    wifi = None
    if doc.get("wifi") is not None:
        w = doc["wifi"]
        if not isinstance(w, dict):
            raise ScenarioError("wifi must be an object")
        _require_keys(w, {"ssid", "password"}, "wifi")
        wifi = WifiCredentials(ssid=_string(w, "ssid", "wifi"), password=_string(w, "password", "wifi"))
    cloud = None
    if doc.get("cloud") is not None:
        c = doc["cloud"]
        if not isinstance(c, dict):
            raise ScenarioError("cloud must be an object")
        _require_keys(c, {"host", "port", "api_key"}, "cloud")
        port = _number(c, "port", "cloud")
        if not isinstance(port, int) or not 1 <= port <= 65535:
            raise ScenarioError(f"cloud: port must be 1..65535, got {port!r}")
        api_key = _string(c, "api_key", "cloud")
        if not _API_KEY_RE.match(api_key):
            raise ScenarioError("cloud: api_key must be 16 alphanumeric characters")
        cloud = CloudEndpoint(host=_string(c, "host", "cloud"), port=port, api_key=api_key)
    if cloud is not None and wifi is None:
        raise ScenarioError("cloud endpoint requires wifi credentials")

    return Scenario(
        seed=seed,
        duration_s=float(duration),
        tick_len_ms=tick_len,
        noise=noise,
        occupant=occupant,
        obstacles=obstacles,
        chair=chair,
        joystick_script=script,
        interactive=interactive,
        wifi=wifi,
        cloud=cloud,
    )


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"{path} is not valid JSON: {exc}") from None
    return scenario_from_dict(doc)


def scenario_to_dict(s: Scenario) -> dict:
    """Inverse of scenario_from_dict, handy for writing generated configs."""
    doc: dict = {
        "schema_version": SCHEMA_VERSION,
        "seed": s.seed,
        "duration_s": s.duration_s,
        "tick_len_ms": s.tick_len_ms,
        "noise": s.noise,
        "occupant": {
            "heart_rate_bpm": s.occupant.heart_rate_bpm,
            "temp_c": s.occupant.temp_c,
            "bp": [s.occupant.bp_systolic, s.occupant.bp_diastolic],
            "gait": s.occupant.gait,
            "cadence": s.occupant.cadence,
        },
        "obstacles": [
            {"cx": o.cx, "cy": o.cy, "radius": o.radius} for o in s.obstacles
        ],
        "chair": {
            "wheel_speed": s.chair.wheel_speed,
            "track_width": s.chair.track_width,
            "sensor_offset": s.chair.sensor_offset,
            "beam_half_angle": s.chair.beam_half_angle,
        },
        "joystick_script": [
            {"t_ms": p.t_ms, "x_norm": p.x_norm, "y_norm": p.y_norm}
            for p in s.joystick_script
        ],
        "interactive": s.interactive,
    }
    if s.wifi is not None:
        doc["wifi"] = {"ssid": s.wifi.ssid, "password": s.wifi.password}
    if s.cloud is not None:
        doc["cloud"] = {
            "host": s.cloud.host,
            "port": s.cloud.port,
            "api_key": s.cloud.api_key,
        }
    return doc
