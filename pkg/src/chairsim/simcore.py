"""Virtual clock, deterministic RNG, and the append-only event trace.

Everything downstream is driven from these three primitives, which is what
makes a whole run byte-reproducible: time only moves through SimClock,
randomness only comes out of Rng streams forked from one seed, and every
observable effect is recorded as a TraceEvent with canonical serialization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

_MASK64 = 0xFFFFFFFFFFFFFFFF

#: Trace event categories. Fixed vocabulary; replay tools key off these.
EVENT_KINDS = ("sensor", "command", "pins", "at_tx", "at_rx", "http", "pose", "fsm")


class TraceOrderError(ValueError):
    """An event was emitted with a timestamp older than the trace tail."""


@dataclass
class SimClock:
    """Integer-millisecond virtual clock advanced in fixed ticks."""

    now: int = 0
    tick_len: int = 10

    def __post_init__(self) -> None:
        if self.tick_len <= 0:
            raise ValueError(f"tick_len must be positive, got {self.tick_len}")
        if self.now % self.tick_len != 0:
            raise ValueError(f"now={self.now} is not a multiple of tick_len={self.tick_len}")

    def advance(self) -> int:
        """Move time forward by exactly one tick and return the new now."""
        self.now += self.tick_len
        return self.now


class Rng:
    """splitmix64 pseudo-random stream.

    The generator is fixed on purpose: splitmix64 is a well-known 64-bit
    mixer (Steele, Lea & Flood 2014) with exact integer semantics, so the
    same seed yields the same stream on every platform.  Do not change the
    algorithm; recorded traces depend on it.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = self.seed

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_uniform(self, lo: float, hi: float) -> float:
        """Uniform draw in [lo, hi). Degenerate lo == hi returns lo."""
        if lo > hi:
            raise ValueError(f"lo={lo} > hi={hi}")
        # 53 bits of mantissa -> float in [0, 1)
        frac = (self.next_u64() >> 11) * (2.0 ** -53)
        return lo + (hi - lo) * frac

    def fork(self, label: str) -> "Rng":
        """Derive an independent stream for a named consumer.

        Forks hang off the *seed*, not the current state, so the stream a
        device sees never depends on how much anyone else has drawn.
        """
        h = 0xCBF29CE484222325  # FNV-1a 64-bit
        for b in label.encode("utf-8"):
            h = ((h ^ b) * 0x100000001B3) & _MASK64
        return Rng(self.seed ^ h)


def _canon_value(v):
    """Quantize a payload value so serialization round-trips exactly."""
    if isinstance(v, bool):
        raise TypeError("trace payloads carry strings and numbers, not bools")
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError(f"non-finite payload value {v!r}")
        return round(v, 6)
    if v is None or isinstance(v, (int, str)):
        return v
    raise TypeError(f"unsupported payload value type {type(v).__name__}")


@dataclass(frozen=True)
class TraceEvent:
    """One timestamped fact about the run.

    Payload values are quantized at construction (floats to 6 decimals) so
    that the canonical NDJSON form parses back to an equal event.
    """

    t: int
    kind: str
    payload: dict

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        object.__setattr__(
            self, "payload", {k: _canon_value(v) for k, v in self.payload.items()}
        )

    def to_line(self) -> str:
        """Canonical single-line form: fixed key order, %.6f floats."""
        parts = [f'"t":{self.t}', f'"kind":{json.dumps(self.kind)}']
        inner = []
        for k in sorted(self.payload):
            v = self.payload[k]
            if isinstance(v, float):
                rendered = f"{v:.6f}"
            elif v is None:
                rendered = "null"
            elif isinstance(v, int):
                rendered = str(v)
            else:
                rendered = json.dumps(v, ensure_ascii=False)
            inner.append(f"{json.dumps(k)}:{rendered}")
        parts.append('"payload":{' + ",".join(inner) + "}")
        return "{" + ",".join(parts) + "}"

    @classmethod
    def from_line(cls, line: str) -> "TraceEvent":
        obj = json.loads(line)
        return cls(t=obj["t"], kind=obj["kind"], payload=obj["payload"])


class Trace:
    """Append-only, time-ordered event log."""

    def __init__(self) -> None:
        self.events: list[TraceEvent] = []

    def emit(self, event: TraceEvent) -> None:
        if self.events and event.t < self.events[-1].t:
            raise TraceOrderError(
                f"event at t={event.t} is older than trace tail t={self.events[-1].t}"
            )
        self.events.append(event)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def serialize(self) -> str:
        """NDJSON, one event per line, LF endings, trailing newline."""
        return "".join(ev.to_line() + "\n" for ev in self.events)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.serialize())

    @classmethod
    def parse(cls, text: str) -> "Trace":
        trace = cls()
        for line in text.splitlines():
            if line:
                trace.emit(TraceEvent.from_line(line))
        return trace

    @classmethod
    def load(cls, path) -> "Trace":
        with open(path, "r", encoding="utf-8") as f:
            return cls.parse(f.read())
