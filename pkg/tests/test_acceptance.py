"""Acceptance gate: one test per release criterion, each printing a
single pass/fail line (visible with `pytest -s` or `-rA`) and enforcing
the stated tolerance and runtime budget.
"""

import dataclasses
import functools
import json
import math
import random
import socket
import threading
import time
import urllib.request
from pathlib import Path

import pytest

from chairsim.atlink import (
    AtDriver,
    AtModem,
    CloseTcp,
    JoinAp,
    LinkConfig,
    ModemState,
    OpenTcp,
    Ping,
    Reset,
    SetStationMode,
    StartSend,
    parse_at,
    serialize_at,
)
from chairsim.cloudd import CloudService
from chairsim.devices import ULTRA_MAX_RANGE_M, EchoReading, ping_ultrasonic
from chairsim.firmware import (
    MOUNT_THETA_RAD,
    V_SOUND_M_S,
    VitalsSample,
    decode_distance,
)
from chairsim.runner import printable_bytes, run_scenario
from chairsim.scenario import CloudEndpoint, load_scenario, scenario_from_dict
from chairsim.simcore import Rng

DATA_DIR = Path(__file__).resolve().parent / "data"
REFERENCE_SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "reference.json"
FIELD_NAMES = ["heart_rate", "systolic", "diastolic", "temp_c", "steps", "distance_m"]
FORWARD_PINS = (1, 1, 0, 1, 1, 0)


def criterion(n, label, budget_s):
    """Wrap one acceptance criterion: report PASS/FAIL, enforce the budget."""

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                fn(*args, **kwargs)
                elapsed = time.perf_counter() - start
                assert elapsed < budget_s, (
                    f"took {elapsed:.2f}s, budget {budget_s}s"
                )
            except BaseException:
                print(f"acceptance {n} ({label}): FAIL")
                raise
            print(f"acceptance {n} ({label}): PASS ({elapsed:.2f}s < {budget_s:g}s)")

        return wrapper

    return deco


# ---------------------------------------------------------------------------
# 1. distance equation


@criterion(1, "distance equation oracle", 1.0)
def test_acceptance_1_distance_equation():
    hand = decode_distance(EchoReading(t_echo=0.010), 343.0, 0.0)
    assert hand == pytest.approx(1.715, rel=1e-12)
    rnd = random.Random(101)
    for _ in range(100):
        v = rnd.uniform(300.0, 400.0)
        t = rnd.uniform(1e-4, 0.012)
        theta = rnd.uniform(0.0, math.radians(60.0))
        expected = v * t * math.cos(theta) / 2.0
        got = decode_distance(EchoReading(t_echo=t), v, theta)
        assert got == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# 2. range conformance


@criterion(2, "range conformance", 1.0)
def test_acceptance_2_range_conformance():
    rng = Rng(2024)
    rnd = random.Random(7)
    timeouts = readings = 0
    for _ in range(10_000):
        d = rnd.uniform(0.01, 3.5)
        echo = ping_ultrasonic(d, V_SOUND_M_S, MOUNT_THETA_RAD, rng, noise=True)
        got = decode_distance(echo, V_SOUND_M_S, MOUNT_THETA_RAD)
        if d > ULTRA_MAX_RANGE_M:
            assert got is None
        if got is None:
            timeouts += 1
            continue
        readings += 1
        assert got <= ULTRA_MAX_RANGE_M
        assert abs(got - d) <= 0.03 + 1e-9
    assert timeouts > 1000 and readings > 1000  # both regimes exercised


# ---------------------------------------------------------------------------
# 3. safety invariant


def _random_scenario(rnd):
    obstacles = []
    for _ in range(rnd.randint(3, 7)):
        radius = round(rnd.uniform(0.1, 0.3), 3)
        obstacles.append({
            "cx": round(rnd.uniform(radius + 0.55, 4.0), 3),
            "cy": round(rnd.uniform(-1.5, 1.5), 3),
            "radius": radius,
        })
    moves = [(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, -1.0), (1.0, 0.0),
             (-1.0, 0.0), (1.0, 1.0), (-1.0, 1.0), (0.9, 0.8), (0.0, 0.0)]
    script, t = [], 0
    duration_s = rnd.randint(3, 5)
    while t < duration_s * 1000:
        x, y = rnd.choice(moves)
        script.append({"t_ms": t, "x_norm": x, "y_norm": y})
        t += rnd.randint(200, 600)
    return scenario_from_dict({
        "schema_version": 1,
        "seed": rnd.randint(0, 2**32),
        "duration_s": duration_s,
        "occupant": {"gait": "walk", "cadence": 120},
        "obstacles": obstacles,
        "joystick_script": script,
    })


@criterion(3, "safety invariant", 30.0)
def test_acceptance_3_safety_invariant():
    rnd = random.Random(3033)
    saw_block = False
    for _ in range(50):
        result = run_scenario(_random_scenario(rnd), no_cloud=True)
        assert result.exit_code == 0 and result.violations == 0
        # independent scan of the trace: forward pins are only legal when
        # the previous tick's range was clear of the stop threshold
        prev = cur = None
        for ev in result.trace.events:
            if ev.kind == "command":
                prev, cur = cur, ev.payload.get("distance")
            elif ev.kind == "pins":
                frame = tuple(ev.payload[k] for k in
                              ("en1", "in1", "in2", "en2", "in3", "in4"))
                if frame == FORWARD_PINS:
                    assert prev is None or prev >= 0.30, (
                        f"forward pins at t={ev.t} after range {prev}"
                    )
            elif ev.kind == "fsm" and ev.payload.get("state") == "Blocked":
                saw_block = True
    assert saw_block  # the sweep actually provoked the stop behavior


# ---------------------------------------------------------------------------
# 4. telemetry round-trip


@criterion(4, "telemetry round-trip", 10.0)
def test_acceptance_4_telemetry_round_trip(tmp_path):
    with CloudService(str(tmp_path), min_interval=15.0, seed=44) as svc:
        ch = svc.store.create_channel("vitals", FIELD_NAMES)
        scenario = scenario_from_dict({
            "schema_version": 1,
            "seed": 9,
            "duration_s": 60,
            "occupant": {"gait": "walk", "cadence": 110},
            "obstacles": [{"cx": 3.35, "cy": 0.0, "radius": 0.25}],
            "joystick_script": [{"t_ms": 0, "x_norm": 0.0, "y_norm": 1.0}],
            "wifi": {"ssid": "ward", "password": "secret"},
            "cloud": {"host": svc.host, "port": svc.port, "api_key": ch.write_key},
        })
        result = run_scenario(scenario)
        assert result.exit_code == 0
        assert [u["status"] for u in result.uploads] == ["accepted"] * 4
        url = f"http://{svc.host}:{svc.port}/channels/{ch.id}/feeds.json"
        with urllib.request.urlopen(url) as resp:
            doc = json.load(resp)

    feeds = doc["feeds"]
    assert [row["entry_id"] for row in feeds] == [1, 2, 3, 4]
    for row, sent in zip(feeds, result.uploads):
        for k in ("field1", "field2", "field3", "field4", "field5", "field6"):
            assert row.get(k) == sent.get(k)
        assert row["created_at"] == sent["created_at"]
    assert [row["created_at"] for row in feeds] == [
        "2024-01-01T00:00:15Z", "2024-01-01T00:00:30Z",
        "2024-01-01T00:00:45Z", "2024-01-01T00:01:00Z",
    ]


# ---------------------------------------------------------------------------
# 5. vitals accuracy


def _vitals_run(**occupant):
    scenario = scenario_from_dict({
        "schema_version": 1,
        "seed": 5,
        "duration_s": 15,
        "noise": occupant.pop("noise", True),
        "occupant": occupant,
    })
    result = run_scenario(scenario, no_cloud=True)
    return result.uploads[0]


@criterion(5, "vitals accuracy", 5.0)
def test_acceptance_5_vitals_accuracy():
    for hr, temp in ((60, 36.5), (75, 37.0), (120, 38.7)):
        sent = _vitals_run(heart_rate_bpm=hr, temp_c=temp)
        assert abs(int(sent["field1"]) - hr) <= 1
        assert abs(float(sent["field4"]) - temp) <= 0.2 + 1e-9
    # cadence 80 for 15 s is a 20-step gait
    for noise, slack in ((False, 0), (True, 1)):
        sent = _vitals_run(gait="walk", cadence=80, noise=noise)
        assert abs(int(sent["field5"]) - 20) <= slack


# ---------------------------------------------------------------------------
# 6. AT conformance


RESPONSE_BODY_1 = (
    b"HTTP/1.1 200 OK\r\nContent-Type: text/plain\r\n"
    b"Content-Length: 1\r\nConnection: close\r\n\r\n1"
)


class _Socket:
    def __init__(self, response):
        self._response = response

    def sendall(self, data):
        pass

    def recv(self, n):
        chunk, self._response = self._response[:n], self._response[n:]
        return chunk

    def close(self):
        pass


def _connector(host, port):
    return _Socket(RESPONSE_BODY_1)


GOLDEN_LINK = LinkConfig(ssid="ward-2g", password="telemetry",
                         host="127.0.0.1", port=8100,
                         api_key="REF0CHANNEL0KEY0")


def _golden_session():
    lines = []
    driver = AtDriver(
        AtModem("ward-2g", "telemetry", connector=_connector),
        GOLDEN_LINK,
        recorder=lambda d, b: lines.append(
            ("> " if d == "tx" else "< ") + printable_bytes(b)
        ),
    )
    sample = VitalsSample(t=15_000, heart_rate=75, systolic=120, diastolic=80,
                          temp_c=36.5, steps=12, distance_m=1.27)
    assert driver.upload(sample) == 1
    return "".join(line + "\n" for line in lines)


ALL_COMMANDS = [Ping(), Reset(), SetStationMode(), JoinAp("ward-2g", "telemetry"),
                OpenTcp("127.0.0.1", 8100), StartSend(4), CloseTcp()]

LEGAL_PAIRS = {
    (ModemState.IDLE, Ping), (ModemState.IDLE, Reset),
    (ModemState.IDLE, SetStationMode), (ModemState.IDLE, JoinAp),
    (ModemState.WIFI_JOINED, Ping), (ModemState.WIFI_JOINED, Reset),
    (ModemState.WIFI_JOINED, SetStationMode), (ModemState.WIFI_JOINED, JoinAp),
    (ModemState.WIFI_JOINED, OpenTcp),
    (ModemState.TCP_OPEN, Ping), (ModemState.TCP_OPEN, Reset),
    (ModemState.TCP_OPEN, SetStationMode), (ModemState.TCP_OPEN, StartSend),
    (ModemState.TCP_OPEN, CloseTcp),
}


def _modem_in(state):
    modem = AtModem("ward-2g", "telemetry", connector=_connector)
    if state is ModemState.IDLE:
        return modem
    modem.feed(b'AT+CWJAP="ward-2g","telemetry"\r\n')
    if state is ModemState.WIFI_JOINED:
        return modem
    modem.feed(b'AT+CIPSTART="TCP","127.0.0.1",8100\r\n')
    if state is ModemState.TCP_OPEN:
        return modem
    modem.feed(b"AT+CIPSEND=4\r\n")
    assert modem.state is ModemState.AWAIT_PAYLOAD
    return modem


@criterion(6, "AT conformance", 1.0)
def test_acceptance_6_at_conformance():
    golden = (DATA_DIR / "at_session.txt").read_text(encoding="ascii")
    assert _golden_session() == golden

    for cmd in ALL_COMMANDS:
        assert parse_at(serialize_at(cmd)) == cmd

    for state in ModemState:
        for cmd in ALL_COMMANDS:
            modem = _modem_in(state)
            response = modem.handle_command(cmd)
            if (state, type(cmd)) in LEGAL_PAIRS:
                assert response != b"ERROR\r\n", (state, cmd)
            else:
                assert response == b"ERROR\r\n", (state, cmd)
                assert modem.state is state, (state, cmd)


# ---------------------------------------------------------------------------
# 7. cloud durability and numbering


def _get(url):
    with urllib.request.urlopen(url) as resp:
        return resp.read()


@criterion(7, "cloud durability and numbering", 10.0)
def test_acceptance_7_cloud_durability(tmp_path):
    data = tmp_path / "seq"
    with CloudService(str(data), min_interval=0.0, seed=70) as svc:
        ch = svc.store.create_channel("vitals", ["heart_rate"])
        base = f"http://{svc.host}:{svc.port}"
        ids = [
            int(_get(f"{base}/update?api_key={ch.write_key}&field1={i}"
                     "&created_at=2024-01-01T00:00:00Z"))
            for i in range(100)
        ]
        assert ids == list(range(1, 101))
        before = _get(f"{base}/channels/{ch.id}/feeds.json")

    with CloudService(str(data), min_interval=0.0, seed=70) as svc:
        after = _get(f"http://{svc.host}:{svc.port}/channels/{ch.id}/feeds.json")
    assert after == before

    with CloudService(str(tmp_path / "par"), min_interval=0.0, seed=71) as svc:
        ch = svc.store.create_channel("vitals", ["heart_rate"])
        base = f"http://{svc.host}:{svc.port}"
        ids, lock = [], threading.Lock()

        def client():
            got = [
                int(_get(f"{base}/update?api_key={ch.write_key}&field1=1"
                         "&created_at=2024-01-01T00:00:00Z"))
                for _ in range(25)
            ]
            with lock:
                ids.extend(got)

        threads = [threading.Thread(target=client) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert sorted(ids) == list(range(1, 201))


# ---------------------------------------------------------------------------
# 8. determinism


def _free_port():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@criterion(8, "determinism", 10.0)
def test_acceptance_8_determinism(tmp_path):
    reference = load_scenario(str(REFERENCE_SCENARIO))
    port = _free_port()

    def run_once(seed, name):
        # a fresh service with a fixed key seed makes the cloud leg part
        # of the determinism contract, not exempt from it
        out = tmp_path / name
        with CloudService(str(tmp_path / f"data-{name}"), port=port,
                          min_interval=15.0, seed=42) as svc:
            ch = svc.store.create_channel("vitals", FIELD_NAMES)
            scenario = dataclasses.replace(
                reference, seed=seed,
                cloud=CloudEndpoint(host="127.0.0.1", port=port,
                                    api_key=ch.write_key),
            )
            result = run_scenario(scenario, out_path=str(out))
            assert result.exit_code == 0
            assert [u["status"] for u in result.uploads] == ["accepted"] * 4
        return out.read_bytes()

    first = run_once(42, "a.ndjson")
    second = run_once(42, "b.ndjson")
    other = run_once(43, "c.ndjson")
    assert first == second
    assert other != first
