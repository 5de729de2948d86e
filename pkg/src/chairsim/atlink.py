"""AT-command link between the firmware and the telemetry service.

Three layers: a command grammar (parse/serialize), a modem emulator that
speaks the grammar over an injected TCP connector, and a driver that runs
the join/connect/send/close sequence for one vitals upload.
"""

from __future__ import annotations

import re
import socket
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Callable, Optional, Union

from .firmware import VitalsSample

DEFAULT_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)
API_KEY_RE = re.compile(r"^[A-Za-z0-9]{16}$")

CRLF = b"\r\n"
PROMPT = b"> "


# ---------------------------------------------------------------------------
# command grammar

class AtParseError(ValueError):
    pass


@dataclass(frozen=True)
class Ping:
    pass


@dataclass(frozen=True)
class Reset:
    pass


@dataclass(frozen=True)
class SetStationMode:
    pass


@dataclass(frozen=True)
class JoinAp:
    ssid: str
    password: str


@dataclass(frozen=True)
class OpenTcp:
    host: str
    port: int


@dataclass(frozen=True)
class StartSend:
    length: int


@dataclass(frozen=True)
class CloseTcp:
    pass


AtCommand = Union[Ping, Reset, SetStationMode, JoinAp, OpenTcp, StartSend, CloseTcp]

# quoted strings may not contain quotes or CR/LF
_QSTR = r'"([^"\r\n]*)"'
_JOIN_RE = re.compile(rf"^AT\+CWJAP={_QSTR},{_QSTR}$")
_OPEN_RE = re.compile(rf'^AT\+CIPSTART="TCP",{_QSTR},(\d+)$')
_SEND_RE = re.compile(r"^AT\+CIPSEND=(\d+)$")


def parse_at(line: str) -> AtCommand:
    """One CRLF-stripped command line to its typed form, or AtParseError."""
    if line == "AT":
        return Ping()
    if line == "AT+RST":
        return Reset()
    if line == "AT+CWMODE=1":
        return SetStationMode()
    m = _JOIN_RE.match(line)
    if m:
        return JoinAp(ssid=m.group(1), password=m.group(2))
    m = _OPEN_RE.match(line)
    if m:
        port = int(m.group(2))
        if not 1 <= port <= 65535:
            raise AtParseError(f"port out of range: {port}")
        return OpenTcp(host=m.group(1), port=port)
    m = _SEND_RE.match(line)
    if m:
        length = int(m.group(1))
        if length < 1:
            raise AtParseError(f"send length must be positive: {length}")
        return StartSend(length=length)
    if line == "AT+CIPCLOSE":
        return CloseTcp()
    raise AtParseError(f"unrecognized command: {line!r}")


def serialize_at(cmd: AtCommand) -> str:
    if isinstance(cmd, Ping):
        return "AT"
    if isinstance(cmd, Reset):
        return "AT+RST"
    if isinstance(cmd, SetStationMode):
        return "AT+CWMODE=1"
    if isinstance(cmd, JoinAp):
        return f'AT+CWJAP="{cmd.ssid}","{cmd.password}"'
    if isinstance(cmd, OpenTcp):
        return f'AT+CIPSTART="TCP","{cmd.host}",{cmd.port}'
    if isinstance(cmd, StartSend):
        return f"AT+CIPSEND={cmd.length}"
    if isinstance(cmd, CloseTcp):
        return "AT+CIPCLOSE"
    raise TypeError(f"not an AT command: {cmd!r}")


# ---------------------------------------------------------------------------
# modem emulator

class ModemState(Enum):
    IDLE = "Idle"
    WIFI_JOINED = "WifiJoined"
    TCP_OPEN = "TcpOpen"
    AWAIT_PAYLOAD = "AwaitPayload"


def _default_connector(host: str, port: int) -> socket.socket:
    sock = socket.create_connection((host, port), timeout=5.0)
    sock.settimeout(5.0)
    return sock


class AtModem:
    """Serial-attached wifi modem with a four-state session machine.

    feed() takes host-to-modem bytes and returns the modem's reply bytes.
    Commands are CRLF-terminated lines except while awaiting payload, when
    exactly the announced byte count is consumed raw. After a payload is
    forwarded, the peer's full response comes back as one +IPD,<n>: frame
    (the link closes each response at EOF, so framing needs no parsing).
    """

    def __init__(
        self,
        ssid: str,
        password: str,
        connector: Callable[[str, int], socket.socket] = _default_connector,
    ) -> None:
        self.ssid = ssid
        self.password = password
        self._connector = connector
        self.state = ModemState.IDLE
        self._buf = b""
        self._await_n = 0
        self._payload = b""
        self._sock: Optional[socket.socket] = None

    @property
    def awaiting(self) -> int:
        """Payload bytes still owed after AT+CIPSEND, else 0."""
        if self.state is not ModemState.AWAIT_PAYLOAD:
            return 0
        return self._await_n - len(self._payload)

    def feed(self, data: bytes) -> bytes:
        self._buf += data
        out = b""
        while True:
            if self.state is ModemState.AWAIT_PAYLOAD:
                take = min(self._await_n - len(self._payload), len(self._buf))
                self._payload += self._buf[:take]
                self._buf = self._buf[take:]
                if len(self._payload) < self._await_n:
                    break
                out += self._forward_payload()
                continue
            idx = self._buf.find(CRLF)
            if idx < 0:
                break
            line = self._buf[:idx]
            self._buf = self._buf[idx + 2 :]
            out += self._handle_line(line)
        return out

    def _handle_line(self, raw: bytes) -> bytes:
        try:
            cmd = parse_at(raw.decode("ascii"))
        except (AtParseError, UnicodeDecodeError):
            return b"ERROR" + CRLF
        return self.handle_command(cmd)

    def handle_command(self, cmd: AtCommand) -> bytes:
        """Apply one parsed command in the current state.

        Every (state, command) pair either transitions and answers, or
        answers ERROR and leaves the state alone.
        """
        s = self.state
        if s is ModemState.AWAIT_PAYLOAD:
            # mid-payload the line channel is not listening for commands
            return b"ERROR" + CRLF

        if isinstance(cmd, Ping):
            return b"OK" + CRLF
        if isinstance(cmd, Reset):
            self._drop_socket()
            self.state = ModemState.IDLE
            return b"OK" + CRLF + b"ready" + CRLF
        if isinstance(cmd, SetStationMode):
            return b"OK" + CRLF
        if isinstance(cmd, JoinAp):
            if s is ModemState.TCP_OPEN:
                return b"ERROR" + CRLF
            if cmd.ssid == self.ssid and cmd.password == self.password:
                self.state = ModemState.WIFI_JOINED
                return b"WIFI CONNECTED" + CRLF + b"WIFI GOT IP" + CRLF + b"OK" + CRLF
            return b"FAIL" + CRLF
        if isinstance(cmd, OpenTcp):
            if s is not ModemState.WIFI_JOINED:
                return b"ERROR" + CRLF
            try:
                self._sock = self._connector(cmd.host, cmd.port)
            except OSError:
                return b"ERROR" + CRLF
            self.state = ModemState.TCP_OPEN
            return b"CONNECT" + CRLF + b"OK" + CRLF
        if isinstance(cmd, StartSend):
            if s is not ModemState.TCP_OPEN:
                return b"ERROR" + CRLF
            self._await_n = cmd.length
            self._payload = b""
            self.state = ModemState.AWAIT_PAYLOAD
            return b"OK" + CRLF + PROMPT
        if isinstance(cmd, CloseTcp):
            if s is not ModemState.TCP_OPEN:
                return b"ERROR" + CRLF
            self._drop_socket()
            self.state = ModemState.WIFI_JOINED
            return b"CLOSED" + CRLF + b"OK" + CRLF
        raise TypeError(f"not an AT command: {cmd!r}")

    def _forward_payload(self) -> bytes:
        payload, self._payload = self._payload, b""
        self.state = ModemState.TCP_OPEN
        sock = self._sock
        if sock is None:
            return b"ERROR" + CRLF
        try:
            sock.sendall(payload)
            response = b""
            while True:
                chunk = sock.recv(65536)
                if not chunk:
                    break
                response += chunk
        except OSError:
            self._drop_socket()
            self.state = ModemState.WIFI_JOINED
            return b"ERROR" + CRLF
        out = b"SEND OK" + CRLF
        if response:
            out += b"+IPD," + str(len(response)).encode("ascii") + b":" + response
        return out

    def _drop_socket(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None


# ---------------------------------------------------------------------------
# request building

def build_update_request(
    sample: VitalsSample,
    api_key: str,
    host: str,
    epoch: datetime = DEFAULT_EPOCH,
) -> bytes:
    """One HTTP/1.1 GET for /update carrying the sample's populated fields.

    Absent rate or obstacle range simply omits field1/field6; created_at
    places the sample on the virtual clock so the service's rate limiting
    and feeds are reproducible run to run.
    """
    if not API_KEY_RE.match(api_key):
        raise ValueError(f"api_key must be 16 alphanumerics, got {api_key!r}")
    parts = [f"api_key={api_key}"]
    if sample.heart_rate is not None:
        parts.append(f"field1={sample.heart_rate}")
    parts.append(f"field2={sample.systolic}")
    parts.append(f"field3={sample.diastolic}")
    parts.append(f"field4={sample.temp_c:.2f}")
    parts.append(f"field5={sample.steps}")
    if sample.distance_m is not None:
        parts.append(f"field6={sample.distance_m:.2f}")
    parts.append(f"created_at={format_virtual_time(sample.t, epoch)}")
    query = "&".join(parts)
    request = (
        f"GET /update?{query} HTTP/1.1\r\n"
        f"Host: {host}\r\n"
        "Connection: close\r\n"
        "\r\n"
    )
    return request.encode("ascii")


def format_virtual_time(t_ms: int, epoch: datetime = DEFAULT_EPOCH) -> str:
    """Milliseconds on the virtual clock to an ISO-8601 UTC stamp."""
    stamp = epoch + timedelta(milliseconds=t_ms)
    text = stamp.strftime("%Y-%m-%dT%H:%M:%S")
    if t_ms % 1000:
        text += f".{t_ms % 1000:03d}"
    return text + "Z"


def parse_http_response(raw: bytes) -> tuple[int, bytes]:
    """Status code and body from a connection-close HTTP response."""
    head, sep, body = raw.partition(b"\r\n\r\n")
    if not sep:
        raise ValueError("response has no header terminator")
    status_line = head.split(b"\r\n", 1)[0]
    fields = status_line.split(b" ", 2)
    if len(fields) < 2 or not fields[0].startswith(b"HTTP/"):
        raise ValueError(f"bad status line: {status_line!r}")
    return int(fields[1]), body


# ---------------------------------------------------------------------------
# driver

class AtTransportError(Exception):
    """A link step did not get the reply it needed; carries the step name."""

    def __init__(self, step: str, detail: str = "") -> None:
        self.step = step
        super().__init__(f"{step}: {detail}" if detail else step)


@dataclass(frozen=True)
class LinkConfig:
    ssid: str
    password: str
    host: str
    port: int
    api_key: str


Recorder = Callable[[str, bytes], None]  # direction "tx" | "rx"


class AtDriver:
    """Runs the firmware side of the link, one blocking upload at a time."""

    def __init__(
        self,
        modem: AtModem,
        config: LinkConfig,
        recorder: Optional[Recorder] = None,
        epoch: datetime = DEFAULT_EPOCH,
    ) -> None:
        self._modem = modem
        self.config = config
        self._recorder = recorder
        self._epoch = epoch
        self._pending = b""
        self._joined = False

    # -- byte plumbing ------------------------------------------------

    def _send(self, data: bytes) -> None:
        if self._recorder:
            self._recorder("tx", data)
        reply = self._modem.feed(data)
        if reply and self._recorder:
            self._recorder("rx", reply)
        self._pending += reply

    def _send_command(self, cmd: AtCommand) -> None:
        self._send(serialize_at(cmd).encode("ascii") + CRLF)

    def _next_token(self, step: str) -> tuple[str, bytes]:
        """Pop one modem reply unit: a line, the send prompt, or an +IPD frame."""
        buf = self._pending
        if buf.startswith(PROMPT):
            self._pending = buf[len(PROMPT) :]
            return "prompt", PROMPT
        if buf.startswith(b"+IPD,"):
            head, sep, rest = buf.partition(b":")
            if not sep:
                raise AtTransportError(step, "truncated +IPD frame")
            n = int(head[5:])
            if len(rest) < n:
                raise AtTransportError(step, "short +IPD frame")
            self._pending = rest[n:]
            return "ipd", rest[:n]
        idx = buf.find(CRLF)
        if idx < 0:
            raise AtTransportError(step, f"no reply (buffer {buf!r})")
        self._pending = buf[idx + 2 :]
        return "line", buf[:idx]

    def _expect_lines(self, step: str, *wanted: bytes) -> None:
        for want in wanted:
            kind, got = self._next_token(step)
            if kind != "line" or got != want:
                raise AtTransportError(step, f"wanted {want!r}, got {got!r}")

    # -- link procedures ----------------------------------------------

    @property
    def joined(self) -> bool:
        return self._joined

    def ensure_joined(self) -> None:
        if self._joined:
            return
        self._pending = b""
        self._send_command(Ping())
        self._expect_lines("ping", b"OK")
        self._send_command(Reset())
        self._expect_lines("reset", b"OK", b"ready")
        self._send_command(SetStationMode())
        self._expect_lines("mode", b"OK")
        self._send_command(JoinAp(self.config.ssid, self.config.password))
        kind, got = self._next_token("join")
        if got == b"FAIL":
            raise AtTransportError("join", "access point refused credentials")
        if got != b"WIFI CONNECTED":
            raise AtTransportError("join", f"unexpected {got!r}")
        self._expect_lines("join", b"WIFI GOT IP", b"OK")
        self._joined = True

    def upload(self, sample: VitalsSample) -> int:
        """Push one sample; returns the entry id the service assigned.

        Raises AtTransportError if any step degrades, including the
        service answering "0" (rejected) or a non-200 status.
        """
        try:
            return self._upload(sample)
        except AtTransportError:
            self._recover()
            raise

    def _upload(self, sample: VitalsSample) -> int:
        self.ensure_joined()
        self._pending = b""
        request = build_update_request(
            sample, self.config.api_key, self.config.host, self._epoch
        )
        self._send_command(OpenTcp(self.config.host, self.config.port))
        self._expect_lines("connect", b"CONNECT", b"OK")
        self._send_command(StartSend(len(request)))
        self._expect_lines("send", b"OK")
        kind, _ = self._next_token("send")
        if kind != "prompt":
            raise AtTransportError("send", "no payload prompt")
        self._send(request)
        self._expect_lines("payload", b"SEND OK")
        kind, raw = self._next_token("response")
        if kind != "ipd":
            raise AtTransportError("response", f"expected +IPD, got {raw!r}")
        self._send_command(CloseTcp())
        self._expect_lines("close", b"CLOSED", b"OK")
        try:
            status, body = parse_http_response(raw)
            entry_id = int(body.strip() or b"0")
        except ValueError as exc:
            raise AtTransportError("response", str(exc)) from None
        if status != 200:
            raise AtTransportError("response", f"status {status}")
        if entry_id == 0:
            raise AtTransportError("response", "service rejected the update")
        return entry_id

    def _recover(self) -> None:
        """Best-effort close so the next period starts from WifiJoined."""
        owed = self._modem.awaiting
        if owed:
            # flush the half-announced payload so line parsing resumes
            self._modem.feed(b" " * owed)
        if self._modem.state is ModemState.TCP_OPEN:
            self._modem.feed(serialize_at(CloseTcp()).encode("ascii") + CRLF)
        self._pending = b""
