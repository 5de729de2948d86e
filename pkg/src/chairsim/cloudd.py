"""Channel-feed telemetry service with an append-only NDJSON store.

Speaks the classic IoT update protocol: GET or POST /update with numbered
fields and a write key, feeds read back as JSON or CSV, channels created
through a small admin endpoint. Every accepted write hits disk before the
response leaves, so a kill at any point loses nothing acknowledged.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import unquote_plus, urlsplit

from .simcore import Rng

log = logging.getLogger("chairsim.cloudd")

MAX_FIELDS = 8
KEY_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
KEY_LENGTH = 16

_FIELD_PARAM_RE = re.compile(r"^field([1-8])$")
_DECIMAL_RE = re.compile(r"^-?[0-9]+(\.[0-9]+)?$")


class UpdateError(ValueError):
    """Client-side problem with an /update request (maps to HTTP 400)."""


def parse_timestamp(text: str) -> float:
    """ISO-8601 to epoch seconds; naive stamps count as UTC."""
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError as exc:
        raise UpdateError(f"bad created_at: {exc}") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def format_timestamp(epoch_s: float) -> str:
    stamp = datetime.fromtimestamp(epoch_s, tz=timezone.utc)
    return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Channel:
    id: int
    name: str
    write_key: str
    read_key: Optional[str]
    field_names: list[str]
    created_at: str

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "write_key": self.write_key,
            "read_key": self.read_key,
            "field_names": self.field_names,
            "created_at": self.created_at,
        }


@dataclass(frozen=True)
class FeedEntry:
    entry_id: int
    created_at: str
    fields: dict[str, str] = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {"entry_id": self.entry_id, "created_at": self.created_at}
        rec.update(sorted(self.fields.items()))
        return rec


def _read_ndjson(path: str) -> list[dict]:
    """All complete records in the file; a torn final line is cut off."""
    if not os.path.exists(path):
        return []
    with open(path, "rb") as fh:
        raw = fh.read()
    records = []
    offset = 0
    good_end = 0
    for line in raw.split(b"\n"):
        end = offset + len(line) + 1
        if line:
            try:
                records.append(json.loads(line))
                good_end = end
            except ValueError:
                if end <= len(raw):
                    raise RuntimeError(f"{path}: corrupt record at byte {offset}")
                break  # torn tail from an interrupted append
        offset = end
    if good_end < len(raw):
        log.warning("%s: dropping %d bytes of torn tail", path, len(raw) - good_end)
        with open(path, "r+b") as fh:
            fh.truncate(good_end)
    return records


class ChannelStore:
    """All channel and feed state, backed by one NDJSON file per channel.

    A single lock serializes every mutation: at desk scale that is both
    the simplest and a sufficient way to keep entry ids gapless under
    concurrent writers.
    """

    def __init__(
        self,
        data_dir: str,
        min_interval: float = 15.0,
        seed: Optional[int] = None,
    ) -> None:
        if min_interval < 0:
            raise ValueError("min_interval must be >= 0")
        self.data_dir = data_dir
        self.min_interval = min_interval
        os.makedirs(data_dir, exist_ok=True)
        self._lock = threading.Lock()
        self._rng = Rng(seed if seed is not None else int.from_bytes(os.urandom(8), "big"))
        self._channels: dict[int, Channel] = {}
        self._by_write_key: dict[str, int] = {}
        self._feeds: dict[int, list[FeedEntry]] = {}
        self._last_accept: dict[int, float] = {}
        self._files: dict[int, object] = {}
        self._channels_path = os.path.join(data_dir, "channels.ndjson")
        self._recover()

    # -- persistence ----------------------------------------------------

    def _feed_path(self, channel_id: int) -> str:
        return os.path.join(self.data_dir, f"feed_{channel_id}.ndjson")

    def _recover(self) -> None:
        for rec in _read_ndjson(self._channels_path):
            ch = Channel(
                id=rec["id"],
                name=rec["name"],
                write_key=rec["write_key"],
                read_key=rec["read_key"],
                field_names=list(rec["field_names"]),
                created_at=rec["created_at"],
            )
            self._channels[ch.id] = ch
            self._by_write_key[ch.write_key] = ch.id
            self._feeds[ch.id] = []
        for ch_id in self._channels:
            entries = self._feeds[ch_id]
            for rec in _read_ndjson(self._feed_path(ch_id)):
                entry = FeedEntry(
                    entry_id=rec["entry_id"],
                    created_at=rec["created_at"],
                    fields={k: v for k, v in rec.items() if _FIELD_PARAM_RE.match(k)},
                )
                if entry.entry_id != len(entries) + 1:
                    raise RuntimeError(
                        f"feed {ch_id}: entry_id {entry.entry_id} after {len(entries)}"
                    )
                entries.append(entry)
            if entries:
                self._last_accept[ch_id] = parse_timestamp(entries[-1].created_at)

    def _append(self, path_key, path: str, record: dict) -> None:
        fh = self._files.get(path_key)
        if fh is None:
            fh = open(path, "ab")
            self._files[path_key] = fh
        fh.write(json.dumps(record, separators=(",", ":")).encode("ascii") + b"\n")
        fh.flush()
        os.fsync(fh.fileno())

    def close(self) -> None:
        with self._lock:
            for fh in self._files.values():
                fh.close()
            self._files.clear()

    # -- channels ---------------------------------------------------------

    def _new_key(self) -> str:
        while True:
            key = "".join(
                KEY_ALPHABET[self._rng.next_u64() % len(KEY_ALPHABET)]
                for _ in range(KEY_LENGTH)
            )
            if key not in self._by_write_key:
                return key

    def create_channel(
        self,
        name: str,
        field_names: list[str],
        read_key: Optional[str] = None,
        now: Optional[float] = None,
    ) -> Channel:
        if not name:
            raise UpdateError("channel name must be non-empty")
        if not 1 <= len(field_names) <= MAX_FIELDS:
            raise UpdateError(f"need 1..{MAX_FIELDS} field names")
        if any(not isinstance(n, str) or not n for n in field_names):
            raise UpdateError("field names must be non-empty strings")
        with self._lock:
            ch = Channel(
                id=max(self._channels, default=0) + 1,
                name=name,
                write_key=self._new_key(),
                read_key=read_key,
                field_names=list(field_names),
                created_at=format_timestamp(now if now is not None else time.time()),
            )
            self._append("channels", self._channels_path, ch.to_record())
            self._channels[ch.id] = ch
            self._by_write_key[ch.write_key] = ch.id
            self._feeds[ch.id] = []
            return ch

    def channel(self, channel_id: int) -> Channel:
        with self._lock:
            return self._channels[channel_id]

    # -- updates ---------------------------------------------------------

    def handle_update(self, params: dict[str, str], now: Optional[float] = None) -> int:
        """Apply one /update; returns the entry id, or 0 when rate-limited
        or the write key matches nothing. Raises UpdateError on bad input."""
        fields: dict[str, str] = {}
        for key, value in params.items():
            if _FIELD_PARAM_RE.match(key):
                if value == "":
                    continue  # blank means absent
                if not _DECIMAL_RE.match(value):
                    raise UpdateError(f"{key} is not decimal: {value!r}")
                fields[key] = value
        created_at = params.get("created_at")
        if created_at is not None:
            ts = parse_timestamp(created_at)
        else:
            ts = now if now is not None else time.time()
            created_at = format_timestamp(ts)

        with self._lock:
            ch_id = self._by_write_key.get(params.get("api_key", ""))
            if ch_id is None:
                return 0
            last = self._last_accept.get(ch_id)
            if last is not None and ts - last < self.min_interval:
                return 0
            entries = self._feeds[ch_id]
            entry = FeedEntry(
                entry_id=len(entries) + 1,
                created_at=created_at,
                fields=fields,
            )
            self._append(ch_id, self._feed_path(ch_id), entry.to_record())
            entries.append(entry)
            self._last_accept[ch_id] = ts
            return entry.entry_id

    # -- reads -------------------------------------------------------------

    def authorize_read(self, channel_id: int, api_key: Optional[str]) -> bool:
        ch = self.channel(channel_id)
        return ch.read_key is None or api_key == ch.read_key

    def feeds(self, channel_id: int, results: Optional[int] = None) -> list[FeedEntry]:
        with self._lock:
            entries = self._feeds[channel_id]
            if results is None:
                return list(entries)
            return entries[len(entries) - min(results, len(entries)) :]


# ---------------------------------------------------------------------------
# rendering

def render_feeds_json(ch: Channel, entries: list[FeedEntry]) -> bytes:
    channel_obj: dict = {"id": ch.id, "name": ch.name}
    for i, name in enumerate(ch.field_names, start=1):
        channel_obj[f"field{i}"] = name
    channel_obj["created_at"] = ch.created_at
    feeds = []
    for e in entries:
        row: dict = {"created_at": e.created_at, "entry_id": e.entry_id}
        for i in range(1, len(ch.field_names) + 1):
            row[f"field{i}"] = e.fields.get(f"field{i}")
        feeds.append(row)
    doc = {"channel": channel_obj, "feeds": feeds}
    return json.dumps(doc, separators=(",", ":")).encode("utf-8") + b"\n"


def render_feeds_csv(ch: Channel, entries: list[FeedEntry]) -> bytes:
    names = [f"field{i}" for i in range(1, len(ch.field_names) + 1)]
    lines = [",".join(["created_at", "entry_id"] + names)]
    for e in entries:
        row = [e.created_at, str(e.entry_id)]
        row += [e.fields.get(n, "") for n in names]
        lines.append(",".join(row))
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# HTTP front end

def _parse_query(qs: str) -> dict[str, str]:
    """Strict form decoding: every pair key=value, no duplicate keys."""
    params: dict[str, str] = {}
    if not qs:
        return params
    for pair in qs.split("&"):
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise UpdateError(f"malformed parameter: {pair!r}")
        key = unquote_plus(key)
        if key in params:
            raise UpdateError(f"duplicate parameter: {key}")
        params[key] = unquote_plus(value)
    return params


_FEEDS_RE = re.compile(r"^/channels/(\d+)/feeds\.(json|csv)$")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "CloudHttpServer"

    # deterministic responses: no Date/Server headers, explicit close
    def _respond(self, code: int, body: bytes, ctype: str) -> None:
        self.send_response_only(code)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)
        self.close_connection = True

    def _error(self, code: int, message: str) -> None:
        body = json.dumps({"error": message}).encode("utf-8") + b"\n"
        self._respond(code, body, "application/json")

    def log_message(self, fmt: str, *args) -> None:
        log.debug("%s " + fmt, self.client_address[0], *args)

    def _body_params(self) -> dict[str, str]:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length).decode("utf-8", "replace") if length else ""
        return _parse_query(raw)

    def do_GET(self) -> None:
        split = urlsplit(self.path)
        try:
            if split.path == "/update":
                self._handle_update(_parse_query(split.query))
                return
            m = _FEEDS_RE.match(split.path)
            if m:
                self._handle_feeds(int(m.group(1)), m.group(2), _parse_query(split.query))
                return
        except UpdateError as exc:
            self._error(400, str(exc))
            return
        self._error(404, "no such resource")

    def do_POST(self) -> None:
        split = urlsplit(self.path)
        try:
            if split.path == "/update":
                params = _parse_query(split.query)
                for key, value in self._body_params().items():
                    if key in params:
                        raise UpdateError(f"duplicate parameter: {key}")
                    params[key] = value
                self._handle_update(params)
                return
            if split.path == "/admin/channels":
                self._handle_create_channel()
                return
        except UpdateError as exc:
            self._error(400, str(exc))
            return
        self._error(404, "no such resource")

    def _handle_update(self, params: dict[str, str]) -> None:
        entry_id = self.server.store.handle_update(params)
        self._respond(200, str(entry_id).encode("ascii"), "text/plain")

    def _handle_feeds(self, channel_id: int, fmt: str, params: dict[str, str]) -> None:
        store = self.server.store
        results: Optional[int] = None
        if "results" in params:
            try:
                results = int(params["results"])
            except ValueError:
                raise UpdateError(f"results is not an integer: {params['results']!r}")
            if results < 0:
                raise UpdateError("results must be >= 0")
        try:
            ch = store.channel(channel_id)
        except KeyError:
            self._error(404, f"no channel {channel_id}")
            return
        if not store.authorize_read(channel_id, params.get("api_key")):
            self._error(401, "read key required")
            return
        entries = store.feeds(channel_id, results)
        if fmt == "json":
            self._respond(200, render_feeds_json(ch, entries), "application/json")
        else:
            self._respond(200, render_feeds_csv(ch, entries), "text/csv")

    def _handle_create_channel(self) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        try:
            doc = json.loads(self.rfile.read(length) or b"")
        except ValueError:
            raise UpdateError("body is not valid JSON")
        if not isinstance(doc, dict):
            raise UpdateError("body must be a JSON object")
        unknown = set(doc) - {"name", "field_names", "read_key"}
        if unknown:
            raise UpdateError(f"unknown keys: {sorted(unknown)}")
        read_key = doc.get("read_key")
        if read_key is not None and not isinstance(read_key, str):
            raise UpdateError("read_key must be a string")
        name = doc.get("name")
        field_names = doc.get("field_names")
        if not isinstance(name, str) or not isinstance(field_names, list):
            raise UpdateError("need name (string) and field_names (list)")
        ch = self.server.store.create_channel(name, field_names, read_key)
        body = json.dumps(ch.to_record(), separators=(",", ":")).encode("utf-8") + b"\n"
        self._respond(200, body, "application/json")


class CloudHttpServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr: tuple[str, int], store: ChannelStore) -> None:
        super().__init__(addr, _Handler)
        self.store = store


class CloudService:
    """Owns a store plus its HTTP server; start() serves on a daemon thread."""

    def __init__(
        self,
        data_dir: str,
        host: str = "127.0.0.1",
        port: int = 0,
        min_interval: float = 15.0,
        seed: Optional[int] = None,
    ) -> None:
        self.store = ChannelStore(data_dir, min_interval=min_interval, seed=seed)
        self._httpd = CloudHttpServer((host, port), self.store)
        self._thread: Optional[threading.Thread] = None

    @property
    def host(self) -> str:
        return self._httpd.server_address[0]

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    def start(self) -> "CloudService":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None
        self._httpd.server_close()
        self.store.close()

    def __enter__(self) -> "CloudService":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
