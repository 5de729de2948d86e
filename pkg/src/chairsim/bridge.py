"""WebSocket bridge for interactive runs.

One operator client at a time: outbound JSON state frames (the runner
publishes at 10 Hz), inbound joystick frames {x_norm, y_norm}. Losing
the client recenters the stick, so no input always means Stop.
"""

from __future__ import annotations

import json
import logging
import threading
from typing import Optional

from websockets.exceptions import ConnectionClosed
from websockets.sync.server import Server, ServerConnection, serve

log = logging.getLogger("chairsim.bridge")

BUSY_CLOSE_CODE = 1013  # "try again later": one operator only


class BridgeServer:
    """Owns the socket server; the tick loop calls joystick() and publish()."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0) -> None:
        self._lock = threading.Lock()
        self._joystick = (0.0, 0.0)
        self._client: Optional[ServerConnection] = None
        self._server: Server = serve(self._handle, host, port)
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self._server.socket.getsockname()[1]

    def start(self) -> "BridgeServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def __enter__(self) -> "BridgeServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- tick-loop surface ------------------------------------------------

    def joystick(self) -> tuple[float, float]:
        with self._lock:
            return self._joystick

    def publish(self, frame: dict) -> None:
        with self._lock:
            client = self._client
        if client is None:
            return
        try:
            client.send(json.dumps(frame))
        except ConnectionClosed:
            pass  # reader side handles the cleanup

    # -- client side --------------------------------------------------------

    def _handle(self, conn: ServerConnection) -> None:
        with self._lock:
            if self._client is not None:
                occupied = True
            else:
                occupied = False
                self._client = conn
        if occupied:
            conn.close(BUSY_CLOSE_CODE, "another operator is connected")
            return
        log.info("operator connected from %s", conn.remote_address)
        try:
            for message in conn:
                self._apply(message)
        except ConnectionClosed:
            pass
        finally:
            with self._lock:
                if self._client is conn:
                    self._client = None
                self._joystick = (0.0, 0.0)  # failsafe: no client, no motion
            log.info("operator disconnected")

    def _apply(self, message) -> None:
        try:
            doc = json.loads(message)
            x = float(doc["x_norm"])
            y = float(doc["y_norm"])
        except (ValueError, TypeError, KeyError):
            log.warning("ignoring malformed joystick frame: %.100s", message)
            return
        if not (-1.0 <= x <= 1.0 and -1.0 <= y <= 1.0):
            log.warning("ignoring out-of-range joystick frame (%s, %s)", x, y)
            return
        with self._lock:
            self._joystick = (x, y)
