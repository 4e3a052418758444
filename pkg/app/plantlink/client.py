import logging
import socket
from typing import Sequence

from ..core.exceptions import ProtocolError
from ..schemas.channel import DeviceCommand
from ..schemas.fleet import TelemetryFrame
from ..schemas.wire import WireError, WireMeasurement
from .codec import command_message, decode, encode, measurement_to_frame

logger = logging.getLogger(__name__)


class PlantClient:
    """Blocking aggregator-side connection. The plant owns the clock: read_frame() blocks
    until the plant publishes the next step, and at most one command is sent per frame."""

    def __init__(self, host: str = "127.0.0.1", port: int = 7410, timeout: float = 30.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self.seq = 0
        self.frames_received = 0
        self.errors: list[str] = []
        self._sock: socket.socket | None = None
        self._reader = None
        self._ids: tuple[str, ...] | None = None

    def connect(self) -> "PlantClient":
        self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        self._reader = self._sock.makefile("rb")
        return self

    def close(self) -> None:
        if self._reader is not None:
            self._reader.close()
        if self._sock is not None:
            self._sock.close()
        self._sock = self._reader = None

    def __enter__(self) -> "PlantClient":
        return self.connect()

    def __exit__(self, *exc) -> None:
        self.close()

    def read_frame(self) -> TelemetryFrame:
        while True:
            line = self._reader.readline()
            if not line:
                raise ConnectionError("plant closed the connection")
            try:
                msg = decode(line)
            except ProtocolError as exc:
                logger.warning("dropping unreadable plant line: %s", exc)
                continue
            if isinstance(msg, WireError):
                logger.warning("plant reported: %s", msg.error)
                self.errors.append(msg.error)
                continue
            if isinstance(msg, WireMeasurement):
                frame = measurement_to_frame(msg, self._ids)
                self._ids = frame.house_ids
                self.frames_received += 1
                return frame

    def send_commands(self, t: float, commands: Sequence[DeviceCommand]) -> None:
        self.seq += 1
        self._sock.sendall(encode(command_message(self.seq, t, commands)))
