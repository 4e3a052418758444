from abc import ABC, abstractmethod
from typing import Sequence

from ..schemas.channel import DeviceCommand
from ..schemas.fleet import TelemetryFrame
from ..sim.fleet import Fleet
from .client import PlantClient
from .session import PlantSession


class Plant(ABC):
    """What the runner drives: one frame out per command batch in."""

    @abstractmethod
    def start(self) -> TelemetryFrame:
        ...

    @abstractmethod
    def exchange(self, commands: Sequence[DeviceCommand]) -> TelemetryFrame:
        ...

    def close(self) -> None:
        pass


class LocalPlant(Plant):
    def __init__(self, fleet: Fleet, record_commands: bool = False):
        self.session = PlantSession(fleet, record_commands=record_commands)

    def start(self) -> TelemetryFrame:
        return self.session.latest

    def exchange(self, commands: Sequence[DeviceCommand]) -> TelemetryFrame:
        frame, _ = self.session.step([(c.house_id, c.target) for c in commands])
        return frame


class RemotePlant(Plant):
    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.client = PlantClient(host, port, timeout)
        self._t = 0.0

    def start(self) -> TelemetryFrame:
        self.client.connect()
        frame = self.client.read_frame()
        self._t = frame.t
        return frame

    def exchange(self, commands: Sequence[DeviceCommand]) -> TelemetryFrame:
        self.client.send_commands(self._t, commands)
        frame = self.client.read_frame()
        self._t = frame.t
        return frame

    def close(self) -> None:
        self.client.close()
