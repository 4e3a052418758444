import heapq
import itertools
import logging
from typing import Generic, Iterable, TypeVar

import numpy as np

from ..models.enums import ChannelMode
from ..schemas.channel import ChannelModel, DeviceCommand

logger = logging.getLogger(__name__)

M = TypeVar("M")


class Channel(Generic[M]):
    """Delay/loss model plus the in-flight queue ordered by delivery time.

    Payloads pass through untouched; delivery order follows delivery time, then send order.
    """

    def __init__(self, model: ChannelModel, stream: int = 0):
        self.model = model
        self.rng = np.random.default_rng([model.rng_seed, stream])
        self.loss_rate = (float(self.rng.uniform(model.loss_rate_min, model.loss_rate_max))
                          if model.mode is ChannelMode.IMPAIRED else 0.0)
        self._queue: list[tuple[float, int, M]] = []
        self._counter = itertools.count()
        self.sent = 0
        self.dropped = 0

    def transmit(self, msg: M, send_time: float) -> tuple[M, float] | None:
        if self.model.mode is ChannelMode.PERFECT:
            return msg, send_time
        rate = (self.rng.uniform(self.model.loss_rate_min, self.model.loss_rate_max)
                if self.model.per_message_loss else self.loss_rate)
        if self.rng.random() < rate:
            return None
        delay = max(0.0, float(self.rng.normal(self.model.delay_mean, self.model.delay_std)))
        return msg, send_time + delay

    def send(self, msg: M, send_time: float) -> bool:
        self.sent += 1
        outcome = self.transmit(msg, send_time)
        if outcome is None:
            self.dropped += 1
            return False
        heapq.heappush(self._queue, (outcome[1], next(self._counter), outcome[0]))
        return True

    def send_many(self, msgs: Iterable[M], send_time: float) -> None:
        for msg in msgs:
            self.send(msg, send_time)

    def pop_due(self, now: float) -> list[M]:
        due = []
        while self._queue and self._queue[0][0] <= now:
            due.append(heapq.heappop(self._queue)[2])
        return due

    @property
    def in_flight(self) -> int:
        return len(self._queue)


class StaleFilter:
    """Drops device commands older than the newest one already applied to that device."""

    def __init__(self):
        self.latest: dict[str, int] = {}
        self.discarded = 0

    def __call__(self, commands: Iterable[DeviceCommand]) -> list[DeviceCommand]:
        fresh = []
        for cmd in commands:
            if cmd.seq < self.latest.get(cmd.house_id, -1):
                self.discarded += 1
                continue
            self.latest[cmd.house_id] = cmd.seq
            fresh.append(cmd)
        return fresh
