import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..models.enums import SwitchTarget
from ..schemas.fleet import TelemetryFrame
from ..sim.fleet import Fleet
from ..sim.house import ACCEPTED, REJECTED

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AppliedCommand:
    t: float
    house_id: str
    target: SwitchTarget
    accepted: bool


class PlantSession:
    """Owns the fleet and its clock. Every step filters commands for feasibility, advances
    the fleet by one control period and returns the resulting frame."""

    def __init__(self, fleet: Fleet, record_commands: bool = False):
        self.fleet = fleet
        self.record_commands = record_commands
        self.applied: list[AppliedCommand] = []
        self.frames_emitted = 0
        self.missed_steps = 0
        self.unknown_ids = 0
        self.latest = fleet.frame()

    @property
    def sim_time(self) -> float:
        return self.fleet.sim_time

    def step(self, commands: Sequence[tuple[str, SwitchTarget]] | None) -> tuple[TelemetryFrame, list[str]]:
        """Advance one control period. None means no command arrived in time: the fleet
        free-runs and the frame carries the missed-command flag."""
        if commands is None:
            self.missed_steps += 1
            frame = self.fleet.step(missed_command=True)
            unknown: list[str] = []
        else:
            targets, unknown = self.fleet.targets_for(commands)
            if unknown:
                self.unknown_ids += len(unknown)
                logger.warning("ignoring %d command(s) for unknown house ids", len(unknown))
            t = self.fleet.sim_time
            frame = self.fleet.step(targets)
            if self.record_commands:
                self._record(t, targets, frame)
        self.latest = frame
        self.frames_emitted += 1
        return frame, unknown

    def _record(self, t: float, targets: np.ndarray, frame: TelemetryFrame) -> None:
        for index in np.flatnonzero(targets):
            self.applied.append(AppliedCommand(
                t=t,
                house_id=frame.house_ids[index],
                target=SwitchTarget.ON if targets[index] > 0 else SwitchTarget.OFF,
                accepted=bool(frame.accepted[index] == ACCEPTED),
            ))

    def status(self) -> dict:
        frame = self.latest
        n_on, n_off, n_locked = frame.counts
        return {
            "sim_time": frame.t,
            "seq": frame.seq,
            "n_houses": frame.n_houses,
            "aggregate_power_w": frame.aggregate_power,
            "n_on": n_on,
            "n_off": n_off,
            "n_locked": n_locked,
            "missed_steps": self.missed_steps,
            "rejected_commands": int(np.count_nonzero(frame.accepted == REJECTED)),
        }
