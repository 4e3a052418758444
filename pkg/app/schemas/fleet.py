from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .house import HouseParams


class FleetSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_houses: int = Field(default=543, ge=1)
    nominal: HouseParams = HouseParams()
    heterogeneity_fraction: float = Field(default=0.20, ge=0, lt=1)
    rng_seed: int = 0
    # None keeps model-house scale; otherwise extensive parameters are scaled to this mean plateau
    avg_on_power_target: float | None = Field(default=2600.0, gt=0)
    # houses served by an external plant, counted from the end of the fleet
    n_remote: int = Field(default=20, ge=0)
    design_T_amb: float = 32.2


@dataclass(frozen=True, eq=False)
class TelemetryFrame:
    """Per-house snapshot after one control step. Arrays are aligned with house_ids."""

    t: float
    house_ids: tuple[str, ...]
    power: np.ndarray
    temperature: np.ndarray
    position: np.ndarray
    state: np.ndarray
    lock_remaining: np.ndarray
    accepted: np.ndarray
    requests: np.ndarray
    rated_power: np.ndarray
    inrush_peak: np.ndarray
    corrupt: np.ndarray
    seq: int = 0
    missed_command: bool = False
    turned_on: np.ndarray | None = None

    @property
    def n_houses(self) -> int:
        return len(self.house_ids)

    @property
    def aggregate_power(self) -> float:
        if self.corrupt.any():
            return float(self.power[~self.corrupt].sum())
        return float(self.power.sum())

    @property
    def counts(self) -> tuple[int, int, int]:
        """(n_on, n_off, n_locked); locked counts lockout-blocked off houses."""
        n_on = int(np.count_nonzero((self.state == 1) | (self.state == 3)))
        n_locked = int(np.count_nonzero(self.state == 2))
        return n_on, self.n_houses - n_on - n_locked, n_locked

    @property
    def starts(self) -> np.ndarray:
        """Houses whose compressor started during the step."""
        if self.turned_on is not None:
            return self.turned_on
        return self.inrush_peak > 0


@dataclass(frozen=True)
class FleetState:
    sim_time: float
    aggregate_power: float
    counts: tuple[int, int, int]
    n_houses: int
