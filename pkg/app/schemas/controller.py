from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..models.enums import ControllerKind, RequestKind, SwitchTarget


class PiConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kp: float = Field(default=1.0, ge=0)
    ki: float = Field(default=0.01, ge=0)
    # W·s; None sizes the clamp at ten control steps of full fleet capacity
    anti_windup_limit: float | None = Field(default=None, gt=0)
    avg_on_power: float = Field(default=2600.0, gt=0)


class MarkovConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_temp_bins: int = Field(default=20, ge=2)
    transition_matrix: list[list[float]] | None = None
    avg_on_power: float = Field(default=2600.0, gt=0)
    use_delayed_dynamics: bool = True
    lockout_duration: float = Field(default=180.0, ge=0)
    # steps a freshly started device spends in the delay bins; None derives it from the sensor lag
    delay_steps: int | None = Field(default=None, ge=1)
    sensor_lag_tau: float = Field(default=12.0, ge=0)
    # replace avg_on_power with the measured mean power of running devices each step
    estimate_on_power: bool = True

    @field_validator("transition_matrix")
    @classmethod
    def check_stochastic(cls, value: list[list[float]] | None) -> list[list[float]] | None:
        if value is None:
            return value
        matrix = np.asarray(value, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("transition matrix must be square")
        if (matrix < 0).any():
            raise ValueError("transition matrix entries must be non-negative")
        if not np.allclose(matrix.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("every transition matrix row must sum to 1")
        return value


class PemConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epoch_length: float = Field(default=180.0, gt=0)
    # mean time between requests for a device in the middle of its deadband
    mean_time_to_request: float = Field(default=30.0, gt=0)
    allow_turn_off_requests: bool = True
    # smoothing of the power change not explained by grants and expiries; 0 ignores it
    drift_smoothing: float = Field(default=0.2, ge=0, le=1)


class ControllerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ControllerKind = ControllerKind.PI
    pi: PiConfig = PiConfig()
    markov: MarkovConfig = MarkovConfig()
    pem: PemConfig = PemConfig()
    seed: int | None = None


class PiState(BaseModel):
    model_config = ConfigDict(frozen=True)

    integral: float = 0.0


class PendingRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    device: str
    kind: RequestKind
    power: float


@dataclass
class PemDecision:
    granted: list[PendingRequest] = field(default_factory=list)
    denied: list[PendingRequest] = field(default_factory=list)
    saturated: bool = False

    @property
    def grant_fraction(self) -> float:
        total = len(self.granted) + len(self.denied)
        return len(self.granted) / total if total else 0.0


@dataclass
class CommandBatch:
    """Per-device switch targets emitted by a controller for one control step."""

    commands: list[tuple[str, SwitchTarget]] = field(default_factory=list)
    # normalized control effort: PI output, Markov broadcast probability or grant fraction
    effort: float = 0.0
    saturated: bool = False
    predicted_power: float | None = None

    def __len__(self) -> int:
        return len(self.commands)

    @property
    def n_on(self) -> int:
        return sum(1 for _, target in self.commands if target is SwitchTarget.ON)

    @property
    def n_off(self) -> int:
        return sum(1 for _, target in self.commands if target is SwitchTarget.OFF)
