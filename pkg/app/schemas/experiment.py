import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..models.enums import Condition, PlantMode, SignalType
from .channel import ChannelModel
from .controller import ControllerSpec
from .fleet import FleetSpec
from .grid import GridSpec
from .metrics import MetricsBlock
from .signal import SignalSpec

NOMINAL_T_AMB = 32.2
EXTREME_T_AMB = 37.8
NOMINAL_HEAT_GAIN = 200.0
EXTREME_HEAT_GAIN = 375.0


class Conditions(BaseModel):
    """Labels of a matrix case; the concrete settings live in the rest of the config."""

    model_config = ConfigDict(frozen=True)

    signal_type: SignalType = SignalType.REGD
    amplitude_fraction: float = 0.2
    comm: Condition = Condition.NOMINAL
    outdoor: Condition = Condition.NOMINAL
    # informational only; voltage regulation is not modelled
    voltage: Condition = Condition.NOMINAL


class Phases(BaseModel):
    model_config = ConfigDict(frozen=True)

    warmup: float = Field(default=600.0, ge=0)
    settle: float = Field(default=1800.0, gt=0)
    tracking: float = Field(default=2400.0, gt=0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "experiment"
    fleet: FleetSpec = FleetSpec()
    controller: ControllerSpec = ControllerSpec()
    signal: SignalSpec = SignalSpec()
    channel: ChannelModel = ChannelModel()
    grid: GridSpec = GridSpec()
    conditions: Conditions = Conditions()
    heat_gain_w: float = Field(default=NOMINAL_HEAT_GAIN, ge=0)
    T_amb: float = NOMINAL_T_AMB
    phases: Phases = Phases()
    dt_control: float = Field(default=2.0, gt=0)
    dt_physics: float = Field(default=1.0, gt=0)
    seed: int = 0
    plant: PlantMode = PlantMode.IN_PROCESS
    plant_host: str = "127.0.0.1"
    plant_port: int = 7410
    output_dir: Path | None = None
    write_telemetry: bool = True

    @model_validator(mode="after")
    def check_steps(self) -> "ExperimentConfig":
        if self.dt_physics > self.dt_control:
            raise ValueError("dt_physics must not exceed dt_control")
        return self

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def derived_seed(self, stream: str, local: int | None = 0) -> int:
        """Seed for one component stream, mixed from the master seed and the component's own seed."""
        digest = hashlib.sha256(f"{self.seed}:{stream}:{local or 0}".encode()).digest()
        return int.from_bytes(digest[:7], "little")

    def seed_record(self) -> "SeedRecord":
        return SeedRecord(
            master=self.seed,
            fleet=self.derived_seed("fleet", self.fleet.rng_seed),
            channel=self.derived_seed("channel", self.channel.rng_seed),
            controller=self.derived_seed("controller", self.controller.seed),
            signal=self.derived_seed("signal", self.signal.seed),
            grid=self.derived_seed("grid", self.grid.seed),
        )


class SeedRecord(BaseModel):
    master: int
    fleet: int
    channel: int
    controller: int
    signal: int
    grid: int


class ExperimentResult(BaseModel):
    name: str
    controller: str
    config_hash: str
    seeds: SeedRecord
    metrics: MetricsBlock
    telemetry_path: Path | None = None
    metrics_path: Path | None = None
    finished_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    wall_time_s: float = 0.0

    def reproducible_view(self) -> dict:
        """Everything fixed by (config, seeds): excludes paths and timing."""
        return self.model_dump(mode="json", include={"name", "controller", "config_hash", "seeds", "metrics"})


class MatrixRow(BaseModel):
    """One row of a matrix file: one of the ten benchmark cases and the controllers to run on it."""

    case: int
    signal: SignalType = SignalType.REGD
    amplitude: float = 0.2
    comm: Condition = Condition.NOMINAL
    outdoor: Condition = Condition.NOMINAL
    voltage: Condition = Condition.NOMINAL
    controllers: list[str] = ["pi", "markov", "pem"]
    seed: int = 0
    # deep-merged into the resolved ExperimentConfig
    overrides: dict = {}


class ValidationResult(BaseModel):
    """Outcome of one open-loop scenario: named property checks plus the numbers behind them."""

    name: str
    verdicts: dict[str, bool]
    values: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())
