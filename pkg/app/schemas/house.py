from pydantic import BaseModel, ConfigDict, Field

from ..models.enums import CommandSource, CompressorState, PartitionTag, SwitchTarget
from .thermal import AcParams, HeatInputs, ThermalParams, ThermalState


class HouseParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    house_id: str = "house"
    tag: PartitionTag = PartitionTag.LOCAL_VIRTUAL
    thermal: ThermalParams = ThermalParams()
    ac: AcParams = Field(default_factory=AcParams)
    heat: HeatInputs = HeatInputs()
    setpoint: float = 22.5
    deadband_halfwidth: float = Field(default=0.5, gt=0)
    sensor_lag_tau: float = Field(default=12.0, ge=0)

    @property
    def T_minus(self) -> float:
        return self.setpoint - self.deadband_halfwidth

    @property
    def T_plus(self) -> float:
        return self.setpoint + self.deadband_halfwidth

    @property
    def deadband(self) -> tuple[float, float]:
        return self.T_minus, self.T_plus


class HouseState(BaseModel):
    model_config = ConfigDict(frozen=True)

    thermal: ThermalState
    T_measured: float
    compressor: CompressorState = CompressorState.OFF
    # remaining lockout (LOCKED_OFF) or minimum-on time (LOCKED_ON), seconds
    lock_remaining: float = Field(default=0.0, ge=0)
    time_in_state: float = 0.0
    cycle_phase_time: float = 0.0
    packet_remaining: float = 0.0

    @property
    def is_on(self) -> bool:
        return self.compressor in (CompressorState.ON, CompressorState.LOCKED_ON)


class SwitchCommand(BaseModel):
    model_config = ConfigDict(frozen=True)

    target: SwitchTarget = SwitchTarget.NO_CHANGE
    source: CommandSource = CommandSource.AGGREGATOR
    # suspends the thermostat of the house for the step the command is applied in
    hold: bool = False


class InrushEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    house_id: str
    peak_power: float
    duration: float
