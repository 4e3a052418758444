"""Newline-delimited JSON messages exchanged between aggregator and plant.

Every line is one object {"type": "cmd"|"meas"|"err", "seq": int, "t": float, "devices": [...]}
and every device entry carries its house id under "id".
"""
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..models.enums import CompressorState, RequestKind, SwitchTarget


class WireModel(BaseModel):
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")


class DeviceTarget(WireModel):
    id: str
    target: SwitchTarget

    @field_validator("target")
    @classmethod
    def switching_only(cls, value: SwitchTarget) -> SwitchTarget:
        if value is SwitchTarget.NO_CHANGE:
            raise ValueError("wire commands carry on or off only")
        return value


class DeviceReading(WireModel):
    id: str
    temp_c: float
    power_w: float
    state: CompressorState | None
    lockout_s: float = 0.0
    pos: float = 0.5
    rated_w: float = 0.0
    # outcome of the command delivered in the previous step, None when there was none
    accepted: bool | None = None
    request: RequestKind | None = None
    inrush_w: float = 0.0
    corrupt: bool = False


class FrameFlags(WireModel):
    missed_command: bool = False
    corrupt_ids: list[str] = []


class WireCommand(WireModel):
    type: Literal["cmd"] = "cmd"
    seq: int = Field(ge=0)
    t: float
    devices: list[DeviceTarget] = []

    @model_validator(mode="after")
    def unique_ids(self) -> "WireCommand":
        ids = [d.id for d in self.devices]
        if len(ids) != len(set(ids)):
            raise ValueError("house ids must be unique within a command")
        return self


class WireMeasurement(WireModel):
    type: Literal["meas"] = "meas"
    seq: int = Field(ge=0)
    t: float
    devices: list[DeviceReading] = []
    flags: FrameFlags = FrameFlags()


class WireError(WireModel):
    type: Literal["err"] = "err"
    seq: int = Field(ge=0)
    t: float
    devices: list[DeviceReading] = []
    error: str


WireMessage = Annotated[Union[WireCommand, WireMeasurement, WireError], Field(discriminator="type")]
