from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..models.enums import ChannelMode, SwitchTarget


class ChannelModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: ChannelMode = ChannelMode.PERFECT
    delay_mean: float = Field(default=18.0, ge=0)
    delay_std: float = Field(default=3.0, ge=0)
    loss_rate_min: float = Field(default=0.05, ge=0, le=1)
    loss_rate_max: float = Field(default=0.10, ge=0, le=1)
    rng_seed: int = 0
    # draw a fresh loss rate for every message instead of once per run
    per_message_loss: bool = False
    # route plant measurements through the same impairments
    impair_measurements: bool = False

    @model_validator(mode="after")
    def check_loss_range(self) -> "ChannelModel":
        if self.loss_rate_min > self.loss_rate_max:
            raise ValueError("loss_rate_min must not exceed loss_rate_max")
        return self

    @classmethod
    def impaired(cls, **overrides) -> "ChannelModel":
        return cls(mode=ChannelMode.IMPAIRED, **overrides)


class DeviceCommand(BaseModel):
    model_config = ConfigDict(frozen=True)

    seq: int
    house_id: str
    target: SwitchTarget
