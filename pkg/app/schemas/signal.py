from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from ..models.enums import SignalType


class SignalSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    type: SignalType = SignalType.REGD
    amplitude_fraction: float = Field(default=0.2, ge=0)
    period: float = Field(default=600.0, gt=0)
    sample_period: float = Field(default=2.0, gt=0)
    # a recorded regulation trace; the synthetic generator is used when absent
    trace_path: Path | None = None
    seed: int | None = None
