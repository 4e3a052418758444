from pydantic import BaseModel, ConfigDict, Field

from ..models.enums import HouseAssignment


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_transformers: int = Field(default=100, ge=1)
    distribution: HouseAssignment = HouseAssignment.UNIFORM
    headroom: float = Field(default=0.9, gt=0)
    seed: int | None = None


class TransformerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    transformer_id: str
    rating: float = Field(gt=0)
    assigned_houses: list[str]


class TransformerOverload(BaseModel):
    transformer_id: str
    max_consecutive_overload_s: float = 0.0
    peak_loading_pu: float = 0.0
    overload_sample_count: int = 0
    simultaneous_inrush_count: int = 0
    inrush_event_count: int = 0
    peak_inrush_pu: float = 0.0


class OverloadReport(BaseModel):
    transformers: list[TransformerOverload]
    duration: float = 0.0

    @property
    def max_consecutive_overload_s(self) -> float:
        return max((t.max_consecutive_overload_s for t in self.transformers), default=0.0)

    @property
    def peak_loading_pu(self) -> float:
        return max((t.peak_loading_pu for t in self.transformers), default=0.0)

    @property
    def simultaneous_inrush_count(self) -> int:
        return sum(t.simultaneous_inrush_count for t in self.transformers)

    @property
    def peak_inrush_pu(self) -> float:
        return max((t.peak_inrush_pu for t in self.transformers), default=0.0)
