from pydantic import BaseModel, Field

from .grid import OverloadReport


class PjmScore(BaseModel):
    correlation: float = Field(ge=0, le=1)
    delay: float = Field(ge=0, le=1)
    precision: float = Field(ge=0, le=1)
    delay_s: float = Field(ge=0)
    n_windows: int = Field(default=1, ge=1)

    @property
    def composite(self) -> float:
        return (self.correlation + self.delay + self.precision) / 3.0


class FairnessReport(BaseModel):
    group_size: int
    virtual_variances: list[float]
    remote_variance: float | None = None

    @property
    def virtual_range(self) -> tuple[float, float]:
        return min(self.virtual_variances), max(self.virtual_variances)

    @property
    def within_range(self) -> bool | None:
        if self.remote_variance is None or not self.virtual_variances:
            return None
        low, high = self.virtual_range
        return low <= self.remote_variance <= high


class PartitionActivity(BaseModel):
    n_devices: int
    on_fraction: float
    off_fraction: float
    locked_fraction: float
    starts_per_hour: float


class MetricsBlock(BaseModel):
    nrmse: float
    pjm: PjmScore
    pjm_composite: float
    overload: OverloadReport
    fairness: FairnessReport | None = None
    baseline_power: float
    activity: dict[str, PartitionActivity] = {}
    commands_sent: int = 0
    commands_dropped: int = 0
    missed_steps: int = 0
