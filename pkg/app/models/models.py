from datetime import datetime, timezone
from functools import partial

from sqlmodel import Field, SQLModel


class ExperimentRun(SQLModel, table=True):
    __tablename__ = "experiment_runs"

    id: int | None = Field(default=None, primary_key=True)
    name: str = Field(index=True, nullable=False)
    controller: str = Field(index=True, nullable=False)
    config_hash: str = Field(max_length=64, index=True, nullable=False)
    seed: int = Field(default=0)
    case: int | None = Field(default=None, index=True)

    nrmse: float = Field(nullable=False)
    pjm_score: float = Field(nullable=False)
    max_overload_s: float = Field(default=0.0)
    baseline_power_w: float = Field(nullable=False)

    metrics_path: str | None = None
    telemetry_path: str | None = None
    config_json: str = Field(nullable=False)
    metrics_json: str = Field(nullable=False)

    wall_time_s: float = Field(default=0.0)
    finished_at: datetime = Field(default_factory=partial(datetime.now, timezone.utc))
