from datetime import datetime

from pydantic import BaseModel


class RunPublic(BaseModel):
    id: int
    name: str
    controller: str
    config_hash: str
    seed: int
    case: int | None = None

    nrmse: float
    pjm_score: float
    max_overload_s: float
    baseline_power_w: float

    metrics_path: str | None = None
    telemetry_path: str | None = None
    wall_time_s: float
    finished_at: datetime


class DeviceStatus(BaseModel):
    house_id: str
    remote: bool
    state: str
    temperature_c: float
    power_w: float
    position: float
    lock_remaining_s: float


class PlantStatus(BaseModel):
    sim_time: float
    seq: int
    n_houses: int
    aggregate_power_w: float
    n_on: int
    n_off: int
    n_locked: int
    missed_steps: int
    rejected_commands: int
