from pydantic import BaseModel


class CycleStats(BaseModel):
    heat_gain_w: float
    on_time: float
    off_time: float
    period: float
    duty_cycle: float
    energy_imbalance: float


class CalibrationReport(BaseModel):
    A: float
    W_fric: float
    T_amb: float
    T_a: float
    cooling_w: float
    plateau_power_w: float
    ambient_power_coeff: float
    cycles: list[CycleStats]
