import math

from pydantic import BaseModel, ConfigDict, Field

KELVIN = 273.15

# R410A vapour pressure: 7.98 bar at 0 °C, 24.2 bar at 40 °C -> ln ratio / (1/T0 - 1/T40)
R410A_L_OVER_R = 2370.0

# 5000 BTU/h window unit
RATED_COOLING_W = 1465.0
RATED_EVAPORATOR_C = 7.85


def nameplate_prefactor(q_rated: float = RATED_COOLING_W,
                        T_1: float = RATED_EVAPORATOR_C,
                        L_over_R: float = R410A_L_OVER_R) -> float:
    """Prefactor A such that A exp(-L/RT_1)/T_1 equals q_rated at evaporator temperature T_1 (°C)."""
    T1_k = T_1 + KELVIN
    return q_rated * T1_k * math.exp(L_over_R / T1_k)


class ThermalParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    C_w: float = Field(default=120_000.0, gt=0)
    C_a: float = Field(default=15_000.0, gt=0)
    C_1: float = Field(default=3_000.0, gt=0)
    C_2: float = Field(default=4_000.0, gt=0)
    H_m: float = Field(default=60.0, gt=0)
    H_1: float = Field(default=100.0, gt=0)
    H_2: float = Field(default=120.0, gt=0)
    U_a: float = Field(default=5.0, gt=0)
    f_Hm: float = Field(default=0.25, ge=0, le=1)


class AcParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    A: float = Field(default_factory=nameplate_prefactor, gt=0)
    L_over_R: float = Field(default=R410A_L_OVER_R, gt=0)
    gamma: float = Field(default=1.2, ge=1)
    W_fric: float = Field(default=220.0, ge=0)
    inrush_multiple: float = Field(default=5.5, ge=1)
    inrush_duration: float = Field(default=0.15, ge=0)
    lockout_duration: float = Field(default=180.0, ge=0)
    min_on_duration: float = Field(default=0.0, ge=0)
    ambient_power_coeff: float = 0.0136


class HeatInputs(BaseModel):
    model_config = ConfigDict(frozen=True)

    Q_w_dot: float = Field(default=200.0, ge=0)
    Q_a_dot: float = Field(default=0.0, ge=0)
    Q_fixed: float = Field(default=125.0, ge=0)
    # share of the fan + pump load that lands in the water node; the rest goes to the air
    fixed_water_fraction: float = Field(default=1.0, ge=0, le=1)

    @property
    def total(self) -> float:
        return self.Q_w_dot + self.Q_a_dot + self.Q_fixed

    @property
    def to_water(self) -> float:
        return self.Q_w_dot + self.fixed_water_fraction * self.Q_fixed

    @property
    def to_air(self) -> float:
        return self.Q_a_dot + (1.0 - self.fixed_water_fraction) * self.Q_fixed


class ThermalState(BaseModel):
    model_config = ConfigDict(frozen=True)

    T_w: float
    T_a: float
    T_1: float
    T_2: float
    T_amb: float

    @classmethod
    def uniform(cls, T: float, T_amb: float | None = None) -> "ThermalState":
        return cls(T_w=T, T_a=T, T_1=T, T_2=T, T_amb=T if T_amb is None else T_amb)

    def temperatures(self) -> tuple[float, float, float, float]:
        return self.T_w, self.T_a, self.T_1, self.T_2
