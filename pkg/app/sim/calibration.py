"""Fits the two free AC constants of the model house.

A is chosen so the plateau cooling rate at the setpoint matches the nameplate rating, then
W_fric so that plateau power rises with outdoor temperature at the target fractional rate.
"""
import logging
import math

from scipy.optimize import brentq

from ..core.exceptions import ConfigError
from ..schemas.calibration import CalibrationReport, CycleStats
from ..schemas.experiment import NOMINAL_T_AMB
from ..schemas.house import HouseParams
from ..schemas.thermal import RATED_COOLING_W, AcParams, ThermalParams, nameplate_prefactor
from .thermal import T1_BAND, cooling_rate, cycle_durations, on_state_power_slope, steady_on_power

logger = logging.getLogger(__name__)

HEAT_GAINS = (200.0, 375.0)
W_FRIC_RANGE = (0.0, 5000.0)


def plateau_cooling(params: ThermalParams, ac: AcParams, T_a: float) -> float:
    """Cooling rate once the evaporator sits at its fixed point for air at T_a."""
    def residual(T_1: float) -> float:
        return params.H_1 * (T_a - T_1) - float(cooling_rate(T_1, ac.A, ac.L_over_R))

    T_1 = brentq(residual, T1_BAND[0] + 0.1, T_a, xtol=1e-9)
    return float(cooling_rate(T_1, ac.A, ac.L_over_R))


def fit_prefactor(params: ThermalParams, ac: AcParams, T_a: float, rated_cooling: float = RATED_COOLING_W) -> float:
    if rated_cooling >= params.H_1 * (T_a - T1_BAND[0]):
        raise ConfigError(f"{rated_cooling:.0f} W is beyond what H_1={params.H_1:.0f} W/°C can carry at {T_a:.1f} °C")

    # beyond A_max the evaporator fixed point leaves the integration band
    T_low = T1_BAND[0] + 0.1
    log_max = math.log10(0.999 * nameplate_prefactor(params.H_1 * (T_a - T_low), T_low, ac.L_over_R))

    def residual(log_A: float) -> float:
        return plateau_cooling(params, ac.model_copy(update={"A": 10.0 ** log_A}), T_a) - rated_cooling

    return 10.0 ** brentq(residual, log_max - 6.0, log_max, xtol=1e-12)


def fit_friction(params: ThermalParams, ac: AcParams, T_amb: float, T_a: float, coeff: float) -> float:
    def residual(W_fric: float) -> float:
        return on_state_power_slope(params, ac.model_copy(update={"W_fric": W_fric}), T_amb, T_a) - coeff

    low, high = W_FRIC_RANGE
    if residual(low) < 0:
        raise ConfigError(f"ambient coefficient {coeff:.4f}/°C is above what W_fric=0 gives "
                          f"({residual(low) + coeff:.4f}/°C)")
    if residual(high) > 0:
        raise ConfigError(f"ambient coefficient {coeff:.4f}/°C needs W_fric above {high:.0f} W")
    return brentq(residual, low, high, xtol=1e-6)


def calibrate(house: HouseParams | None = None, T_amb: float = NOMINAL_T_AMB,
              rated_cooling: float = RATED_COOLING_W, ambient_coeff: float | None = None,
              heat_gains: tuple[float, ...] = HEAT_GAINS) -> CalibrationReport:
    house = house or HouseParams()
    params, T_a = house.thermal, house.setpoint
    coeff = house.ac.ambient_power_coeff if ambient_coeff is None else ambient_coeff

    A = fit_prefactor(params, house.ac, T_a, rated_cooling)
    ac = house.ac.model_copy(update={"A": A})
    W_fric = fit_friction(params, ac, T_amb, T_a, coeff)
    ac = ac.model_copy(update={"W_fric": W_fric})
    logger.info("calibrated A=%.4g, W_fric=%.1f W", A, W_fric)

    cycles = []
    for gain in heat_gains:
        inputs = house.heat.model_copy(update={"Q_w_dot": gain})
        summary = cycle_durations(params, ac, inputs, house.deadband, T_amb)
        cycles.append(CycleStats(heat_gain_w=gain, on_time=summary.on_time, off_time=summary.off_time,
                                 period=summary.period, duty_cycle=summary.duty_cycle,
                                 energy_imbalance=summary.energy_imbalance))

    return CalibrationReport(
        A=A,
        W_fric=W_fric,
        T_amb=T_amb,
        T_a=T_a,
        cooling_w=plateau_cooling(params, ac, T_a),
        plateau_power_w=steady_on_power(params, ac, T_amb, T_a),
        ambient_power_coeff=on_state_power_slope(params, ac, T_amb, T_a),
        cycles=cycles,
    )
