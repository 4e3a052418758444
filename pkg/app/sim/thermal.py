"""Extended ETP heat-flow model of a cooled house with a lossy Carnot air conditioner.

State vector rows are (T_w, T_a, T_1, T_2) in °C. Every kernel in this module works on
plain floats for a single house and on numpy arrays for a bank of houses, so the fleet
and the single-house API share one implementation.
"""
import logging
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from ..core.exceptions import IntegrationError, ModelDivergenceError, NeverOffError, NeverOnError
from ..schemas.thermal import KELVIN, AcParams, HeatInputs, ThermalParams, ThermalState

logger = logging.getLogger(__name__)

T1_BAND = (-50.0, 60.0)
EVENT_TOLERANCE = 0.01


@dataclass(frozen=True)
class ThermalBank:
    """Column-stacked thermal, AC and heat-input parameters for n houses."""

    C_w: np.ndarray
    C_a: np.ndarray
    C_1: np.ndarray
    C_2: np.ndarray
    H_m: np.ndarray
    H_1: np.ndarray
    H_2: np.ndarray
    U_a: np.ndarray
    f_Hm: np.ndarray
    A: np.ndarray
    L_over_R: np.ndarray
    gamma: np.ndarray
    W_fric: np.ndarray
    Q_water: np.ndarray
    Q_air: np.ndarray

    @classmethod
    def stack(cls, houses: Sequence[tuple[ThermalParams, AcParams, HeatInputs]]) -> "ThermalBank":
        columns: dict[str, list[float]] = {f.name: [] for f in fields(cls)}
        for params, ac, heat in houses:
            for name in ("C_w", "C_a", "C_1", "C_2", "H_m", "H_1", "H_2", "U_a", "f_Hm"):
                columns[name].append(getattr(params, name))
            for name in ("A", "L_over_R", "gamma", "W_fric"):
                columns[name].append(getattr(ac, name))
            columns["Q_water"].append(heat.to_water)
            columns["Q_air"].append(heat.to_air)
        return cls(**{name: np.asarray(values, dtype=float) for name, values in columns.items()})

    @classmethod
    def single(cls, params: ThermalParams, ac: AcParams, heat: HeatInputs) -> "ThermalBank":
        return cls.stack([(params, ac, heat)])

    def __len__(self) -> int:
        return len(self.C_w)


def check_band(T_1) -> None:
    T_1 = np.asarray(T_1, dtype=float)
    low, high = T1_BAND
    bad = ~((T_1 > low) & (T_1 < high))
    if np.any(bad):
        raise ModelDivergenceError(float(T_1[bad].flat[0]))


def cooling_rate(T_1, A, L_over_R):
    """Heat pumped out of the evaporator, A exp(-L/RT_1)/T_1 with T_1 converted to kelvin."""
    T1_k = np.asarray(T_1, dtype=float) + KELVIN
    return A * np.exp(-L_over_R / T1_k) / T1_k


def electrical_power(q_c, T_1, T_2, gamma, W_fric):
    T1_k = np.asarray(T_1, dtype=float) + KELVIN
    return gamma * q_c * (T_2 - T_1) / T1_k + W_fric


def thermometer(T_a, T_w, f_Hm):
    return (1.0 - f_Hm) * T_a + f_Hm * T_w


def carnot_cooling_rate(state: ThermalState, ac: AcParams, on: bool = True) -> float:
    if not on:
        return 0.0
    check_band(state.T_1)
    return float(cooling_rate(state.T_1, ac.A, ac.L_over_R))


def ac_power(state: ThermalState, ac: AcParams, on: bool) -> float:
    if not on:
        return 0.0
    q_c = carnot_cooling_rate(state, ac, on)
    return float(electrical_power(q_c, state.T_1, state.T_2, ac.gamma, ac.W_fric))


def thermometer_reading(state: ThermalState, params: ThermalParams) -> float:
    return float(thermometer(state.T_a, state.T_w, params.f_Hm))


def bank_power(T: np.ndarray, bank: ThermalBank, on: np.ndarray) -> np.ndarray:
    q_c = np.where(on, cooling_rate(T[2], bank.A, bank.L_over_R), 0.0)
    return np.where(on, electrical_power(q_c, T[2], T[3], bank.gamma, bank.W_fric), 0.0)


def _rates(T: np.ndarray, bank: ThermalBank, on, T_amb):
    T_w, T_a, T_1, T_2 = T
    q_c = np.where(on, cooling_rate(T_1, bank.A, bank.L_over_R), 0.0)
    w_ac = np.where(on, electrical_power(q_c, T_1, T_2, bank.gamma, bank.W_fric), 0.0)
    leak = bank.U_a * (T_amb - T_a)
    dT = np.stack((
        (bank.H_m * (T_a - T_w) + bank.Q_water) / bank.C_w,
        (leak + bank.H_m * (T_w - T_a) + bank.Q_air + bank.H_1 * (T_1 - T_a)) / bank.C_a,
        (bank.H_1 * (T_a - T_1) - q_c) / bank.C_1,
        (bank.H_2 * (T_amb - T_2) + q_c + w_ac) / bank.C_2,
    ))
    heat_in = bank.Q_water + bank.Q_air + leak
    return dT, heat_in, q_c


def rk4_step(T: np.ndarray, bank: ThermalBank, on, T_amb, dt):
    """One classical RK4 step. Returns the new temperatures and the heat injected into and
    removed from the house over the step (J), integrated with the same RK4 weights."""
    check_band(T[2])
    k1, i1, c1 = _rates(T, bank, on, T_amb)
    k2, i2, c2 = _rates(T + 0.5 * dt * k1, bank, on, T_amb)
    k3, i3, c3 = _rates(T + 0.5 * dt * k2, bank, on, T_amb)
    k4, i4, c4 = _rates(T + dt * k3, bank, on, T_amb)
    T_next = T + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    heat_in = dt / 6.0 * (i1 + 2.0 * i2 + 2.0 * i3 + i4)
    heat_removed = dt / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
    return T_next, heat_in, heat_removed


def ensure_finite(T: np.ndarray, house_ids: Sequence[str] | None = None) -> None:
    finite = np.isfinite(T).all(axis=0)
    if not np.all(finite):
        index = int(np.flatnonzero(~finite)[0])
        raise IntegrationError("non-finite temperature after integration step",
                               house_id=house_ids[index] if house_ids else None)


def step_thermal(state: ThermalState, params: ThermalParams, ac: AcParams, inputs: HeatInputs,
                 on: bool, dt: float) -> ThermalState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    bank = ThermalBank.single(params, ac, inputs)
    T = np.array(state.temperatures(), dtype=float).reshape(4, 1)
    T_next, _, _ = rk4_step(T, bank, np.array([on]), state.T_amb, dt)
    ensure_finite(T_next)
    T_w, T_a, T_1, T_2 = (float(v) for v in T_next[:, 0])
    return ThermalState(T_w=T_w, T_a=T_a, T_1=T_1, T_2=T_2, T_amb=state.T_amb)


def _condenser_temperature(q_c, T_1, T_amb, H_2, gamma, W_fric):
    # H_2 (T_amb - T_2) + q_c + gamma q_c (T_2 - T_1)/T1_k + W_fric = 0, linear in T_2
    g = gamma * q_c / (T_1 + KELVIN)
    if g >= H_2:
        raise ModelDivergenceError(T_1)
    return (H_2 * T_amb + q_c + W_fric - g * T_1) / (H_2 - g)


def equilibrium(params: ThermalParams, ac: AcParams, inputs: HeatInputs, T_amb: float,
                on: bool) -> ThermalState:
    """Fixed point of the heat-flow equations with the compressor held off or on."""
    if not on:
        T_a = T_amb + inputs.total / params.U_a
        T_w = T_a + inputs.to_water / params.H_m
        return ThermalState(T_w=T_w, T_a=T_a, T_1=T_a, T_2=T_amb, T_amb=T_amb)

    def residual(T_1: float) -> float:
        q_c = float(cooling_rate(T_1, ac.A, ac.L_over_R))
        T_a = T_1 + q_c / params.H_1
        return q_c - params.U_a * (T_amb - T_a) - inputs.total

    low, high = T1_BAND[0] + 0.1, T1_BAND[1] - 0.1
    if residual(high) < 0:
        raise NeverOffError(f"cooling capacity below {inputs.total:.1f} W of injected heat at T_amb={T_amb:.1f} °C")
    if residual(low) > 0:
        T_1 = low
    else:
        T_1 = brentq(residual, low, high, xtol=1e-9)
    q_c = float(cooling_rate(T_1, ac.A, ac.L_over_R))
    T_a = T_1 + q_c / params.H_1
    T_w = T_a + inputs.to_water / params.H_m
    T_2 = _condenser_temperature(q_c, T_1, T_amb, params.H_2, ac.gamma, ac.W_fric)
    return ThermalState(T_w=T_w, T_a=T_a, T_1=T_1, T_2=T_2, T_amb=T_amb)


def steady_on_power(params: ThermalParams, ac: AcParams, T_amb: float, T_a: float) -> float:
    """Plateau power with the air held at T_a: evaporator and condenser at their fixed points."""
    def residual(T_1: float) -> float:
        return params.H_1 * (T_a - T_1) - float(cooling_rate(T_1, ac.A, ac.L_over_R))

    T_1 = brentq(residual, T1_BAND[0] + 0.1, T_a, xtol=1e-9)
    q_c = float(cooling_rate(T_1, ac.A, ac.L_over_R))
    T_2 = _condenser_temperature(q_c, T_1, T_amb, params.H_2, ac.gamma, ac.W_fric)
    return float(electrical_power(q_c, T_1, T_2, ac.gamma, ac.W_fric))


@dataclass(frozen=True)
class CycleSummary:
    on_time: float
    off_time: float
    heat_injected: float
    heat_removed: float
    cycles: int

    @property
    def period(self) -> float:
        return self.on_time + self.off_time

    @property
    def duty_cycle(self) -> float:
        return self.on_time / self.period

    @property
    def energy_imbalance(self) -> float:
        return abs(self.heat_injected - self.heat_removed) / self.heat_removed


def _localize(T0, bank, on, T_amb, dt, threshold, rising):
    """Bisect the step length until each thermometer crossing is pinned to EVENT_TOLERANCE."""
    low = np.zeros_like(dt)
    high = dt.copy()
    while np.any(high - low > EVENT_TOLERANCE):
        mid = 0.5 * (low + high)
        T_mid, _, _ = rk4_step(T0, bank, on, T_amb, mid)
        reading = thermometer(T_mid[1], T_mid[0], bank.f_Hm)
        crossed = np.where(rising, reading >= threshold, reading <= threshold)
        high = np.where(crossed, mid, high)
        low = np.where(crossed, low, mid)
    return high


def limit_cycles(bank: ThermalBank, T_minus: float, T_plus: float, T_amb: float, dt: float = 1.0,
                 tol: float = 0.005, max_cycles: int = 200, phase_horizon: float = 172_800.0,
                 settled_cycles: int = 2) -> list[CycleSummary]:
    """Integrate every house in the bank through thermostat cycles until on and off durations
    change by less than tol between consecutive cycles."""
    n = len(bank)
    T = np.empty((4, n))
    T[1] = T_plus - bank.f_Hm * bank.Q_water / bank.H_m
    T[0] = T[1] + bank.Q_water / bank.H_m
    T[2] = T[1]
    T[3] = T_amb
    on = np.ones(n, dtype=bool)

    phase_time = np.zeros(n)
    on_time = np.zeros(n)
    cycle_in = np.zeros(n)
    cycle_out = np.zeros(n)
    last_on = np.full(n, np.nan)
    last_off = np.full(n, np.nan)
    last_in = np.zeros(n)
    last_out = np.zeros(n)
    cycles = np.zeros(n, dtype=int)
    streak = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=bool)

    while not done.all():
        active = ~done
        step = np.where(active, dt, 0.0)
        T_next, heat_in, heat_out = rk4_step(T, bank, on, T_amb, step)
        ensure_finite(T_next)
        reading = thermometer(T_next[1], T_next[0], bank.f_Hm)
        cross_down = active & on & (reading <= T_minus)
        cross_up = active & ~on & (reading >= T_plus)
        crossed = cross_down | cross_up

        if crossed.any():
            idx = np.flatnonzero(crossed)
            sub = _subbank(bank, idx)
            rising = cross_up[idx]
            threshold = np.where(rising, T_plus, T_minus)
            tau = _localize(T[:, idx], sub, on[idx], T_amb, step[idx], threshold, rising)
            T_next[:, idx], heat_in[idx], heat_out[idx] = rk4_step(T[:, idx], sub, on[idx], T_amb, tau)
            step[idx] = tau

        phase_time += step
        cycle_in += heat_in
        cycle_out += heat_out
        T = T_next

        if cross_down.any():
            on_time[cross_down] = phase_time[cross_down]
            phase_time[cross_down] = 0.0
            on[cross_down] = False

        if cross_up.any():
            # a cycle is one on phase followed by one off phase and closes at the next turn-on
            up = cross_up
            rel_on = np.abs(on_time[up] - last_on[up]) / on_time[up]
            rel_off = np.abs(phase_time[up] - last_off[up]) / phase_time[up]
            streak[up] = np.where((rel_on < tol) & (rel_off < tol), streak[up] + 1, 0)
            last_on[up] = on_time[up]
            last_off[up] = phase_time[up]
            last_in[up] = cycle_in[up]
            last_out[up] = cycle_out[up]
            cycles[up] += 1
            cycle_in[up] = 0.0
            cycle_out[up] = 0.0
            phase_time[up] = 0.0
            on[up] = True
            done |= up & (streak >= settled_cycles)

            exhausted = (cycles >= max_cycles) & ~done
            if exhausted.any():
                logger.warning("limit cycle not settled after %d cycles for %d house(s)",
                               max_cycles, int(exhausted.sum()))
                done |= exhausted

        overdue = active & ~done & (phase_time > phase_horizon)
        if overdue.any():
            if np.any(overdue & on):
                raise NeverOffError(f"on phase exceeded {phase_horizon:.0f} s without reaching T_-")
            raise NeverOnError(f"off phase exceeded {phase_horizon:.0f} s without reaching T_+")

    return [CycleSummary(on_time=float(last_on[i]), off_time=float(last_off[i]),
                         heat_injected=float(last_in[i]), heat_removed=float(last_out[i]),
                         cycles=int(cycles[i])) for i in range(n)]


def _subbank(bank: ThermalBank, idx: np.ndarray) -> ThermalBank:
    return ThermalBank(**{f.name: getattr(bank, f.name)[idx] for f in fields(bank)})


def check_cycling(params: ThermalParams, ac: AcParams, inputs: HeatInputs, T_minus: float,
                  T_plus: float, T_amb: float) -> None:
    off = equilibrium(params, ac, inputs, T_amb, on=False)
    if thermometer_reading(off, params) <= T_plus:
        raise NeverOnError(
            f"off-state equilibrium thermometer {thermometer_reading(off, params):.2f} °C never reaches T_+={T_plus:.2f} °C")
    on = equilibrium(params, ac, inputs, T_amb, on=True)
    if thermometer_reading(on, params) >= T_minus:
        raise NeverOffError(
            f"on-state equilibrium thermometer {thermometer_reading(on, params):.2f} °C never reaches T_-={T_minus:.2f} °C")


def cycle_durations(params: ThermalParams, ac: AcParams, inputs: HeatInputs,
                    deadband: tuple[float, float], T_amb: float, dt: float = 1.0,
                    tol: float = 0.005) -> CycleSummary:
    T_minus, T_plus = deadband
    check_cycling(params, ac, inputs, T_minus, T_plus, T_amb)
    return limit_cycles(ThermalBank.single(params, ac, inputs), T_minus, T_plus, T_amb, dt=dt, tol=tol)[0]


def cycle_durations_many(houses: Sequence[tuple[ThermalParams, AcParams, HeatInputs]],
                         deadband: tuple[float, float], T_amb: float, dt: float = 1.0,
                         tol: float = 0.005) -> list[CycleSummary]:
    T_minus, T_plus = deadband
    for params, ac, inputs in houses:
        check_cycling(params, ac, inputs, T_minus, T_plus, T_amb)
    return limit_cycles(ThermalBank.stack(houses), T_minus, T_plus, T_amb, dt=dt, tol=tol)


def on_state_power_slope(params: ThermalParams, ac: AcParams, T_amb: float, T_a: float,
                         delta: float = 1.0) -> float:
    """Fractional change of plateau power per °C of ambient temperature."""
    low = steady_on_power(params, ac, T_amb - 0.5 * delta, T_a)
    high = steady_on_power(params, ac, T_amb + 0.5 * delta, T_a)
    return (high - low) / (delta * steady_on_power(params, ac, T_amb, T_a))


def nominal_off_time(params: ThermalParams, inputs: HeatInputs, deadband: tuple[float, float]) -> float:
    """(C_a + C_w)(T_+ - T_-)/Q_in,tot, the low-injection off-time scale."""
    return (params.C_a + params.C_w) * (deadband[1] - deadband[0]) / inputs.total

