"""Per-house compressor state machine: thermostat, lockout, sensor lag and packet timers.

The kernels operate on a HouseArrays bank so the fleet steps every house at once; the
single-house functions at the bottom wrap a one-element bank.
"""
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..models.enums import CommandSource, CompressorState, SwitchTarget
from ..schemas.house import HouseParams, HouseState, InrushEvent, SwitchCommand
from ..schemas.thermal import ThermalState
from .thermal import ThermalBank, bank_power, ensure_finite, rk4_step, thermometer

# integer state codes used in telemetry arrays
OFF, ON, LOCKED_OFF, LOCKED_ON = 0, 1, 2, 3
STATE_BY_CODE = (CompressorState.OFF, CompressorState.ON,
                 CompressorState.LOCKED_OFF, CompressorState.LOCKED_ON)
CODE_BY_STATE = {state: code for code, state in enumerate(STATE_BY_CODE)}

TARGET_CODES = {SwitchTarget.ON: 1, SwitchTarget.OFF: -1, SwitchTarget.NO_CHANGE: 0}
TARGET_BY_CODE = {code: target for target, code in TARGET_CODES.items()}

# accepted[] codes: no command this step, rejected, accepted
NO_COMMAND, REJECTED, ACCEPTED = -1, 0, 1


@dataclass(frozen=True)
class HouseBank:
    house_ids: tuple[str, ...]
    thermal: ThermalBank
    T_minus: np.ndarray
    T_plus: np.ndarray
    tau: np.ndarray
    lockout: np.ndarray
    min_on: np.ndarray
    inrush_multiple: np.ndarray
    inrush_duration: np.ndarray

    @classmethod
    def from_params(cls, houses: Sequence[HouseParams]) -> "HouseBank":
        def column(get) -> np.ndarray:
            return np.array([get(h) for h in houses], dtype=float)

        return cls(
            house_ids=tuple(h.house_id for h in houses),
            thermal=ThermalBank.stack([(h.thermal, h.ac, h.heat) for h in houses]),
            T_minus=column(lambda h: h.T_minus),
            T_plus=column(lambda h: h.T_plus),
            tau=column(lambda h: h.sensor_lag_tau),
            lockout=column(lambda h: h.ac.lockout_duration),
            min_on=column(lambda h: h.ac.min_on_duration),
            inrush_multiple=column(lambda h: h.ac.inrush_multiple),
            inrush_duration=column(lambda h: h.ac.inrush_duration),
        )

    def __len__(self) -> int:
        return len(self.house_ids)


@dataclass
class HouseArrays:
    """Mutable dynamic state for a bank of houses. T has rows (T_w, T_a, T_1, T_2)."""

    T: np.ndarray
    T_meas: np.ndarray
    on: np.ndarray
    lock_remaining: np.ndarray
    time_in_state: np.ndarray
    cycle_phase_time: np.ndarray
    packet_remaining: np.ndarray

    @classmethod
    def from_states(cls, states: Sequence[HouseState]) -> "HouseArrays":
        return cls(
            T=np.array([s.thermal.temperatures() for s in states], dtype=float).T.copy(),
            T_meas=np.array([s.T_measured for s in states], dtype=float),
            on=np.array([s.is_on for s in states], dtype=bool),
            lock_remaining=np.array([s.lock_remaining for s in states], dtype=float),
            time_in_state=np.array([s.time_in_state for s in states], dtype=float),
            cycle_phase_time=np.array([s.cycle_phase_time for s in states], dtype=float),
            packet_remaining=np.array([s.packet_remaining for s in states], dtype=float),
        )

    def state_at(self, index: int, T_amb: float) -> HouseState:
        T_w, T_a, T_1, T_2 = (float(v) for v in self.T[:, index])
        return HouseState(
            thermal=ThermalState(T_w=T_w, T_a=T_a, T_1=T_1, T_2=T_2, T_amb=T_amb),
            T_measured=float(self.T_meas[index]),
            compressor=STATE_BY_CODE[int(state_codes(self)[index])],
            lock_remaining=float(self.lock_remaining[index]),
            time_in_state=float(self.time_in_state[index]),
            cycle_phase_time=float(self.cycle_phase_time[index]),
            packet_remaining=float(self.packet_remaining[index]),
        )

    def copy(self) -> "HouseArrays":
        return replace(self, **{name: value.copy() for name, value in vars(self).items()})

    def __len__(self) -> int:
        return len(self.on)


@dataclass(frozen=True)
class StepOutcome:
    turned_on: np.ndarray
    turned_off: np.ndarray
    heat_injected: np.ndarray
    heat_removed: np.ndarray


def state_codes(arr: HouseArrays) -> np.ndarray:
    locked = arr.lock_remaining > 0
    codes = np.where(arr.on, np.where(locked, LOCKED_ON, ON), np.where(locked, LOCKED_OFF, OFF))
    return codes.astype(np.int8)


def thermometer_readings(arr: HouseArrays, bank: HouseBank) -> np.ndarray:
    return thermometer(arr.T[1], arr.T[0], bank.thermal.f_Hm)


def deadband_position(arr: HouseArrays, bank: HouseBank) -> np.ndarray:
    return (arr.T_meas - bank.T_minus) / (bank.T_plus - bank.T_minus)


def power(arr: HouseArrays, bank: HouseBank) -> np.ndarray:
    return bank_power(arr.T, bank.thermal, arr.on)


def inrush_peaks(arr: HouseArrays, bank: HouseBank, turned_on: np.ndarray | None = None) -> np.ndarray:
    """Peak power of houses whose compressor started in the last step, zero elsewhere."""
    starting = arr.on & (arr.cycle_phase_time < bank.inrush_duration)
    if turned_on is not None:
        starting |= turned_on & arr.on
    return np.where(starting, bank.inrush_multiple * power(arr, bank), 0.0)


def thermostat_targets(arr: HouseArrays, bank: HouseBank) -> np.ndarray:
    """Deadband switching for unlocked houses; a locked house gets no target."""
    free = arr.lock_remaining <= 0
    targets = np.zeros(len(arr), dtype=np.int8)
    targets[free & ~arr.on & (arr.T_meas >= bank.T_plus)] = 1
    targets[free & arr.on & (arr.T_meas <= bank.T_minus)] = -1
    return targets


def feasible(arr: HouseArrays, targets: np.ndarray) -> np.ndarray:
    """Whether each target can be honoured right now. A target matching the current state is a
    feasible no-op; a transition requires the lock timer to have run out."""
    free = arr.lock_remaining <= 0
    return np.where(targets > 0, arr.on | free, np.where(targets < 0, ~arr.on | free, True))


def apply_targets(arr: HouseArrays, bank: HouseBank, targets: np.ndarray,
                  packet_epoch: float = 0.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply int8 targets (+1 on, -1 off, 0 none) in place.

    Returns (accepted, turned_on, turned_off); accepted holds NO_COMMAND, REJECTED or ACCEPTED.
    """
    ok = feasible(arr, targets)
    accepted = np.where(targets == 0, NO_COMMAND, np.where(ok, ACCEPTED, REJECTED)).astype(np.int8)
    turn_on = (targets > 0) & ~arr.on & ok
    turn_off = (targets < 0) & arr.on & ok

    if turn_on.any():
        arr.on[turn_on] = True
        arr.lock_remaining[turn_on] = bank.min_on[turn_on]
        arr.time_in_state[turn_on] = 0.0
        arr.cycle_phase_time[turn_on] = 0.0
        arr.packet_remaining[turn_on] = (np.maximum(packet_epoch, bank.min_on[turn_on])
                                         if packet_epoch > 0 else 0.0)
    if turn_off.any():
        arr.on[turn_off] = False
        arr.lock_remaining[turn_off] = bank.lockout[turn_off]
        arr.time_in_state[turn_off] = 0.0
        arr.packet_remaining[turn_off] = 0.0
    return accepted, turn_on, turn_off


def lag_factor(tau: np.ndarray, dt: float) -> np.ndarray:
    """Exact first-order sensor response over dt; tau == 0 tracks the thermometer directly."""
    safe = np.where(tau > 0, tau, 1.0)
    return np.where(tau > 0, -np.expm1(-dt / safe), 1.0)


def advance(arr: HouseArrays, bank: HouseBank, T_amb: float, dt: float,
            hold: np.ndarray | None = None) -> StepOutcome:
    """Integrate physics over dt, then run timers, packet expiry and the thermostat.

    Houses flagged in hold keep their compressor state through the thermostat check.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    T_next, heat_in, heat_out = rk4_step(arr.T, bank.thermal, arr.on, T_amb, dt)
    ensure_finite(T_next, bank.house_ids)
    arr.T = T_next
    reading = thermometer_readings(arr, bank)
    arr.T_meas = arr.T_meas + (reading - arr.T_meas) * lag_factor(bank.tau, dt)

    arr.lock_remaining = np.maximum(arr.lock_remaining - dt, 0.0)
    arr.time_in_state += dt
    arr.cycle_phase_time = np.where(arr.on, arr.cycle_phase_time + dt, arr.cycle_phase_time)

    had_packet = arr.packet_remaining > 0
    arr.packet_remaining = np.maximum(arr.packet_remaining - dt, 0.0)
    expired = arr.on & had_packet & (arr.packet_remaining <= 0)

    targets = thermostat_targets(arr, bank)
    targets[expired] = -1
    if hold is not None:
        targets[hold] = 0
    _, turned_on, turned_off = apply_targets(arr, bank, targets)
    return StepOutcome(turned_on=turned_on, turned_off=turned_off,
                       heat_injected=heat_in, heat_removed=heat_out)


def pem_requests(arr: HouseArrays, bank: HouseBank, rng: np.random.Generator,
                 mean_time_to_request: float, dt: float, allow_off: bool = True) -> np.ndarray:
    """Stochastic energy-packet requests: +1 asks to turn on, -1 asks to turn off.

    The request rate grows as the house nears the deadband edge it is drifting toward and
    vanishes at the opposite edge; outside the deadband the thermostat acts alone.
    """
    T = arr.T_meas
    inside = (T > bank.T_minus) & (T < bank.T_plus)
    free = arr.lock_remaining <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        up = (T - bank.T_minus) / (bank.T_plus - T)
        down = (bank.T_plus - T) / (T - bank.T_minus)
    rate = np.where(arr.on, down, up) / mean_time_to_request
    rate = np.where(inside, rate, 0.0)
    probability = -np.expm1(-rate * dt)
    draws = rng.random(len(arr))
    requests = np.zeros(len(arr), dtype=np.int8)
    asking = inside & free & (draws < probability)
    requests[asking & ~arr.on] = 1
    if allow_off:
        requests[asking & arr.on] = -1
    return requests


def _single(state: HouseState, params: HouseParams) -> tuple[HouseArrays, HouseBank]:
    return HouseArrays.from_states([state]), HouseBank.from_params([params])


def thermostat_decision(state: HouseState, params: HouseParams) -> SwitchCommand:
    arr, bank = _single(state, params)
    code = int(thermostat_targets(arr, bank)[0])
    return SwitchCommand(target=TARGET_BY_CODE[code], source=CommandSource.THERMOSTAT)


def apply_command(state: HouseState, command: SwitchCommand, params: HouseParams,
                  packet_epoch: float = 0.0) -> tuple[HouseState, bool]:
    arr, bank = _single(state, params)
    targets = np.array([TARGET_CODES[command.target]], dtype=np.int8)
    epoch = packet_epoch if command.source is CommandSource.AGGREGATOR else 0.0
    accepted, _, _ = apply_targets(arr, bank, targets, epoch)
    return arr.state_at(0, state.thermal.T_amb), bool(accepted[0] != REJECTED)


def step_house(state: HouseState, params: HouseParams, T_amb: float, dt: float,
               hold: bool = False) -> HouseState:
    arr, bank = _single(state, params)
    advance(arr, bank, T_amb, dt, hold=np.array([hold]))
    return arr.state_at(0, T_amb)


def instantaneous_power(state: HouseState, params: HouseParams) -> tuple[float, InrushEvent | None]:
    arr, bank = _single(state, params)
    watts = float(power(arr, bank)[0])
    peak = float(inrush_peaks(arr, bank)[0])
    if peak <= 0:
        return watts, None
    return watts, InrushEvent(house_id=params.house_id, peak_power=peak,
                              duration=params.ac.inrush_duration)


def initial_state(params: HouseParams, T_amb: float, T_measured: float | None = None,
                  on: bool = False) -> HouseState:
    """A house sitting at a thermometer reading inside its deadband with the water node at its
    off-state offset from the air."""
    reading = params.setpoint if T_measured is None else T_measured
    offset = params.heat.to_water / params.thermal.H_m
    T_a = reading - params.thermal.f_Hm * offset
    thermal = ThermalState(T_w=T_a + offset, T_a=T_a, T_1=T_a, T_2=T_amb, T_amb=T_amb)
    compressor = CompressorState.ON if on else CompressorState.OFF
    return HouseState(thermal=thermal, T_measured=reading, compressor=compressor)
