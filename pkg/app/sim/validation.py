"""Open-loop scenarios that check the fleet reproduces the phenomena seen on the physical testbed.

Every scenario drives a fresh fleet without a tracking controller and returns a
ValidationResult: a handful of boolean property checks and the values they were computed from.
"""
import logging
from typing import Callable

import numpy as np

from ..core.exceptions import ConfigError
from ..models.enums import ChannelMode, SwitchTarget, SyncDirection
from ..schemas.channel import ChannelModel, DeviceCommand
from ..schemas.experiment import NOMINAL_HEAT_GAIN, NOMINAL_T_AMB, ValidationResult
from ..schemas.fleet import FleetSpec
from ..schemas.house import HouseParams
from .channel import Channel
from .fleet import Fleet, force_synchronize, generate_fleet
from .house import LOCKED_ON, ON
from .runner import PhaseLog, estimate_cycle_period
from .thermal import cycle_durations_many

logger = logging.getLogger(__name__)

SWEEP_PERIODS = (60.0, 120.0, 300.0, 600.0, 1200.0, 2400.0)
HETEROGENEITY_LEVELS = (0.0, 0.1, 0.2, 0.3)
SYNC_ALARM = 0.25


def _houses(n_houses: int, heterogeneity: float, seed: int, heat_gain: float = NOMINAL_HEAT_GAIN) -> list[HouseParams]:
    nominal = HouseParams()
    nominal = nominal.model_copy(update={"heat": nominal.heat.model_copy(update={"Q_w_dot": heat_gain})})
    spec = FleetSpec(n_houses=n_houses, nominal=nominal, heterogeneity_fraction=heterogeneity,
                     rng_seed=seed, n_remote=0)
    return generate_fleet(spec)


def _fleet(houses: list[HouseParams], T_amb: float, seed: int, dt_control: float) -> Fleet:
    return Fleet(houses, T_amb, dt_control=dt_control, dt_physics=min(1.0, dt_control), seed=seed)


def _free_run(fleet: Fleet, duration: float, log: PhaseLog | None = None) -> PhaseLog:
    log = log or PhaseLog()
    for _ in range(int(round(duration / fleet.dt_control))):
        log.add(fleet.step())
    return log


def _on(states: np.ndarray) -> np.ndarray:
    return (states == ON) | (states == LOCKED_ON)


def oscillation_envelope(aggregate: np.ndarray, window: int) -> np.ndarray:
    """Largest deviation from the trace mean inside each consecutive window of samples."""
    deviation = np.abs(aggregate - aggregate.mean())
    n_windows = len(deviation) // window
    return deviation[: n_windows * window].reshape(n_windows, window).max(axis=1)


def free_run(n_houses: int = 200, seed: int = 0, T_amb: float = NOMINAL_T_AMB,
             duration: float = 21_600.0, warmup: float = 1800.0, dt_control: float = 2.0,
             n_bins: int = 10) -> ValidationResult:
    fleet = _fleet(_houses(n_houses, 0.2, seed), T_amb, seed, dt_control)
    _free_run(fleet, warmup)

    every = max(1, int(round(60.0 / dt_control)))
    positions = []
    log = PhaseLog()
    for k in range(int(round(duration / dt_control))):
        frame = fleet.step()
        log.add(frame)
        if k % every == 0:
            positions.append(frame.position)
    hist, _ = np.histogram(np.clip(np.concatenate(positions), 0.0, 1.0), bins=n_bins, range=(0.0, 1.0))
    centre = hist[n_bins // 2 - 1: n_bins // 2 + 1].mean()

    aggregate = np.asarray(log.aggregate)
    variation = float(aggregate.std() / aggregate.mean())
    duty = float(_on(log.state_matrix).mean())
    return ValidationResult(
        name="exp1",
        verdicts={
            "bimodal_occupancy": bool(hist[0] > centre and hist[-1] > centre),
            "no_synchronization_alarm": variation < SYNC_ALARM,
            "duty_cycle_in_band": 0.2 <= duty <= 0.8,
        },
        values={"edge_low": float(hist[0]), "edge_high": float(hist[-1]), "centre": float(centre),
                "relative_variation": variation, "duty_cycle": duty},
    )


def _sync_and_release(heterogeneity: float, n_houses: int, seed: int, T_amb: float, warmup: float,
                      dwell: float, n_windows: int, dt_control: float) -> tuple[np.ndarray, float]:
    """Hold the whole fleet off past its lockout, then release it: every house starts at once and
    the envelope is measured in windows of one natural cycle from the release."""
    fleet = _fleet(_houses(n_houses, heterogeneity, seed), T_amb, seed, dt_control)
    period = estimate_cycle_period(_free_run(fleet, warmup).state_matrix, dt_control)

    report = force_synchronize(fleet, SyncDirection.ALL_OFF)
    targets = np.full(len(fleet), -1, dtype=np.int8)
    hold = np.ones(len(fleet), dtype=bool)
    for _ in range(int(round(dwell / dt_control))):
        fleet.step(targets, hold)
    logger.info("released %d houses (h=%.2f) after %.0f s forced off", len(fleet), heterogeneity,
                report.elapsed + dwell)

    window = max(1, int(round(period / dt_control)))
    log = _free_run(fleet, n_windows * window * dt_control)
    return oscillation_envelope(np.asarray(log.aggregate), window), period


def desynchronization(n_houses: int = 200, seed: int = 0, T_amb: float = NOMINAL_T_AMB,
                      warmup: float = 1800.0, dwell: float = 300.0, dt_control: float = 2.0) -> ValidationResult:
    envelope, period = _sync_and_release(0.2, n_houses, seed, T_amb, warmup, dwell, 6, dt_control)
    decayed = float(envelope[1:4].min() / envelope[0])
    return ValidationResult(
        name="exp2",
        verdicts={"envelope_halves_within_3_cycles": decayed <= 0.5},
        values={"natural_period_s": period, "envelope_ratio": decayed,
                **{f"envelope_{k}": float(v) for k, v in enumerate(envelope)}},
    )


def persistent_synchronization(n_houses: int = 200, seed: int = 0, T_amb: float = NOMINAL_T_AMB,
                               warmup: float = 1800.0, dwell: float = 300.0,
                               dt_control: float = 2.0) -> ValidationResult:
    envelope, period = _sync_and_release(0.0, n_houses, seed, T_amb, warmup, dwell, 6, dt_control)
    persisted = float(envelope[5] / envelope[0])
    return ValidationResult(
        name="exp4",
        verdicts={"oscillation_persists_5_cycles": persisted > 0.5},
        values={"natural_period_s": period, "envelope_ratio": persisted,
                **{f"envelope_{k}": float(v) for k, v in enumerate(envelope)}},
    )


def frequency_sweep(n_houses: int = 200, seed: int = 0, T_amb: float = NOMINAL_T_AMB,
                    periods: tuple[float, ...] = SWEEP_PERIODS, n_cycles: int = 4, warmup: float = 1800.0,
                    dt_control: float = 2.0) -> ValidationResult:
    """Drive the whole fleet on for half a period and off for the other half, re-sending the
    command every step, and measure the folded peak-to-peak response per period."""
    houses = _houses(n_houses, 0.2, seed)
    gains = {}
    for period in periods:
        fleet = _fleet(houses, T_amb, seed, dt_control)
        _free_run(fleet, warmup)
        per_cycle = max(2, int(round(period / dt_control)))
        on = np.ones(len(fleet), dtype=np.int8)
        aggregate = np.empty(n_cycles * per_cycle)
        for k in range(len(aggregate)):
            targets = on if (k % per_cycle) < per_cycle // 2 else -on
            aggregate[k] = fleet.step(targets).aggregate_power
        folded = aggregate[per_cycle:].reshape(n_cycles - 1, per_cycle).mean(axis=0)
        gains[period] = float((folded.max() - folded.min()) / fleet.rated_power.sum())
        logger.debug("sweep period %.0f s: gain %.3f", period, gains[period])

    shortest = gains[min(periods)]
    return ValidationResult(
        name="exp3",
        verdicts={"fast_switching_attenuated": shortest < 0.6 * max(gains.values())},
        values={f"gain_{int(p)}s": g for p, g in gains.items()},
    )


def multiple_populations(n_houses: int = 200, seed: int = 0, T_amb: float = NOMINAL_T_AMB,
                         heat_gains: tuple[float, float] = (200.0, 375.0), duration: float = 7200.0,
                         warmup: float = 1800.0, dt_control: float = 2.0) -> ValidationResult:
    """Two sub-fleets with different internal heat gain share one feeder; each keeps its own
    duty cycle and cycle period."""
    half = n_houses // 2
    low = _houses(half, 0.2, seed, heat_gains[0])
    high = [p.model_copy(update={"house_id": f"v-{half + i:04d}"})
            for i, p in enumerate(_houses(n_houses - half, 0.2, seed + 1, heat_gains[1]))]
    fleet = _fleet(low + high, T_amb, seed, dt_control)
    _free_run(fleet, warmup)
    states = _free_run(fleet, duration).state_matrix

    duty = [float(_on(states[:, :half]).mean()), float(_on(states[:, half:]).mean())]
    periods = [estimate_cycle_period(states[:, :half], dt_control),
               estimate_cycle_period(states[:, half:], dt_control)]
    return ValidationResult(
        name="exp5",
        verdicts={
            "higher_gain_higher_duty": duty[1] > duty[0],
            "populations_distinct": abs(duty[1] - duty[0]) > 0.05,
        },
        values={"duty_low_gain": duty[0], "duty_high_gain": duty[1],
                "period_low_gain_s": periods[0], "period_high_gain_s": periods[1]},
    )


def heterogeneity_spread(n_houses: int = 50, seed: int = 0, T_amb: float = NOMINAL_T_AMB,
                         levels: tuple[float, ...] = HETEROGENEITY_LEVELS) -> ValidationResult:
    """Coefficient of variation of the limit-cycle period across the fleet, per heterogeneity level."""
    spread = {}
    for h in levels:
        houses = _houses(n_houses, h, seed)
        nominal = houses[0]
        cycles = cycle_durations_many([(p.thermal, p.ac, p.heat) for p in houses], nominal.deadband, T_amb)
        period = np.array([c.period for c in cycles])
        spread[h] = float(period.std() / period.mean())
    values = [spread[h] for h in levels]
    return ValidationResult(
        name="exp6",
        verdicts={"spread_grows_with_heterogeneity": bool(np.all(np.diff(values) > 0))},
        values={f"period_cv_h{h:.2f}": v for h, v in spread.items()},
    )


def _response_time(fleet: Fleet, channel: Channel[DeviceCommand], horizon: float) -> float:
    start = fleet.sim_time
    before = fleet.frame().aggregate_power
    channel.send_many((DeviceCommand(seq=0, house_id=hid, target=SwitchTarget.OFF) for hid in fleet.house_ids),
                      start)
    for _ in range(int(round(horizon / fleet.dt_control))):
        targets, _ = fleet.targets_for((c.house_id, c.target) for c in channel.pop_due(fleet.sim_time))
        if fleet.step(targets).aggregate_power <= 0.5 * before:
            return fleet.sim_time - start
    return float("inf")


def command_delay(n_houses: int = 200, seed: int = 0, T_amb: float = NOMINAL_T_AMB, warmup: float = 1800.0,
                  horizon: float = 120.0, dt_control: float = 2.0,
                  impaired: ChannelModel | None = None) -> ValidationResult:
    """An all-off broadcast through a perfect and an impaired channel: the impaired response
    lags by about the mean channel delay."""
    houses = _houses(n_houses, 0.2, seed)
    impaired = impaired or ChannelModel.impaired(rng_seed=seed)
    times = {}
    for model in (ChannelModel(mode=ChannelMode.PERFECT), impaired):
        fleet = _fleet(houses, T_amb, seed, dt_control)
        _free_run(fleet, warmup)
        times[model.mode] = _response_time(fleet, Channel(model), horizon)

    lag = times[ChannelMode.IMPAIRED] - times[ChannelMode.PERFECT]
    slack = 3 * impaired.delay_std + 2 * dt_control
    return ValidationResult(
        name="exp7",
        verdicts={"lag_matches_channel_delay": abs(lag - impaired.delay_mean) <= slack},
        values={"response_perfect_s": times[ChannelMode.PERFECT],
                "response_impaired_s": times[ChannelMode.IMPAIRED], "lag_s": lag},
    )


PRESETS: dict[str, Callable[..., ValidationResult]] = {
    "exp1": free_run,
    "exp2": desynchronization,
    "exp3": frequency_sweep,
    "exp4": persistent_synchronization,
    "exp5": multiple_populations,
    "exp6": heterogeneity_spread,
    "exp7": command_delay,
}


def run_validation_preset(name: str, **overrides) -> ValidationResult:
    try:
        scenario = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown validation preset {name!r}; expected one of {', '.join(PRESETS)}") from None
    logger.info("running validation preset %s", name)
    result = scenario(**overrides)
    logger.info("%s: %s", name, ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in result.verdicts.items()))
    return result
