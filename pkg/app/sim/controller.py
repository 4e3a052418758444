"""Aggregator controllers: PI broadcast, Markov-model predictive broadcast and packetized
energy management (request/grant). All three expose Controller.step."""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..models.enums import ControllerKind, RequestKind, SwitchTarget
from ..schemas.controller import (
    CommandBatch,
    ControllerSpec,
    MarkovConfig,
    PemConfig,
    PemDecision,
    PendingRequest,
    PiConfig,
    PiState,
)
from ..schemas.fleet import TelemetryFrame
from .house import LOCKED_OFF, LOCKED_ON, OFF, ON

logger = logging.getLogger(__name__)


def eligible_devices(frame: TelemetryFrame, target: SwitchTarget) -> np.ndarray:
    """Indices of devices a command can move right now, as last reported."""
    state = OFF if target is SwitchTarget.ON else ON
    return np.flatnonzero((frame.state == state) & ~frame.corrupt)


def measured_on_power(frame: TelemetryFrame | None, default: float) -> float:
    if frame is None:
        return default
    running = ((frame.state == ON) | (frame.state == LOCKED_ON)) & ~frame.corrupt & (frame.power > 0)
    if not running.any():
        return default
    return float(frame.power[running].mean())


class Controller(ABC):
    kind: ControllerKind

    def __init__(self, n_devices: int, dt_control: float = 2.0, seed: int | None = None):
        self.n_devices = n_devices
        self.dt_control = dt_control
        self.rng = np.random.default_rng(seed)

    def observe(self, frame: TelemetryFrame) -> None:
        """Feed telemetry from an uncontrolled phase."""

    @abstractmethod
    def step(self, observed_power: float, reference_power: float,
             feedback: TelemetryFrame | None, sim_time: float) -> CommandBatch:
        ...

    def _broadcast(self, frame: TelemetryFrame, candidates: np.ndarray, probability: float,
                   target: SwitchTarget) -> list[tuple[str, SwitchTarget]]:
        if probability <= 0 or candidates.size == 0:
            return []
        chosen = candidates[self.rng.random(candidates.size) < probability]
        return [(frame.house_ids[i], target) for i in chosen]


def pi_step(cfg: PiConfig, error: float, state: PiState, dt: float, reference: float,
            limit: float) -> tuple[float, PiState]:
    """u = (kp e + ki integral(e)) / reference with the integral clamped to +/- limit (W·s)."""
    integral = min(max(state.integral + error * dt, -limit), limit)
    u = (cfg.kp * error + cfg.ki * integral) / reference
    return u, PiState(integral=integral)


class PiController(Controller):
    kind = ControllerKind.PI

    def __init__(self, cfg: PiConfig, n_devices: int, dt_control: float = 2.0, seed: int | None = None):
        super().__init__(n_devices, dt_control, seed)
        self.cfg = cfg
        self.state = PiState()
        self.limit = cfg.anti_windup_limit or 10.0 * n_devices * cfg.avg_on_power * dt_control

    def step(self, observed_power, reference_power, feedback, sim_time) -> CommandBatch:
        reference = max(abs(reference_power), 1.0)
        u, self.state = pi_step(self.cfg, reference_power - observed_power, self.state,
                                self.dt_control, reference, self.limit)
        batch = CommandBatch(effort=u)
        if u == 0 or feedback is None:
            return batch
        target = SwitchTarget.ON if u > 0 else SwitchTarget.OFF
        candidates = eligible_devices(feedback, target)
        if candidates.size == 0:
            batch.saturated = True
            return batch
        wanted = abs(u) * reference / measured_on_power(feedback, self.cfg.avg_on_power)
        batch.commands = self._broadcast(feedback, candidates, min(1.0, wanted / candidates.size), target)
        return batch


@dataclass(frozen=True)
class BinLayout:
    """Off temperature bins, on temperature bins, lockout bins, then delay bins for freshly
    started devices whose thermometer has not yet responded."""

    n_temp: int
    n_lock: int
    n_delay: int

    @classmethod
    def from_config(cls, cfg: MarkovConfig, dt_control: float) -> "BinLayout":
        n_lock = max(1, math.ceil(cfg.lockout_duration / dt_control))
        if not cfg.use_delayed_dynamics:
            n_delay = 0
        elif cfg.delay_steps is not None:
            n_delay = cfg.delay_steps
        else:
            n_delay = max(1, math.ceil(cfg.sensor_lag_tau / dt_control))
        return cls(n_temp=cfg.n_temp_bins, n_lock=n_lock, n_delay=n_delay)

    @property
    def size(self) -> int:
        return 2 * self.n_temp + self.n_lock + self.n_delay

    @property
    def lock_offset(self) -> int:
        return 2 * self.n_temp

    @property
    def delay_offset(self) -> int:
        return 2 * self.n_temp + self.n_lock

    def mask(self, start: int, stop: int) -> np.ndarray:
        m = np.zeros(self.size, dtype=bool)
        m[start:stop] = True
        return m

    @property
    def on_bins(self) -> np.ndarray:
        return self.mask(self.n_temp, 2 * self.n_temp) | self.mask(self.delay_offset, self.size)

    @property
    def off_temp_bins(self) -> np.ndarray:
        return self.mask(0, self.n_temp)

    @property
    def on_temp_bins(self) -> np.ndarray:
        return self.mask(self.n_temp, 2 * self.n_temp)

    def assign(self, frame: TelemetryFrame, since_start: np.ndarray, dt_control: float) -> np.ndarray:
        position = np.nan_to_num(frame.position, nan=0.5)
        temp_bin = np.clip(np.floor(position * self.n_temp), 0, self.n_temp - 1).astype(int)
        on = (frame.state == ON) | (frame.state == LOCKED_ON)
        bins = np.where(on, self.n_temp + temp_bin, temp_bin)
        locked = frame.state == LOCKED_OFF
        lock_bin = np.minimum(self.n_lock - 1, np.floor(frame.lock_remaining / dt_control)).astype(int)
        bins = np.where(locked, self.lock_offset + np.maximum(lock_bin, 0), bins)
        if self.n_delay:
            delayed = on & (since_start < self.n_delay)
            bins = np.where(delayed, self.delay_offset + np.clip(since_start, 0, self.n_delay - 1), bins)
        return bins


def estimate_transition_matrix(counts: np.ndarray) -> np.ndarray:
    """Row-normalize transition counts; states never visited keep a self-loop."""
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=1, keepdims=True)
    matrix = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 0.0)
    empty = totals[:, 0] == 0
    matrix[empty, empty.nonzero()[0]] = 1.0
    return matrix


@dataclass(frozen=True)
class MarkovPrediction:
    u: float
    predicted_power: float
    saturated: bool
    occupancy_next: np.ndarray


def markov_step(matrix: np.ndarray, layout: BinLayout, occupancy: np.ndarray, reference: float,
                n_devices: int, avg_on_power: float) -> MarkovPrediction:
    """Propagate bin occupancy one step, predict aggregate power and size the broadcast
    switching probability needed to close the gap to the reference."""
    occupancy = np.asarray(occupancy, dtype=float)
    if not math.isclose(occupancy.sum(), 1.0, abs_tol=1e-9):
        raise ValueError(f"bin occupancy sums to {occupancy.sum():.6f}, expected 1")
    following = occupancy @ matrix
    predicted = avg_on_power * n_devices * float(following[layout.on_bins].sum())
    gap = reference - predicted
    eligible = layout.off_temp_bins if gap > 0 else layout.on_temp_bins
    capacity = avg_on_power * n_devices * float(occupancy[eligible].sum())
    if gap == 0:
        return MarkovPrediction(0.0, predicted, False, following)
    if capacity <= 0:
        return MarkovPrediction(0.0, predicted, True, following)
    u = float(np.clip(gap / capacity, -1.0, 1.0))
    return MarkovPrediction(u, predicted, False, following)


class MarkovController(Controller):
    kind = ControllerKind.MARKOV

    def __init__(self, cfg: MarkovConfig, n_devices: int, dt_control: float = 2.0, seed: int | None = None):
        super().__init__(n_devices, dt_control, seed)
        self.cfg = cfg
        self.layout = BinLayout.from_config(cfg, dt_control)
        self.counts = np.zeros((self.layout.size, self.layout.size))
        self.matrix = np.asarray(cfg.transition_matrix, dtype=float) if cfg.transition_matrix else None
        if self.matrix is not None and self.matrix.shape[0] != self.layout.size:
            raise ValueError(f"transition matrix is {self.matrix.shape[0]} states, layout needs {self.layout.size}")
        self._bins: np.ndarray | None = None
        self._valid: np.ndarray | None = None
        self._since_start: np.ndarray | None = None
        self._was_on: np.ndarray | None = None

    def _track(self, frame: TelemetryFrame) -> np.ndarray:
        on = (frame.state == ON) | (frame.state == LOCKED_ON)
        if self._since_start is None:
            self._since_start = np.full(frame.n_houses, self.layout.n_delay, dtype=int)
        else:
            self._since_start = np.minimum(self._since_start + 1, self.layout.n_delay)
            self._since_start[on & ~self._was_on] = 0
        self._was_on = on
        return self.layout.assign(frame, self._since_start, self.dt_control)

    def observe(self, frame: TelemetryFrame) -> None:
        bins = self._track(frame)
        valid = ~frame.corrupt
        if self._bins is not None:
            both = valid & self._valid
            np.add.at(self.counts, (self._bins[both], bins[both]), 1.0)
        self._bins, self._valid = bins, valid

    def fit(self) -> np.ndarray:
        if self.counts.sum() == 0:
            logger.warning("no transitions observed; Markov model falls back to the identity")
        self.matrix = estimate_transition_matrix(self.counts)
        return self.matrix

    def step(self, observed_power, reference_power, feedback, sim_time) -> CommandBatch:
        if feedback is None:
            return CommandBatch(saturated=True)
        if self.matrix is None:
            self.fit()
        bins = self._track(feedback)
        valid = ~feedback.corrupt
        if not valid.any():
            return CommandBatch(saturated=True)
        occupancy = np.bincount(bins[valid], minlength=self.layout.size) / valid.sum()
        avg_on = (measured_on_power(feedback, self.cfg.avg_on_power)
                  if self.cfg.estimate_on_power else self.cfg.avg_on_power)
        prediction = markov_step(self.matrix, self.layout, occupancy, reference_power,
                                 int(valid.sum()), avg_on)
        batch = CommandBatch(effort=prediction.u, saturated=prediction.saturated,
                             predicted_power=prediction.predicted_power)
        if prediction.u == 0:
            return batch
        target = SwitchTarget.ON if prediction.u > 0 else SwitchTarget.OFF
        eligible = self.layout.off_temp_bins if prediction.u > 0 else self.layout.on_temp_bins
        candidates = np.flatnonzero(eligible[bins] & valid)
        batch.commands = self._broadcast(feedback, candidates, abs(prediction.u), target)
        return batch


def pem_step(cfg: PemConfig, pending: list[PendingRequest], current_power: float,
             reference: float) -> PemDecision:
    """Greedy grant in arrival order: an On request is granted if it keeps projected power at
    or under the reference, an Off request if it keeps it at or over."""
    decision = PemDecision(saturated=not pending)
    projected = current_power
    for request in pending:
        if request.kind is RequestKind.ON and projected + request.power <= reference:
            projected += request.power
            decision.granted.append(request)
        elif (request.kind is RequestKind.OFF and cfg.allow_turn_off_requests
              and projected - request.power >= reference):
            projected -= request.power
            decision.granted.append(request)
        else:
            decision.denied.append(request)
    return decision


class PemController(Controller):
    """Grants device requests against the reference.

    Next-step power is projected from the measured aggregate, less the packets this
    coordinator granted that run out within the step, plus a smoothed estimate of the change
    that no grant explains (devices leaving the deadband and following their own thermostat).
    """

    kind = ControllerKind.PEM

    def __init__(self, cfg: PemConfig, n_devices: int, dt_control: float = 2.0, seed: int | None = None):
        super().__init__(n_devices, dt_control, seed)
        self.cfg = cfg
        # device -> sim time its packet was granted
        self.packets: dict[str, float] = {}
        self.drift = 0.0
        self._expected: float | None = None
        self._ids: tuple[str, ...] | None = None
        self._index: dict[str, int] = {}

    def _position(self, frame: TelemetryFrame) -> dict[str, int]:
        if frame.house_ids is not self._ids:
            self._ids = frame.house_ids
            self._index = {hid: i for i, hid in enumerate(frame.house_ids)}
        return self._index

    def expiring_power(self, frame: TelemetryFrame, sim_time: float) -> float:
        """Power of granted packets that end before the next frame; packets of devices that
        are no longer running are forgotten."""
        index = self._position(frame)
        running = (frame.state == ON) | (frame.state == LOCKED_ON)
        horizon = sim_time + self.dt_control
        expiring = 0.0
        for device, granted_at in list(self.packets.items()):
            i = index.get(device)
            if i is None or (not frame.corrupt[i] and not running[i]):
                del self.packets[device]
            elif not frame.corrupt[i] and granted_at + self.cfg.epoch_length <= horizon:
                expiring += float(frame.power[i])
        return expiring

    def requests(self, frame: TelemetryFrame) -> list[PendingRequest]:
        valid = ~frame.corrupt
        asking_on = np.flatnonzero(valid & (frame.requests > 0) & (frame.state == OFF))
        asking_off = np.flatnonzero(valid & (frame.requests < 0) & (frame.state == ON))
        pending = [PendingRequest(device=frame.house_ids[i], kind=RequestKind.ON,
                                  power=float(frame.rated_power[i])) for i in asking_on]
        pending += [PendingRequest(device=frame.house_ids[i], kind=RequestKind.OFF,
                                   power=float(frame.power[i])) for i in asking_off]
        order = self.rng.permutation(len(pending))
        return [pending[i] for i in order]

    def step(self, observed_power, reference_power, feedback, sim_time) -> CommandBatch:
        if feedback is None:
            return CommandBatch(saturated=True)
        if self._expected is not None and self.cfg.drift_smoothing > 0:
            self.drift += self.cfg.drift_smoothing * (observed_power - self._expected - self.drift)
        base = observed_power - self.expiring_power(feedback, sim_time)
        decision = pem_step(self.cfg, self.requests(feedback), base + self.drift, reference_power)

        commands = []
        change = 0.0
        for request in decision.granted:
            if request.kind is RequestKind.ON:
                self.packets[request.device] = sim_time
                commands.append((request.device, SwitchTarget.ON))
                change += request.power
            else:
                self.packets.pop(request.device, None)
                commands.append((request.device, SwitchTarget.OFF))
                change -= request.power
        self._expected = base + change
        return CommandBatch(commands=commands, effort=decision.grant_fraction, saturated=decision.saturated,
                            predicted_power=base + self.drift + change)


def build_controller(spec: ControllerSpec, n_devices: int, dt_control: float = 2.0,
                     seed: int | None = None) -> Controller:
    seed = spec.seed if spec.seed is not None else seed
    if spec.kind is ControllerKind.PI:
        return PiController(spec.pi, n_devices, dt_control, seed)
    if spec.kind is ControllerKind.MARKOV:
        return MarkovController(spec.markov, n_devices, dt_control, seed)
    return PemController(spec.pem, n_devices, dt_control, seed)
