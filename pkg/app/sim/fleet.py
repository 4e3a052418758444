import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..core.exceptions import IntegrationError, ModelDivergenceError, SynchronizationTimeout
from ..models.enums import PartitionTag, SwitchTarget, SyncDirection
from ..schemas.fleet import FleetSpec, FleetState, TelemetryFrame
from ..schemas.house import HouseParams, HouseState, SwitchCommand
from .house import (
    NO_COMMAND,
    TARGET_CODES,
    HouseArrays,
    HouseBank,
    advance,
    apply_targets,
    deadband_position,
    inrush_peaks,
    pem_requests,
    power,
    state_codes,
)
from .thermal import T1_BAND, steady_on_power

logger = logging.getLogger(__name__)

VARIED_THERMAL = ("C_w", "C_a", "C_1", "C_2", "H_m", "H_1", "H_2", "U_a", "f_Hm")
VARIED_AC = ("A", "W_fric")
VARIED_HEAT = ("Q_w_dot",)

EXTENSIVE_THERMAL = ("C_w", "C_a", "C_1", "C_2", "H_m", "H_1", "H_2", "U_a")
EXTENSIVE_AC = ("A", "W_fric")
EXTENSIVE_HEAT = ("Q_w_dot", "Q_a_dot", "Q_fixed")

SYNC_THRESHOLD = 0.95


def house_id(index: int, tag: PartitionTag) -> str:
    prefix = "x" if tag is PartitionTag.REMOTE_PLANT else "v"
    return f"{prefix}-{index:04d}"


def is_remote_id(hid: str) -> bool:
    return hid.startswith("x-")


def _perturb(nominal: HouseParams, factors: Iterable[float]) -> HouseParams:
    factors = iter(factors)
    thermal = {name: getattr(nominal.thermal, name) * next(factors) for name in VARIED_THERMAL}
    thermal["f_Hm"] = min(thermal["f_Hm"], 1.0)
    ac = {name: getattr(nominal.ac, name) * next(factors) for name in VARIED_AC}
    heat = {name: getattr(nominal.heat, name) * next(factors) for name in VARIED_HEAT}
    return nominal.model_copy(update={
        "thermal": nominal.thermal.model_copy(update=thermal),
        "ac": nominal.ac.model_copy(update=ac),
        "heat": nominal.heat.model_copy(update=heat),
    })


def scale_house(params: HouseParams, factor: float) -> HouseParams:
    """Multiply every extensive parameter by factor. Temperatures and time constants are
    unchanged and power scales linearly."""
    return params.model_copy(update={
        "thermal": params.thermal.model_copy(
            update={n: getattr(params.thermal, n) * factor for n in EXTENSIVE_THERMAL}),
        "ac": params.ac.model_copy(update={n: getattr(params.ac, n) * factor for n in EXTENSIVE_AC}),
        "heat": params.heat.model_copy(update={n: getattr(params.heat, n) * factor for n in EXTENSIVE_HEAT}),
    })


def generate_fleet(spec: FleetSpec) -> list[HouseParams]:
    """Draw every varied parameter independently and uniformly from nominal x [1-h, 1+h].

    Each house draws from its own stream seeded by (rng_seed, index), so growing the fleet
    leaves existing houses untouched. The last n_remote houses are tagged for the remote plant.
    """
    h = spec.heterogeneity_fraction
    n_factors = len(VARIED_THERMAL) + len(VARIED_AC) + len(VARIED_HEAT)
    n_local = spec.n_houses - min(spec.n_remote, spec.n_houses)
    houses = []
    for index in range(spec.n_houses):
        rng = np.random.default_rng([spec.rng_seed, index])
        tag = PartitionTag.LOCAL_VIRTUAL if index < n_local else PartitionTag.REMOTE_PLANT
        house = _perturb(spec.nominal, rng.uniform(1.0 - h, 1.0 + h, size=n_factors))
        houses.append(house.model_copy(update={"house_id": house_id(index, tag), "tag": tag}))

    if spec.avg_on_power_target is None:
        return houses
    plateau = [steady_on_power(p.thermal, p.ac, spec.design_T_amb, p.setpoint) for p in houses]
    factor = spec.avg_on_power_target / float(np.mean(plateau))
    logger.debug("scaling %d houses by %.3f to a %.0f W mean plateau",
                 spec.n_houses, factor, spec.avg_on_power_target)
    return [scale_house(p, factor) for p in houses]


def rated_powers(houses: Sequence[HouseParams], T_amb: float) -> np.ndarray:
    return np.array([steady_on_power(p.thermal, p.ac, T_amb, p.setpoint) for p in houses])


@dataclass
class SyncReport:
    direction: SyncDirection
    reached: bool
    elapsed: float
    commands_issued: int
    frames: list[TelemetryFrame] = field(default_factory=list)


class Fleet:
    """A synchronously stepped population of houses.

    One control step applies the aggregator targets, integrates physics in dt_physics
    substeps and returns a TelemetryFrame. Only the caller that owns the fleet steps it.
    """

    def __init__(self, houses: Sequence[HouseParams], T_amb: float, dt_control: float = 2.0,
                 dt_physics: float = 1.0, seed: int = 0, packet_epoch: float = 0.0,
                 mean_time_to_request: float | None = None, allow_off_requests: bool = True):
        if not houses:
            raise ValueError("a fleet needs at least one house")
        self.houses = list(houses)
        self.bank = HouseBank.from_params(self.houses)
        self.index = {hid: i for i, hid in enumerate(self.bank.house_ids)}
        if len(self.index) != len(self.houses):
            raise ValueError("house ids must be unique")
        self.remote = np.array([p.tag is PartitionTag.REMOTE_PLANT for p in self.houses])
        self.T_amb = T_amb
        self.dt_control = dt_control
        self.dt_physics = dt_physics
        self.packet_epoch = packet_epoch
        self.mean_time_to_request = mean_time_to_request
        self.allow_off_requests = allow_off_requests
        self.rng = np.random.default_rng([seed, len(self.houses)])
        self.rated_power = rated_powers(self.houses, T_amb)
        self.sim_time = 0.0
        self.seq = 0
        self.arrays = self._random_start()
        self._requests = np.zeros(len(self), dtype=np.int8)

    def __len__(self) -> int:
        return len(self.houses)

    @property
    def house_ids(self) -> tuple[str, ...]:
        return self.bank.house_ids

    def _random_start(self) -> HouseArrays:
        n = len(self)
        bank = self.bank
        T_meas = bank.T_minus + self.rng.random(n) * (bank.T_plus - bank.T_minus)
        offset = bank.thermal.Q_water / bank.thermal.H_m
        T_a = T_meas - bank.thermal.f_Hm * offset
        T = np.vstack((T_a + offset, T_a, T_a, np.full(n, float(self.T_amb))))
        zeros = np.zeros(n)
        return HouseArrays(T=T, T_meas=T_meas, on=self.rng.random(n) < 0.3,
                           lock_remaining=zeros.copy(), time_in_state=zeros.copy(),
                           cycle_phase_time=zeros.copy(), packet_remaining=zeros.copy())

    def load_states(self, states: Sequence[HouseState]) -> None:
        if len(states) != len(self):
            raise ValueError(f"expected {len(self)} house states, got {len(states)}")
        self.arrays = HouseArrays.from_states(states)

    def house_state(self, index: int) -> HouseState:
        return self.arrays.state_at(index, self.T_amb)

    def house_states(self) -> list[HouseState]:
        return [self.house_state(i) for i in range(len(self))]

    def targets_for(self, commands: Iterable[tuple[str, SwitchTarget]]) -> tuple[np.ndarray, list[str]]:
        """Map (house_id, target) pairs onto a target vector; unknown ids are returned apart."""
        targets = np.zeros(len(self), dtype=np.int8)
        unknown = []
        for hid, target in commands:
            index = self.index.get(hid)
            if index is None:
                unknown.append(hid)
            else:
                targets[index] = TARGET_CODES[SwitchTarget(target)]
        return targets, unknown

    def frame(self, accepted: np.ndarray | None = None, started: np.ndarray | None = None,
              missed_command: bool = False) -> TelemetryFrame:
        n = len(self)
        watts = power(self.arrays, self.bank)
        if started is None:
            started = np.zeros(n, dtype=bool)
        return TelemetryFrame(
            t=self.sim_time,
            seq=self.seq,
            house_ids=self.house_ids,
            power=watts,
            temperature=self.arrays.T_meas.copy(),
            position=deadband_position(self.arrays, self.bank),
            state=state_codes(self.arrays),
            lock_remaining=self.arrays.lock_remaining.copy(),
            accepted=accepted if accepted is not None else np.full(n, NO_COMMAND, dtype=np.int8),
            requests=self._requests.copy(),
            rated_power=self.rated_power,
            inrush_peak=inrush_peaks(self.arrays, self.bank, started),
            corrupt=np.zeros(n, dtype=bool),
            missed_command=missed_command,
            turned_on=started,
        )

    def state(self) -> FleetState:
        frame = self.frame()
        return FleetState(sim_time=self.sim_time, aggregate_power=frame.aggregate_power,
                          counts=frame.counts, n_houses=len(self))

    def step(self, targets: np.ndarray | None = None, hold: np.ndarray | None = None,
             dt: float | None = None, missed_command: bool = False) -> TelemetryFrame:
        dt = self.dt_control if dt is None else dt
        if dt <= 0:
            raise ValueError("dt must be positive")
        if targets is None:
            targets = np.zeros(len(self), dtype=np.int8)
        accepted, started, _ = apply_targets(self.arrays, self.bank, targets, self.packet_epoch)

        n_sub = max(1, int(round(dt / self.dt_physics)))
        for _ in range(n_sub):
            try:
                outcome = advance(self.arrays, self.bank, self.T_amb, dt / n_sub, hold)
            except ModelDivergenceError as exc:
                low, high = T1_BAND
                bad = np.flatnonzero((self.arrays.T[2] <= low) | (self.arrays.T[2] >= high))
                hid = self.house_ids[int(bad[0])] if bad.size else None
                raise IntegrationError(str(exc), house_id=hid) from exc
            started |= outcome.turned_on
        self.sim_time += dt
        self.seq += 1

        if self.mean_time_to_request is not None:
            self._requests = pem_requests(self.arrays, self.bank, self.rng, self.mean_time_to_request,
                                          dt, self.allow_off_requests)
        return self.frame(accepted, started, missed_command)


def step_fleet(fleet: Fleet, commands: Sequence[SwitchCommand], dt: float | None = None) -> tuple[FleetState, TelemetryFrame]:
    if len(commands) != len(fleet):
        raise ValueError(f"expected {len(fleet)} commands, got {len(commands)}")
    targets = np.array([TARGET_CODES[c.target] for c in commands], dtype=np.int8)
    hold = np.array([c.hold for c in commands], dtype=bool)
    frame = fleet.step(targets, hold, dt)
    return fleet.state(), frame


def synchronized_share(frame: TelemetryFrame, direction: SyncDirection) -> float:
    n_on, _, _ = frame.counts
    share_on = n_on / frame.n_houses
    return share_on if direction is SyncDirection.ALL_ON else 1.0 - share_on


def force_synchronize(fleet: Fleet, direction: SyncDirection, horizon: float = 1800.0,
                      threshold: float = SYNC_THRESHOLD) -> SyncReport:
    """Hold every house at the target state, re-issuing commands each step, until the
    threshold share of the fleet agrees. Raises SynchronizationTimeout past horizon."""
    report = SyncReport(direction=direction, reached=False, elapsed=0.0, commands_issued=0)
    code = 1 if direction is SyncDirection.ALL_ON else -1
    targets = np.full(len(fleet), code, dtype=np.int8)
    hold = np.ones(len(fleet), dtype=bool)
    frame = fleet.frame()
    while synchronized_share(frame, direction) < threshold:
        if report.elapsed >= horizon:
            raise SynchronizationTimeout(
                f"{direction.value} reached {synchronized_share(frame, direction):.1%} after {horizon:.0f} s")
        frame = fleet.step(targets, hold)
        report.commands_issued += len(fleet)
        report.elapsed += fleet.dt_control
        report.frames.append(frame)
    report.reached = True
    logger.info("fleet synchronized %s in %.0f s", direction.value, report.elapsed)
    return report
