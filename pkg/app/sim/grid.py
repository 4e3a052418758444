"""Transformer assignment and overload bookkeeping over telemetry frames."""
import logging
from typing import Mapping, Sequence

import numpy as np

from ..core.exceptions import AccountingError
from ..models.enums import HouseAssignment
from ..schemas.fleet import TelemetryFrame
from ..schemas.grid import OverloadReport, TransformerOverload, TransformerSpec

logger = logging.getLogger(__name__)


def assign_houses(house_ids: Sequence[str], n_transformers: int,
                  distribution: HouseAssignment = HouseAssignment.UNIFORM, seed: int = 0,
                  house_power: Mapping[str, float] | None = None,
                  headroom: float = 0.9) -> list[TransformerSpec]:
    """Partition houses over transformers.

    UNIFORM shuffles then deals round-robin, so sizes differ by at most one; RANDOM draws a
    transformer per house. With house_power each rating is the coincident peak of its houses
    divided by headroom; otherwise every rating is a 1 W placeholder to be resized later.
    """
    if n_transformers < 1:
        raise ValueError("n_transformers must be at least 1")
    rng = np.random.default_rng(seed)
    n = len(house_ids)
    if distribution is HouseAssignment.UNIFORM:
        slots = np.empty(n, dtype=int)
        slots[rng.permutation(n)] = np.arange(n) % n_transformers
    else:
        slots = rng.integers(0, n_transformers, size=n)

    specs = []
    for k in range(n_transformers):
        members = [house_ids[i] for i in np.flatnonzero(slots == k)]
        rating = 1.0
        if house_power is not None and members:
            rating = sum(house_power[h] for h in members) / headroom
        specs.append(TransformerSpec(transformer_id=f"xfmr-{k:03d}", rating=max(rating, 1.0),
                                     assigned_houses=members))
    return specs


def size_ratings(specs: Sequence[TransformerSpec], house_ids: Sequence[str], power: np.ndarray,
                 headroom: float = 0.9, floor: float = 1.0) -> list[TransformerSpec]:
    """Rate transformers from an uncontrolled (frames x houses) power window.

    The coincident peak of the whole fleet is split over transformers in proportion to each
    one's mean load in the window, then divided by headroom. A transformer whose houses drew
    nothing in the window takes a share proportional to its house count instead.
    """
    index = {hid: i for i, hid in enumerate(house_ids)}
    power = np.atleast_2d(np.asarray(power, dtype=float))
    fleet = power.sum(axis=1)
    coincident = float(fleet.max())
    fleet_mean = float(fleet.mean())
    sized = []
    for spec in specs:
        columns = [index[h] for h in spec.assigned_houses]
        mean_load = float(power[:, columns].sum(axis=1).mean()) if columns else 0.0
        if fleet_mean > 0 and mean_load > 0:
            share = mean_load / fleet_mean
        else:
            share = len(columns) / power.shape[1]
        sized.append(spec.model_copy(update={"rating": max(coincident * share / headroom, floor)}))
    return sized


class TransformerLedger:
    """Folds telemetry frames into per-transformer loading and overload timers."""

    def __init__(self, specs: Sequence[TransformerSpec]):
        self.specs = list(specs)
        self.ratings = np.array([s.rating for s in self.specs], dtype=float)
        self.slot_of = {}
        for k, spec in enumerate(self.specs):
            for hid in spec.assigned_houses:
                if hid in self.slot_of:
                    raise AccountingError(f"house {hid} assigned to more than one transformer")
                self.slot_of[hid] = k
        n = len(self.specs)
        self.timers = np.zeros(n)
        self.max_consecutive = np.zeros(n)
        self.peak = np.zeros(n)
        self.overload_samples = np.zeros(n, dtype=int)
        self.inrush_stress = np.zeros(n, dtype=int)
        self.inrush_events = np.zeros(n, dtype=int)
        self.inrush_peak = np.zeros(n)
        self.duration = 0.0
        self._ids: tuple[str, ...] | None = None
        self._slots: np.ndarray | None = None

    def _slots_for(self, house_ids: tuple[str, ...]) -> np.ndarray:
        if house_ids is not self._ids:
            unknown = [h for h in house_ids if h not in self.slot_of]
            if unknown:
                raise AccountingError(f"{len(unknown)} unassigned house id(s), first {unknown[0]!r}")
            if len(house_ids) != len(self.slot_of):
                raise AccountingError(f"frame covers {len(house_ids)} houses, ledger has {len(self.slot_of)}")
            self._ids = house_ids
            self._slots = np.array([self.slot_of[h] for h in house_ids], dtype=int)
        return self._slots

    def loads(self, frame: TelemetryFrame) -> np.ndarray:
        """Watts per transformer; corrupt entries count as zero."""
        slots = self._slots_for(frame.house_ids)
        power = np.where(frame.corrupt, 0.0, frame.power)
        return np.bincount(slots, weights=power, minlength=len(self.specs))

    def update(self, frame: TelemetryFrame, dt: float) -> np.ndarray:
        loading = self.loads(frame) / self.ratings
        over = loading > 1.0
        self.timers = np.where(over, self.timers + dt, 0.0)
        self.max_consecutive = np.maximum(self.max_consecutive, self.timers)
        self.peak = np.maximum(self.peak, loading)
        self.overload_samples += over
        slots = self._slots_for(frame.house_ids)
        starts = np.bincount(slots, weights=frame.starts.astype(float), minlength=len(self.specs))
        self.inrush_stress += starts >= 2
        self.inrush_events += starts.astype(int)
        # instantaneous load with every starting compressor at its inrush peak
        surge = np.where(frame.corrupt, 0.0, np.maximum(frame.power, frame.inrush_peak))
        instantaneous = np.bincount(slots, weights=surge, minlength=len(self.specs)) / self.ratings
        self.inrush_peak = np.maximum(self.inrush_peak, np.where(starts > 0, instantaneous, 0.0))
        self.duration += dt
        return loading

    def report(self) -> OverloadReport:
        return OverloadReport(duration=self.duration, transformers=[
            TransformerOverload(
                transformer_id=spec.transformer_id,
                max_consecutive_overload_s=float(self.max_consecutive[k]),
                peak_loading_pu=float(self.peak[k]),
                overload_sample_count=int(self.overload_samples[k]),
                simultaneous_inrush_count=int(self.inrush_stress[k]),
                inrush_event_count=int(self.inrush_events[k]),
                peak_inrush_pu=float(self.inrush_peak[k]),
            )
            for k, spec in enumerate(self.specs)
        ])
