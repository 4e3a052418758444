"""Tracking quality and fleet-behaviour metrics computed from finished runs."""
from dataclasses import dataclass

import numpy as np

from ..core.exceptions import InsufficientDataError, UndefinedNormalizationError
from ..models.enums import PartitionTag
from ..schemas.metrics import FairnessReport, PartitionActivity, PjmScore
from .house import LOCKED_OFF, LOCKED_ON, ON

SCORE_WINDOW = 300.0


@dataclass(frozen=True, eq=False)
class TrackingRecord:
    reference: np.ndarray
    achieved: np.ndarray
    period: float = 2.0

    def __post_init__(self):
        if len(self.reference) != len(self.achieved):
            raise ValueError(f"reference has {len(self.reference)} samples, achieved {len(self.achieved)}")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @property
    def error(self) -> np.ndarray:
        return np.asarray(self.achieved, dtype=float) - np.asarray(self.reference, dtype=float)


def nrmse(record: TrackingRecord) -> float:
    mean_reference = float(np.mean(record.reference))
    if mean_reference == 0:
        raise UndefinedNormalizationError("reference mean is zero")
    return float(np.sqrt(np.mean(record.error ** 2)) / mean_reference)


def _correlation(a: np.ndarray, b: np.ndarray) -> float:
    if np.std(a) == 0 or np.std(b) == 0:
        return 1.0 if np.array_equal(a, b) else 0.0
    return float(np.corrcoef(a, b)[0, 1])


def _window_score(reference: np.ndarray, achieved: np.ndarray, max_lag: int, period: float,
                  max_delay: float) -> tuple[float, float, float, float]:
    w = len(reference)
    correlations = np.array([_correlation(reference, achieved[lag: lag + w]) for lag in range(max_lag + 1)])
    best = int(np.argmax(correlations))
    mean_reference = float(np.mean(np.abs(reference)))
    if mean_reference == 0:
        raise UndefinedNormalizationError("reference mean is zero")
    precision = 1.0 - float(np.mean(np.abs(achieved[:w] - reference))) / mean_reference
    return (float(np.clip(correlations[best], 0.0, 1.0)),
            float(np.clip(1.0 - best * period / max_delay, 0.0, 1.0)),
            float(np.clip(precision, 0.0, 1.0)),
            best * period)


def pjm_score(record: TrackingRecord, window: float = SCORE_WINDOW, max_delay: float = SCORE_WINDOW) -> PjmScore:
    """Correlation, delay and precision sub-scores, each clamped to [0, 1] and averaged over
    consecutive scoring windows.

    Within a window the response is shifted against the reference by 0..max_delay in whole
    sample periods; the lag with the highest correlation gives both the correlation and the
    delay score. Only windows whose full shift range lies inside the record are scored.
    """
    reference = np.asarray(record.reference, dtype=float)
    achieved = np.asarray(record.achieved, dtype=float)
    n = len(reference)
    w = int(round(window / record.period))
    max_lag = int(round(max_delay / record.period))
    if w < 2 or n < w + max_lag:
        raise InsufficientDataError(
            f"{n} samples do not cover a {window:.0f} s window shifted by up to {max_delay:.0f} s")

    scores = np.array([
        _window_score(reference[start: start + w], achieved[start: start + w + max_lag], max_lag,
                      record.period, max_delay)
        for start in range(0, n - w - max_lag + 1, w)
    ])
    correlation, delay, precision, delay_s = scores.mean(axis=0)
    return PjmScore(correlation=float(correlation), delay=float(delay), precision=float(precision),
                    delay_s=float(delay_s), n_windows=len(scores))


def fairness_variance(power: np.ndarray, reference: np.ndarray, remote: np.ndarray,
                      group_size: int = 20, n_groups: int = 25, seed: int = 0) -> FairnessReport:
    """Variance of each group's fleet-scaled power around the reference.

    power is (frames x houses). Virtual groups are drawn at random from untagged houses;
    the remote group is every remote-tagged house.
    """
    power = np.asarray(power, dtype=float)
    n_frames, n_houses = power.shape
    if n_houses < 2 * group_size:
        raise InsufficientDataError(f"fairness needs at least {2 * group_size} houses, got {n_houses}")
    remote = np.asarray(remote, dtype=bool)
    virtual = np.flatnonzero(~remote)
    rng = np.random.default_rng(seed)

    def variance(members: np.ndarray) -> float:
        scaled = power[:, members].sum(axis=1) * (n_houses / len(members))
        return float(np.var(scaled - reference))

    size = min(group_size, len(virtual))
    variances = [variance(rng.choice(virtual, size=size, replace=False)) for _ in range(n_groups)]
    remote_variance = variance(np.flatnonzero(remote)) if remote.any() else None
    return FairnessReport(group_size=group_size, virtual_variances=variances, remote_variance=remote_variance)


def fractional_power_variation(power: np.ndarray, period: float, trim: float = 5.0) -> np.ndarray:
    """(max - min) / max of one house's power over each on period, with trim seconds removed
    from both ends of the period to drop the start-up transient."""
    power = np.asarray(power, dtype=float)
    on = power > 0
    edges = np.diff(np.concatenate(([False], on, [False])).astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    cut = int(np.ceil(trim / period))
    variations = []
    for start, stop in zip(starts, stops):
        segment = power[start + cut: stop - cut]
        if segment.size:
            variations.append((segment.max() - segment.min()) / segment.max())
    return np.asarray(variations)


def power_temperature_correlation(T_amb: np.ndarray, power: np.ndarray) -> tuple[float, float]:
    """Pearson correlation and fitted slope as a fraction of mean power per °C."""
    T_amb = np.asarray(T_amb, dtype=float)
    power = np.asarray(power, dtype=float)
    r = _correlation(T_amb, power)
    slope, _ = np.polyfit(T_amb, power, 1)
    return r, float(slope / power.mean())


def partition_activity(states: np.ndarray, remote: np.ndarray, period: float) -> dict[str, PartitionActivity]:
    """Mean on/off/locked shares and compressor starts per device-hour, split by partition tag."""
    states = np.asarray(states)
    on = (states == ON) | (states == LOCKED_ON)
    locked = states == LOCKED_OFF
    starts = (on[1:] & ~on[:-1]).sum(axis=0) if len(states) > 1 else np.zeros(states.shape[1])
    hours = max(len(states) - 1, 1) * period / 3600.0
    activity = {}
    for tag, mask in ((PartitionTag.LOCAL_VIRTUAL, ~remote), (PartitionTag.REMOTE_PLANT, remote)):
        if not mask.any():
            continue
        activity[tag.value] = PartitionActivity(
            n_devices=int(mask.sum()),
            on_fraction=float(on[:, mask].mean()),
            off_fraction=float((~on & ~locked)[:, mask].mean()),
            locked_fraction=float(locked[:, mask].mean()),
            starts_per_hour=float(starts[mask].mean() / hours),
        )
    return activity
