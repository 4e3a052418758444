"""Reference power signals scaled around the fleet's uncontrolled baseline."""
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ..core.exceptions import InsufficientDataError, TraceIngestionError

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["time_s", "value"]

# pandas tokenizer errors read "Expected 2 fields in line 7, saw 3"
_PANDAS_LINE = re.compile(r"line (\d+)")


@dataclass(frozen=True, eq=False)
class ReferenceSignal:
    samples: np.ndarray
    sample_period: float
    baseline_power: float
    amplitude_fraction: float

    @property
    def duration(self) -> float:
        return len(self.samples) * self.sample_period

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.sample_period

    def value_at(self, t: float) -> float:
        """Sample-and-hold lookup, clamped to the first and last sample."""
        index = int(np.floor(t / self.sample_period + 1e-9))
        return float(self.samples[min(max(index, 0), len(self.samples) - 1)])


def square_wave(baseline: float, amplitude_fraction: float, period: float = 600.0,
                duration: float = 2400.0, sample_period: float = 2.0) -> ReferenceSignal:
    if period <= 0:
        raise ValueError("period must be positive")
    t = np.arange(int(round(duration / sample_period))) * sample_period
    high = np.mod(t, period) < 0.5 * period
    samples = baseline * (1.0 + np.where(high, amplitude_fraction, -amplitude_fraction))
    return ReferenceSignal(samples, sample_period, baseline, amplitude_fraction)


def scale_normalized(values: np.ndarray, baseline: float, amplitude_fraction: float) -> np.ndarray:
    return baseline * (1.0 + amplitude_fraction * values)


def read_trace(path: Path | str) -> tuple[np.ndarray, np.ndarray]:
    """Parse a time_s,value CSV; every problem is reported with its 1-based file line."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.ParserError as exc:
        match = _PANDAS_LINE.search(str(exc))
        raise TraceIngestionError(f"malformed row ({exc})", int(match.group(1)) if match else 0) from exc
    except pd.errors.EmptyDataError as exc:
        raise TraceIngestionError("empty trace file", 1) from exc

    if list(frame.columns) != TRACE_COLUMNS:
        raise TraceIngestionError(f"expected header {','.join(TRACE_COLUMNS)}, got {','.join(frame.columns)}", 1)
    if frame.empty:
        raise TraceIngestionError("trace has no samples", 2)

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1) | ~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise TraceIngestionError(f"malformed row {frame.iloc[row].tolist()}", row + 2)

    times = numeric["time_s"].to_numpy(dtype=float)
    values = numeric["value"].to_numpy(dtype=float)
    backwards = np.flatnonzero(np.diff(times) <= 0)
    if backwards.size:
        row = int(backwards[0]) + 1
        raise TraceIngestionError(f"timestamp {times[row]} does not increase", row + 2)
    outside = np.flatnonzero(np.abs(values) > 1.0)
    if outside.size:
        row = int(outside[0])
        raise TraceIngestionError(f"value {values[row]} outside [-1, 1]", row + 2)
    return times, values


def load_trace(path: Path | str, baseline: float, amplitude_fraction: float,
               sample_period: float = 2.0, duration: float | None = None) -> ReferenceSignal:
    """Load a normalized trace and resample it onto the control period by linear interpolation,
    starting at the first timestamp."""
    times, values = read_trace(path)
    span = times[-1] - times[0]
    if duration is None:
        duration = span + sample_period
    grid = times[0] + np.arange(int(round(duration / sample_period))) * sample_period
    resampled = np.interp(grid, times, values)
    logger.info("loaded trace %s: %d samples over %.0f s", path, len(times), span)
    return ReferenceSignal(scale_normalized(resampled, baseline, amplitude_fraction),
                           sample_period, baseline, amplitude_fraction)


def synthetic_regd(duration: float, seed: int = 0, sample_period: float = 2.0,
                   n_components: int = 12, min_period: float = 60.0,
                   max_period: float = 300.0) -> np.ndarray:
    """Band-limited zero-mean stand-in for a fast regulation signal, normalized to [-1, 1].

    An equally weighted sum of sinusoids with log-uniform periods in [min_period, max_period]
    and random phases; the mean over the window is removed exactly so the signal carries no
    net energy.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(int(round(duration / sample_period))) * sample_period
    periods = np.exp(rng.uniform(np.log(min_period), np.log(max_period), n_components))
    phases = rng.uniform(0.0, 2.0 * np.pi, n_components)
    values = np.sin(2.0 * np.pi * t[None, :] / periods[:, None] + phases[:, None]).sum(axis=0)
    values -= values.mean()
    peak = np.abs(values).max()
    return values / peak if peak > 0 else values


def synthetic_signal(baseline: float, amplitude_fraction: float, duration: float = 2400.0,
                     seed: int = 0, sample_period: float = 2.0) -> ReferenceSignal:
    values = synthetic_regd(duration, seed, sample_period)
    return ReferenceSignal(scale_normalized(values, baseline, amplitude_fraction),
                           sample_period, baseline, amplitude_fraction)


def write_trace(path: Path | str, values: np.ndarray, sample_period: float = 2.0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"time_s": np.arange(len(values)) * sample_period, "value": values})
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def baseline_power(times: np.ndarray, powers: np.ndarray, natural_period: float) -> float:
    """Time-average of uncontrolled aggregate power over a window of at least three cycles."""
    times = np.asarray(times, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if len(times) < 2:
        raise InsufficientDataError("baseline window needs at least two samples")
    span = times[-1] - times[0] + (times[1] - times[0])
    if span < 3.0 * natural_period:
        raise InsufficientDataError(
            f"baseline window of {span:.0f} s is shorter than three natural cycles ({3 * natural_period:.0f} s)")
    return float(powers.mean())
