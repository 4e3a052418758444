"""The ten-case comparison matrix and the mapping from a matrix row to a full config."""
from typing import Any

from pydantic import ValidationError

from ..core.exceptions import ConfigError
from ..models.enums import ChannelMode, Condition, ControllerKind, SignalType
from ..schemas.experiment import (
    EXTREME_HEAT_GAIN,
    EXTREME_T_AMB,
    NOMINAL_HEAT_GAIN,
    NOMINAL_T_AMB,
    ExperimentConfig,
    MatrixRow,
)

NOM, EXT = Condition.NOMINAL, Condition.EXTREME
REGD, SQUARE = SignalType.REGD, SignalType.SQUARE

# (signal, amplitude, voltage, comm, outdoor)
_CASES = (
    (REGD, 0.2, NOM, NOM, NOM),
    (SQUARE, 0.3, NOM, NOM, NOM),
    (REGD, 0.3, NOM, EXT, NOM),
    (REGD, 0.1, NOM, NOM, EXT),
    (REGD, 0.1, EXT, EXT, NOM),
    (REGD, 0.3, EXT, NOM, EXT),
    (SQUARE, 0.1, NOM, EXT, EXT),
    (SQUARE, 0.1, EXT, NOM, NOM),
    (REGD, 0.2, NOM, NOM, EXT),
    (SQUARE, 0.3, EXT, EXT, EXT),
)

TABLE_II_CASES = [
    MatrixRow(case=n, signal=signal, amplitude=amplitude, voltage=voltage, comm=comm, outdoor=outdoor)
    for n, (signal, amplitude, voltage, comm, outdoor) in enumerate(_CASES, start=1)
]


def deep_merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def case_config(row: MatrixRow, controller: ControllerKind, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Resolve a matrix row into the config of one (case, controller) run.

    Extreme outdoor conditions raise both the outdoor temperature and the internal water heat
    gain; extreme communication switches the channel to its impaired mode. Row overrides are
    merged last and win over everything.
    """
    document: dict[str, Any] = (base or ExperimentConfig()).model_dump()
    extreme_outdoor = row.outdoor is Condition.EXTREME
    document["name"] = f"case{row.case}"
    document["seed"] = row.seed
    document["T_amb"] = EXTREME_T_AMB if extreme_outdoor else NOMINAL_T_AMB
    document["heat_gain_w"] = EXTREME_HEAT_GAIN if extreme_outdoor else NOMINAL_HEAT_GAIN
    document["signal"]["type"] = row.signal
    document["signal"]["amplitude_fraction"] = row.amplitude
    document["channel"]["mode"] = ChannelMode.IMPAIRED if row.comm is Condition.EXTREME else ChannelMode.PERFECT
    document["controller"]["kind"] = ControllerKind(controller)
    document["conditions"] = {
        "signal_type": row.signal,
        "amplitude_fraction": row.amplitude,
        "comm": row.comm,
        "outdoor": row.outdoor,
        "voltage": row.voltage,
    }
    document = deep_merge(document, row.overrides)
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(f"case {row.case} does not resolve to a valid config: {exc}") from exc
