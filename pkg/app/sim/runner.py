"""Experiment orchestration: warm-up, settle (uncontrolled baseline) and tracking phases over
a local or remote plant, followed by metrics and output files."""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError
from sqlmodel import Session

from ..core.exceptions import ConfigError, ExperimentError, InsufficientDataError, TclsimError
from ..models.enums import ControllerKind, PartitionTag, PlantMode, SignalType
from ..models.models import ExperimentRun
from ..plantlink.plant import LocalPlant, Plant, RemotePlant
from ..schemas.channel import DeviceCommand
from ..schemas.experiment import ExperimentConfig, ExperimentResult, MatrixRow
from ..schemas.fleet import FleetSpec, TelemetryFrame
from ..schemas.metrics import MetricsBlock
from ..schemas.signal import SignalSpec
from .channel import Channel, StaleFilter
from .controller import build_controller
from .fleet import Fleet, generate_fleet, is_remote_id
from .grid import TransformerLedger, assign_houses, size_ratings
from .house import LOCKED_ON, ON
from .metrics import TrackingRecord, fairness_variance, nrmse, partition_activity, pjm_score
from .presets import case_config
from .signal import ReferenceSignal, baseline_power, load_trace, square_wave, synthetic_signal

logger = logging.getLogger(__name__)

TELEMETRY_COLUMNS = ["t", "house_id", "state", "power_w", "temp_c"]
TABLE_COLUMNS = [
    "case", "signal", "amplitude_pct", "voltage", "comm", "outdoor",
    "nrmse_pi", "nrmse_markov", "nrmse_pem",
    "score_pi", "score_markov", "score_pem",
    "overload_pi", "overload_markov", "overload_pem",
]


def load_config(path: Path | str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            document = yaml.safe_load(fh) or {}
        return ExperimentConfig.model_validate(document)
    except (OSError, yaml.YAMLError, ValidationError) as exc:
        raise ConfigError(f"cannot load experiment config {path}: {exc}") from exc


def fleet_spec(cfg: ExperimentConfig) -> FleetSpec:
    """The fleet spec with the run's heat gain and derived seed applied."""
    nominal = cfg.fleet.nominal
    nominal = nominal.model_copy(update={"heat": nominal.heat.model_copy(update={"Q_w_dot": cfg.heat_gain_w})})
    return cfg.fleet.model_copy(update={"nominal": nominal, "rng_seed": cfg.seed_record().fleet})


def build_fleet(cfg: ExperimentConfig) -> Fleet:
    houses = generate_fleet(fleet_spec(cfg))
    packetized = cfg.controller.kind is ControllerKind.PEM
    pem = cfg.controller.pem
    return Fleet(houses, cfg.T_amb, cfg.dt_control, cfg.dt_physics, seed=cfg.seed_record().fleet,
                 packet_epoch=pem.epoch_length if packetized else 0.0,
                 mean_time_to_request=pem.mean_time_to_request if packetized else None,
                 allow_off_requests=pem.allow_turn_off_requests)


def build_plant(cfg: ExperimentConfig) -> Plant:
    if cfg.plant is PlantMode.TCP:
        return RemotePlant(cfg.plant_host, cfg.plant_port)
    return LocalPlant(build_fleet(cfg))


def build_signal(spec: SignalSpec, baseline: float, duration: float, seed: int) -> ReferenceSignal:
    if spec.type is SignalType.SQUARE:
        return square_wave(baseline, spec.amplitude_fraction, spec.period, duration, spec.sample_period)
    if spec.trace_path is not None:
        return load_trace(spec.trace_path, baseline, spec.amplitude_fraction, spec.sample_period, duration)
    return synthetic_signal(baseline, spec.amplitude_fraction, duration, seed, spec.sample_period)


def estimate_cycle_period(states: np.ndarray, period: float) -> float:
    """Mean thermostat cycle length from compressor starts in a (frames x houses) state window."""
    on = (states == ON) | (states == LOCKED_ON)
    starts = int((on[1:] & ~on[:-1]).sum())
    if starts == 0:
        raise InsufficientDataError("no compressor starts in the settle window")
    return states.shape[1] * (len(states) - 1) * period / starts


class TelemetryWriter:
    """Appends frames to a t,house_id,state,power_w,temp_c CSV in chunks."""

    def __init__(self, path: Path, chunk_frames: int = 100):
        self.path = path
        self.chunk_frames = chunk_frames
        self._frames: list[TelemetryFrame] = []
        self._header = True
        path.parent.mkdir(parents=True, exist_ok=True)

    def add(self, frame: TelemetryFrame) -> None:
        self._frames.append(frame)
        if len(self._frames) >= self.chunk_frames:
            self.flush()

    def flush(self) -> None:
        if not self._frames:
            return
        n = self._frames[0].n_houses
        codes = np.concatenate([f.state for f in self._frames])
        labels = np.array(["off", "on", "locked_off", "locked_on"])
        chunk = pd.DataFrame({
            "t": np.repeat([f.t for f in self._frames], n),
            "house_id": np.concatenate([np.asarray(f.house_ids) for f in self._frames]),
            "state": labels[codes],
            "power_w": np.concatenate([f.power for f in self._frames]),
            "temp_c": np.concatenate([f.temperature for f in self._frames]),
        }, columns=TELEMETRY_COLUMNS)
        chunk.to_csv(self.path, mode="w" if self._header else "a", header=self._header,
                     index=False, lineterminator="\n")
        self._header = False
        self._frames.clear()


@dataclass
class PhaseLog:
    times: list[float] = field(default_factory=list)
    aggregate: list[float] = field(default_factory=list)
    power: list[np.ndarray] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)

    def add(self, frame: TelemetryFrame) -> None:
        self.times.append(frame.t)
        self.aggregate.append(frame.aggregate_power)
        self.power.append(frame.power)
        self.states.append(frame.state)

    @property
    def power_matrix(self) -> np.ndarray:
        return np.vstack(self.power)

    @property
    def state_matrix(self) -> np.ndarray:
        return np.vstack(self.states)


@dataclass
class RunTrace:
    """In-memory record of a run, kept for callers that inspect more than the metrics."""

    settle: PhaseLog
    tracking: PhaseLog
    reference: np.ndarray
    commands_per_step: list[int]
    baseline_commands: int = 0


class ExperimentRunner:
    def __init__(self, cfg: ExperimentConfig, plant: Plant | None = None):
        self.cfg = cfg
        self.seeds = cfg.seed_record()
        self.plant = plant or build_plant(cfg)
        self.trace: RunTrace | None = None
        self._frame: TelemetryFrame | None = None
        self._writer: TelemetryWriter | None = None
        self._missed = 0
        self._applied = 0

    @property
    def run_dir(self) -> Path | None:
        if self.cfg.output_dir is None:
            return None
        kind = self.cfg.controller.kind.value
        return self.cfg.output_dir / f"{self.cfg.name}-{kind}-{self.cfg.config_hash()[:10]}"

    def _exchange(self, commands: Sequence[DeviceCommand]) -> TelemetryFrame:
        t = self._frame.t if self._frame is not None else 0.0
        try:
            frame = self.plant.exchange(commands)
        except ExperimentError:
            raise
        except TclsimError as exc:
            raise ExperimentError(str(exc), sim_time=t, house_id=getattr(exc, "house_id", None)) from exc
        if self._writer is not None:
            self._writer.add(frame)
        self._missed += frame.missed_command
        self._applied += len(commands)
        self._frame = frame
        return frame

    def _steps(self, duration: float) -> int:
        return int(round(duration / self.cfg.dt_control))

    def run(self) -> ExperimentResult:
        cfg = self.cfg
        started = time.perf_counter()
        run_dir = self.run_dir
        if run_dir is not None and cfg.write_telemetry:
            self._writer = TelemetryWriter(run_dir / "telemetry.csv")

        self._frame = self.plant.start()
        ids = self._frame.house_ids
        n = len(ids)
        remote = np.array([is_remote_id(hid) for hid in ids])
        tags = {PartitionTag.REMOTE_PLANT: int(remote.sum()), PartitionTag.LOCAL_VIRTUAL: int((~remote).sum())}
        logger.info("%s: %d houses (%s), controller %s", cfg.name, n,
                    ", ".join(f"{k.value}={v}" for k, v in tags.items()), cfg.controller.kind.value)
        controller = build_controller(cfg.controller, n, cfg.dt_control, self.seeds.controller)

        logger.info("warm-up for %.0f s", cfg.phases.warmup)
        for _ in range(self._steps(cfg.phases.warmup)):
            self._exchange([])

        logger.info("settle for %.0f s", cfg.phases.settle)
        settle = PhaseLog()
        settle.add(self._frame)
        controller.observe(self._frame)
        for _ in range(self._steps(cfg.phases.settle)):
            frame = self._exchange([])
            settle.add(frame)
            controller.observe(frame)

        baseline_commands = self._applied
        states = settle.state_matrix
        cycle = estimate_cycle_period(states, cfg.dt_control)
        baseline = baseline_power(np.asarray(settle.times), np.asarray(settle.aggregate), cycle)
        logger.info("baseline %.1f kW, natural cycle %.0f s", baseline / 1e3, cycle)

        specs = assign_houses(ids, min(cfg.grid.n_transformers, n), cfg.grid.distribution, self.seeds.grid)
        specs = size_ratings(specs, ids, settle.power_matrix, cfg.grid.headroom)
        ledger = TransformerLedger(specs)

        duration = cfg.phases.tracking
        signal = build_signal(cfg.signal, baseline, duration + cfg.dt_control, self.seeds.signal)
        channel: Channel[DeviceCommand] = Channel(cfg.channel, stream=0)
        meas_channel: Channel[TelemetryFrame] | None = (
            Channel(cfg.channel, stream=1) if cfg.channel.impair_measurements else None)
        stale = StaleFilter()

        logger.info("tracking for %.0f s", duration)
        tracking = PhaseLog()
        reference = []
        commands_per_step = []
        t0 = self._frame.t
        view = self._frame
        for step in range(self._steps(duration)):
            frame = self._frame
            if meas_channel is not None:
                meas_channel.send(frame, frame.t)
                arrived = meas_channel.pop_due(frame.t)
                if arrived:
                    view = max([view, *arrived], key=lambda f: f.t)
            else:
                view = frame
            target = signal.value_at(frame.t - t0 + cfg.dt_control)
            batch = controller.step(view.aggregate_power, target, view, frame.t)
            commands_per_step.append(len(batch))
            channel.send_many((DeviceCommand(seq=step, house_id=hid, target=tgt) for hid, tgt in batch.commands),
                              frame.t)
            frame = self._exchange(stale(channel.pop_due(frame.t)))
            reference.append(target)
            tracking.add(frame)
            ledger.update(frame, cfg.dt_control)

        if self._writer is not None:
            self._writer.flush()
        self.plant.close()

        self.trace = RunTrace(settle=settle, tracking=tracking, reference=np.asarray(reference),
                              commands_per_step=commands_per_step, baseline_commands=baseline_commands)
        metrics = self._metrics(baseline, ledger, remote, channel)
        result = ExperimentResult(
            name=cfg.name,
            controller=cfg.controller.kind.value,
            config_hash=cfg.config_hash(),
            seeds=self.seeds,
            metrics=metrics,
            telemetry_path=self._writer.path if self._writer is not None else None,
            wall_time_s=time.perf_counter() - started,
        )
        if run_dir is not None:
            run_dir.mkdir(parents=True, exist_ok=True)
            result.metrics_path = run_dir / "metrics.json"
            result.metrics_path.write_text(result.model_dump_json(indent=2), encoding="utf-8")
        logger.info("%s/%s done: NRMSE %.2f%%, score %.3f, max overload %.0f s", cfg.name, result.controller,
                    100 * metrics.nrmse, metrics.pjm_composite, metrics.overload.max_consecutive_overload_s)
        return result

    def _metrics(self, baseline: float, ledger: TransformerLedger, remote: np.ndarray,
                 channel: Channel) -> MetricsBlock:
        tracking = self.trace.tracking
        record = TrackingRecord(self.trace.reference, np.asarray(tracking.aggregate), self.cfg.dt_control)
        score = pjm_score(record)
        power = tracking.power_matrix
        fairness = None
        if remote.any() and power.shape[1] >= 40:
            fairness = fairness_variance(power, self.trace.reference, remote, seed=self.seeds.grid)
        return MetricsBlock(
            nrmse=nrmse(record),
            pjm=score,
            pjm_composite=score.composite,
            overload=ledger.report(),
            fairness=fairness,
            baseline_power=baseline,
            activity=partition_activity(tracking.state_matrix, remote, self.cfg.dt_control),
            commands_sent=channel.sent,
            commands_dropped=channel.dropped,
            missed_steps=self._missed,
        )


def run_experiment(cfg: ExperimentConfig, plant: Plant | None = None,
                   session: Session | None = None) -> ExperimentResult:
    result = ExperimentRunner(cfg, plant).run()
    if session is not None:
        record_run(session, cfg, result)
    return result


def record_run(session: Session, cfg: ExperimentConfig, result: ExperimentResult) -> ExperimentRun:
    metrics = result.metrics
    row = ExperimentRun(
        name=result.name,
        controller=result.controller,
        config_hash=result.config_hash,
        seed=cfg.seed,
        case=None,
        nrmse=metrics.nrmse,
        pjm_score=metrics.pjm_composite,
        max_overload_s=metrics.overload.max_consecutive_overload_s,
        baseline_power_w=metrics.baseline_power,
        metrics_path=str(result.metrics_path) if result.metrics_path else None,
        telemetry_path=str(result.telemetry_path) if result.telemetry_path else None,
        config_json=cfg.model_dump_json(),
        metrics_json=metrics.model_dump_json(),
        wall_time_s=result.wall_time_s,
        finished_at=result.finished_at,
    )
    session.add(row)
    session.commit()
    session.refresh(row)
    return row


def load_matrix(path: Path | str) -> list[MatrixRow]:
    try:
        with open(path, encoding="utf-8") as fh:
            document = yaml.safe_load(fh)
        if document is None:
            return []
        if isinstance(document, dict):
            document = document.get("cases", [])
        return [MatrixRow.model_validate(row) for row in document]
    except (OSError, yaml.YAMLError, ValidationError) as exc:
        raise ConfigError(f"cannot load experiment matrix {path}: {exc}") from exc


@dataclass
class MatrixOutcome:
    case: int
    controller: str
    result: ExperimentResult | None = None
    error: str | None = None


@dataclass
class MatrixResult:
    table: pd.DataFrame
    runs: list[MatrixOutcome]

    @property
    def errors(self) -> list[MatrixOutcome]:
        return [run for run in self.runs if run.error is not None]


def _run_job(case: int, controller: str, config_json: str) -> MatrixOutcome:
    try:
        cfg = ExperimentConfig.model_validate_json(config_json)
        return MatrixOutcome(case, controller, result=run_experiment(cfg))
    except TclsimError as exc:
        logger.warning("case %d / %s failed: %s", case, controller, exc)
        return MatrixOutcome(case, controller, error=str(exc))
    except Exception as exc:
        logger.exception("case %d / %s crashed", case, controller)
        return MatrixOutcome(case, controller, error=f"{type(exc).__name__}: {exc}")


def _table(rows: Sequence[MatrixRow], runs: Iterable[MatrixOutcome]) -> pd.DataFrame:
    by_cell = {(run.case, run.controller): run.result for run in runs}
    records = []
    for row in rows:
        record = {
            "case": row.case,
            "signal": row.signal.value,
            "amplitude_pct": round(100 * row.amplitude),
            "voltage": row.voltage.value,
            "comm": row.comm.value,
            "outdoor": row.outdoor.value,
        }
        for kind in ControllerKind:
            result = by_cell.get((row.case, kind.value))
            record[f"nrmse_{kind.value}"] = 100 * result.metrics.nrmse if result else np.nan
            record[f"score_{kind.value}"] = result.metrics.pjm_composite if result else np.nan
            record[f"overload_{kind.value}"] = (result.metrics.overload.max_consecutive_overload_s
                                                if result else np.nan)
        records.append(record)
    return pd.DataFrame.from_records(records, columns=TABLE_COLUMNS)


def run_matrix(rows: Sequence[MatrixRow], base: ExperimentConfig | None = None, workers: int = 1,
               output: Path | None = None, session: Session | None = None) -> MatrixResult:
    """Run every (case, controller) pair. A failing pair is recorded and the matrix goes on."""
    jobs = []
    for row in rows:
        for controller in row.controllers:
            cfg = case_config(row, ControllerKind(controller), base)
            jobs.append((row.case, controller, cfg))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_job, case, kind, cfg.model_dump_json()) for case, kind, cfg in jobs]
            runs = [future.result() for future in futures]
    else:
        runs = [_run_job(case, kind, cfg.model_dump_json()) for case, kind, cfg in jobs]

    if session is not None:
        for (case, _, cfg), run in zip(jobs, runs):
            if run.result is not None:
                stored = record_run(session, cfg, run.result)
                stored.case = case
                session.add(stored)
        session.commit()

    table = _table(rows, runs)
    if output is not None:
        output.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(output, index=False, lineterminator="\n")
    logger.info("matrix finished: %d runs, %d failed", len(runs), sum(r.error is not None for r in runs))
    return MatrixResult(table=table, runs=runs)
