"""Line codec for the plant protocol plus conversions to and from telemetry frames.

decode() raises ProtocolError for a line that cannot be read as a message at all. Device
entries of a measurement that fail validation or carry impossible values are kept and
flagged corrupt so the rest of the frame stays usable.
"""
import json
import math
from typing import Any, Sequence

import numpy as np
from pydantic import TypeAdapter, ValidationError

from ..core.exceptions import ProtocolError
from ..models.enums import CompressorState, RequestKind, SwitchTarget
from ..schemas.channel import DeviceCommand
from ..schemas.fleet import TelemetryFrame
from ..schemas.wire import (
    DeviceReading,
    DeviceTarget,
    FrameFlags,
    WireCommand,
    WireError,
    WireMeasurement,
    WireMessage,
)
from ..sim.house import ACCEPTED, CODE_BY_STATE, NO_COMMAND, REJECTED, STATE_BY_CODE

_message = TypeAdapter(WireMessage)

_REQUEST_CODES = {RequestKind.ON: 1, RequestKind.OFF: -1}


def encode(msg: WireCommand | WireMeasurement | WireError) -> bytes:
    return msg.model_dump_json().encode("utf-8") + b"\n"


def _is_plausible(reading: DeviceReading) -> bool:
    return (reading.state is not None and math.isfinite(reading.temp_c)
            and math.isfinite(reading.power_w) and reading.power_w >= 0
            and math.isfinite(reading.lockout_s) and reading.lockout_s >= 0)


def _corrupt_entry(raw: Any, position: int) -> DeviceReading:
    hid = raw.get("id") if isinstance(raw, dict) else None
    return DeviceReading(id=hid if isinstance(hid, str) else f"#{position}", temp_c=math.nan,
                         power_w=math.nan, state=None, corrupt=True)


def _decode_measurement(payload: dict) -> WireMeasurement:
    raw_devices = payload.pop("devices", [])
    if not isinstance(raw_devices, list):
        raise ProtocolError("devices must be a list", seq=payload.get("seq"))
    try:
        envelope = WireMeasurement.model_validate(payload)
    except ValidationError as exc:
        raise ProtocolError(f"invalid measurement: {exc.errors()[0]['msg']}", seq=payload.get("seq")) from exc

    devices = []
    corrupt_ids = list(envelope.flags.corrupt_ids)
    for position, raw in enumerate(raw_devices):
        try:
            reading = DeviceReading.model_validate(raw)
        except ValidationError:
            reading = _corrupt_entry(raw, position)
        if not reading.corrupt and not _is_plausible(reading):
            reading = reading.model_copy(update={"corrupt": True})
        if reading.corrupt and reading.id not in corrupt_ids:
            corrupt_ids.append(reading.id)
        devices.append(reading)
    flags = envelope.flags.model_copy(update={"corrupt_ids": corrupt_ids})
    return envelope.model_copy(update={"devices": devices, "flags": flags})


def decode(line: bytes | str) -> WireCommand | WireMeasurement | WireError:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"invalid encoding: {exc.reason}") from exc
    if not line.endswith("\n"):
        raise ProtocolError("truncated line")
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ProtocolError("message must be a JSON object")
    if payload.get("type") == "meas":
        return _decode_measurement(payload)
    try:
        return _message.validate_python(payload)
    except ValidationError as exc:
        seq = payload.get("seq") if isinstance(payload.get("seq"), int) else None
        raise ProtocolError(f"invalid message: {exc.errors()[0]['msg']}", seq=seq) from exc


def frame_to_measurement(frame: TelemetryFrame) -> WireMeasurement:
    devices = []
    for i, hid in enumerate(frame.house_ids):
        accepted = int(frame.accepted[i])
        request = int(frame.requests[i])
        devices.append(DeviceReading(
            id=hid,
            temp_c=float(frame.temperature[i]),
            power_w=float(frame.power[i]),
            state=STATE_BY_CODE[int(frame.state[i])],
            lockout_s=float(frame.lock_remaining[i]),
            pos=float(frame.position[i]),
            rated_w=float(frame.rated_power[i]),
            accepted=None if accepted == NO_COMMAND else accepted == ACCEPTED,
            request=RequestKind.ON if request > 0 else RequestKind.OFF if request < 0 else None,
            inrush_w=float(frame.inrush_peak[i]),
        ))
    return WireMeasurement(seq=frame.seq, t=frame.t, devices=devices,
                           flags=FrameFlags(missed_command=frame.missed_command))


def measurement_to_frame(msg: WireMeasurement, house_ids: tuple[str, ...] | None = None) -> TelemetryFrame:
    """Rebuild a telemetry frame; pass the previous frame's ids to keep the same tuple object
    when the device list has not changed."""
    ids = tuple(d.id for d in msg.devices)
    if house_ids is not None and ids == house_ids:
        ids = house_ids
    devices = msg.devices

    def column(get, dtype=float) -> np.ndarray:
        return np.array([get(d) for d in devices], dtype=dtype)

    return TelemetryFrame(
        t=msg.t,
        seq=msg.seq,
        house_ids=ids,
        power=column(lambda d: d.power_w),
        temperature=column(lambda d: d.temp_c),
        position=column(lambda d: d.pos),
        state=column(lambda d: CODE_BY_STATE[d.state] if d.state is not None else CODE_BY_STATE[CompressorState.OFF],
                     np.int8),
        lock_remaining=column(lambda d: d.lockout_s),
        accepted=column(lambda d: NO_COMMAND if d.accepted is None else ACCEPTED if d.accepted else REJECTED,
                        np.int8),
        requests=column(lambda d: _REQUEST_CODES.get(d.request, 0), np.int8),
        rated_power=column(lambda d: d.rated_w),
        inrush_peak=column(lambda d: d.inrush_w),
        corrupt=column(lambda d: d.corrupt, bool),
        missed_command=msg.flags.missed_command,
    )


def command_message(seq: int, t: float, commands: Sequence[DeviceCommand]) -> WireCommand:
    """One wire command per step; when a device appears twice the newest command wins."""
    latest: dict[str, SwitchTarget] = {}
    for cmd in commands:
        if cmd.target is not SwitchTarget.NO_CHANGE:
            latest[cmd.house_id] = cmd.target
    return WireCommand(seq=seq, t=t, devices=[DeviceTarget(id=hid, target=target) for hid, target in latest.items()])


def command_pairs(msg: WireCommand) -> list[tuple[str, SwitchTarget]]:
    return [(d.id, d.target) for d in msg.devices]
