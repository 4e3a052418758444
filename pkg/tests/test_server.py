import asyncio
import json
import threading
import time
from contextlib import contextmanager

import pytest

from app.models.enums import SwitchTarget
from app.plantlink.codec import decode, encode
from app.plantlink.plant import LocalPlant, RemotePlant
from app.plantlink.server import PlantServer
from app.plantlink.session import PlantSession
from app.schemas.channel import DeviceCommand
from app.schemas.wire import DeviceTarget, WireCommand, WireError, WireMeasurement
from app.sim.house import ACCEPTED, LOCKED_OFF, OFF


def test_session_free_runs_when_no_command_arrives(small_fleet):
    session = PlantSession(small_fleet)

    frame, unknown = session.step(None)

    assert frame.missed_command
    assert unknown == []
    assert session.missed_steps == 1
    assert session.status()["missed_steps"] == 1


def test_session_records_applied_commands(small_fleet):
    session = PlantSession(small_fleet, record_commands=True)
    target = small_fleet.house_ids[0]

    frame, unknown = session.step([(target, SwitchTarget.OFF), ("x-9999", SwitchTarget.ON)])

    assert unknown == ["x-9999"]
    assert session.unknown_ids == 1
    assert len(session.applied) == 1
    applied = session.applied[0]
    assert (applied.house_id, applied.target, applied.accepted) == (target, SwitchTarget.OFF, True)
    assert applied.t == 0.0
    assert frame.state[0] in (OFF, LOCKED_OFF)


def test_session_status_matches_the_latest_frame(small_fleet):
    session = PlantSession(small_fleet)
    frame, _ = session.step([])

    status = session.status()

    assert status["seq"] == frame.seq == 1
    assert status["sim_time"] == frame.t
    assert status["n_houses"] == len(small_fleet)
    assert status["n_on"] + status["n_off"] + status["n_locked"] == len(small_fleet)
    assert status["aggregate_power_w"] == pytest.approx(frame.aggregate_power)


def test_local_plant_applies_commands(small_fleet):
    plant = LocalPlant(small_fleet)
    first = plant.start()
    hid = first.house_ids[0]

    frame = plant.exchange([DeviceCommand(seq=1, house_id=hid, target=SwitchTarget.OFF)])

    assert frame.seq == first.seq + 1
    assert frame.accepted[0] == ACCEPTED


async def _read(reader: asyncio.StreamReader):
    return decode(await asyncio.wait_for(reader.readline(), 5.0))


def _command(seq: int, *pairs) -> bytes:
    return encode(WireCommand(seq=seq, t=0.0, devices=[DeviceTarget(id=h, target=t) for h, t in pairs]))


def test_loopback_protocol(small_fleet):
    session = PlantSession(small_fleet)
    hid = small_fleet.house_ids[0]

    async def scenario():
        server = PlantServer(session, port=0, step_timeout=1.0)
        await server.start()
        reader, writer = await asyncio.open_connection("127.0.0.1", server.bound_port)
        try:
            first = await _read(reader)
            assert isinstance(first, WireMeasurement)
            assert first.seq == 0
            assert len(first.devices) == len(small_fleet)

            writer.write(_command(1, (hid, SwitchTarget.OFF)))
            stepped = await _read(reader)
            assert stepped.seq == 1
            assert stepped.devices[0].accepted is True
            assert not stepped.flags.missed_command

            # no command this step: the plant times out and free-runs
            missed = await _read(reader)
            assert missed.seq == 2
            assert missed.flags.missed_command

            writer.write(b"not json\n")
            assert isinstance(await _read(reader), WireError)
            writer.write(_command(1))
            stale = await _read(reader)
            assert isinstance(stale, WireError)
            assert "seq" in stale.error
            writer.write(encode(WireMeasurement(seq=9, t=0.0)))
            assert isinstance(await _read(reader), WireError)

            writer.write(_command(7))
            resumed = await _read(reader)
            assert isinstance(resumed, WireMeasurement)
            assert resumed.seq == 3
        finally:
            writer.close()
            await server.close()

    asyncio.run(scenario())
    assert session.missed_steps == 1


def test_second_aggregator_is_turned_away(small_fleet):
    session = PlantSession(small_fleet)

    async def scenario():
        server = PlantServer(session, port=0, step_timeout=5.0)
        await server.start()
        reader, writer = await asyncio.open_connection("127.0.0.1", server.bound_port)
        try:
            await _read(reader)
            other_reader, other_writer = await asyncio.open_connection("127.0.0.1", server.bound_port)
            refusal = json.loads(await asyncio.wait_for(other_reader.readline(), 5.0))
            assert refusal["type"] == "err"
            assert await asyncio.wait_for(other_reader.readline(), 5.0) == b""
            other_writer.close()
        finally:
            writer.close()
            await server.close()

    asyncio.run(scenario())


@contextmanager
def _serving(fleet, step_timeout: float = 2.0):
    server = PlantServer(PlantSession(fleet), port=0, step_timeout=step_timeout)
    loop = asyncio.new_event_loop()
    loop.run_until_complete(server.start())
    thread = threading.Thread(target=loop.run_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        loop.call_soon_threadsafe(loop.stop)
        thread.join(timeout=5.0)
        loop.run_until_complete(server.close())
        loop.close()


@pytest.fixture
def served_plant(small_fleet):
    with _serving(small_fleet) as server:
        yield server


def test_remote_plant_drives_a_served_fleet(served_plant, small_fleet):
    plant = RemotePlant("127.0.0.1", served_plant.bound_port, timeout=5.0)
    try:
        first = plant.start()
        hid = first.house_ids[0]

        frame = plant.exchange([DeviceCommand(seq=1, house_id=hid, target=SwitchTarget.OFF)])

        assert first.house_ids == small_fleet.house_ids
        assert frame.seq == first.seq + 1
        assert frame.accepted[0] == ACCEPTED
        assert frame.state[0] in (OFF, LOCKED_OFF)
        assert plant.client.frames_received == 2
    finally:
        plant.close()


@pytest.mark.slow
def test_full_fleet_keeps_up_with_the_control_period(make_fleet):
    fleet = make_fleet(n_houses=543, n_remote=20, seed=3)
    with _serving(fleet, step_timeout=fleet.dt_control) as server:
        plant = RemotePlant("127.0.0.1", server.bound_port, timeout=10.0)
        try:
            frame = plant.start()
            slowest = 0.0
            for k in range(150):
                hid = frame.house_ids[(7 * k) % len(frame.house_ids)]
                target = SwitchTarget.OFF if k % 2 else SwitchTarget.ON
                began = time.perf_counter()
                frame = plant.exchange([DeviceCommand(seq=k + 1, house_id=hid, target=target)])
                slowest = max(slowest, time.perf_counter() - began)
                assert len(frame.house_ids) == 543
        finally:
            plant.close()

    assert slowest < fleet.dt_control
    assert server.session.missed_steps == 0
    assert frame.seq == 150
