import numpy as np
import pytest
from pydantic import ValidationError

from app.models.enums import ControllerKind, RequestKind, SwitchTarget
from app.schemas.controller import ControllerSpec, MarkovConfig, PemConfig, PendingRequest, PiConfig, PiState
from app.sim.controller import (
    BinLayout,
    MarkovController,
    PemController,
    PiController,
    build_controller,
    estimate_transition_matrix,
    markov_step,
    pem_step,
    pi_step,
)
from app.sim.house import LOCKED_ON, OFF, ON


def test_pi_integral_is_clamped():
    cfg = PiConfig(kp=0.0, ki=1.0)
    state = PiState()

    for _ in range(100):
        u, state = pi_step(cfg, error=50.0, state=state, dt=2.0, reference=100.0, limit=500.0)

    assert state.integral == 500.0
    assert u == pytest.approx(5.0)

    u, state = pi_step(cfg, error=-50.0, state=state, dt=2.0, reference=100.0, limit=500.0)
    assert state.integral == 400.0


def test_pi_output_is_normalized_by_reference():
    u, state = pi_step(PiConfig(kp=0.5, ki=0.0), error=200.0, state=PiState(), dt=2.0,
                       reference=1000.0, limit=1e9)

    assert u == pytest.approx(0.1)
    assert state.integral == 400.0


def test_pi_controller_commands_idle_devices_when_short(small_fleet):
    frame = small_fleet.frame()
    controller = PiController(PiConfig(), len(small_fleet), seed=0)

    batch = controller.step(frame.aggregate_power, frame.aggregate_power + 50_000.0, frame, 0.0)

    assert batch.effort > 0
    assert batch.commands
    assert batch.n_off == 0
    for hid, target in batch.commands:
        assert frame.state[small_fleet.index[hid]] == OFF
        assert target is SwitchTarget.ON


def test_pi_controller_without_feedback_only_integrates():
    controller = PiController(PiConfig(), 10)

    batch = controller.step(0.0, 1000.0, None, 0.0)

    assert not batch.commands
    assert controller.state.integral > 0


def test_bin_layout_size():
    cfg = MarkovConfig(n_temp_bins=2, lockout_duration=4.0, delay_steps=1)
    layout = BinLayout.from_config(cfg, dt_control=2.0)

    assert (layout.n_temp, layout.n_lock, layout.n_delay) == (2, 2, 1)
    assert layout.size == 7
    assert layout.on_bins.nonzero()[0].tolist() == [2, 3, 6]

    plain = BinLayout.from_config(cfg.model_copy(update={"use_delayed_dynamics": False}), 2.0)
    assert plain.size == 6


def test_transition_matrix_rows_are_stochastic():
    counts = np.array([[2.0, 2.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 3.0]])

    matrix = estimate_transition_matrix(counts)

    np.testing.assert_allclose(matrix.sum(axis=1), 1.0)
    np.testing.assert_allclose(matrix[0], [0.5, 0.5, 0.0])
    np.testing.assert_allclose(matrix[1], [0.0, 1.0, 0.0])
    np.testing.assert_allclose(matrix[2], [0.25, 0.0, 0.75])


@pytest.fixture
def layout() -> BinLayout:
    return BinLayout.from_config(MarkovConfig(n_temp_bins=2, lockout_duration=4.0, delay_steps=1), 2.0)


def _occupancy(layout: BinLayout, index: int) -> np.ndarray:
    occupancy = np.zeros(layout.size)
    occupancy[index] = 1.0
    return occupancy


def test_markov_step_sizes_the_switching_probability(layout):
    identity = np.eye(layout.size)

    half = markov_step(identity, layout, _occupancy(layout, 0), 500.0, n_devices=10, avg_on_power=100.0)
    full = markov_step(identity, layout, _occupancy(layout, 0), 5000.0, 10, 100.0)
    down = markov_step(identity, layout, _occupancy(layout, 2), 250.0, 10, 100.0)

    assert half.u == pytest.approx(0.5)
    assert half.predicted_power == 0.0
    assert full.u == 1.0
    assert down.predicted_power == pytest.approx(1000.0)
    assert down.u == pytest.approx(-0.75)


def test_markov_step_zero_gap_and_saturation(layout):
    identity = np.eye(layout.size)

    idle = markov_step(identity, layout, _occupancy(layout, 0), 0.0, 10, 100.0)
    locked = markov_step(identity, layout, _occupancy(layout, layout.lock_offset), 300.0, 10, 100.0)

    assert idle.u == 0.0 and not idle.saturated
    assert locked.u == 0.0 and locked.saturated


def test_markov_step_rejects_unnormalized_occupancy(layout):
    with pytest.raises(ValueError):
        markov_step(np.eye(layout.size), layout, np.full(layout.size, 0.5), 100.0, 10, 100.0)


def test_markov_config_validates_the_matrix():
    with pytest.raises(ValidationError):
        MarkovConfig(transition_matrix=[[0.5, 0.4], [0.0, 1.0]])
    with pytest.raises(ValidationError):
        MarkovConfig(transition_matrix=[[1.0, 0.0]])


def test_markov_controller_rejects_mismatched_matrix():
    with pytest.raises(ValueError):
        MarkovController(MarkovConfig(transition_matrix=[[1.0, 0.0], [0.0, 1.0]]), n_devices=5)


def test_markov_controller_learns_from_observed_frames(small_fleet):
    controller = MarkovController(MarkovConfig(), len(small_fleet), seed=0)
    for _ in range(60):
        controller.observe(small_fleet.step())

    matrix = controller.fit()

    assert controller.counts.sum() > 0
    np.testing.assert_allclose(matrix.sum(axis=1), 1.0)
    frame = small_fleet.step()
    batch = controller.step(frame.aggregate_power, frame.aggregate_power * 2 + 10_000.0, frame, 0.0)
    assert batch.predicted_power is not None
    assert batch.n_off == 0


@pytest.mark.slow
def test_markov_model_predicts_the_next_aggregate(make_fleet):
    fleet = make_fleet(n_houses=543, n_remote=0, seed=2)
    controller = MarkovController(MarkovConfig(), len(fleet), dt_control=fleet.dt_control, seed=0)
    for _ in range(900):
        fleet.step()
    for _ in range(int(86_400 / fleet.dt_control)):
        controller.observe(fleet.step())
    controller.fit()

    frame = fleet.step()
    predicted, actual = [], []
    for _ in range(1800):
        batch = controller.step(frame.aggregate_power, frame.aggregate_power, frame, frame.t)
        frame = fleet.step()
        predicted.append(batch.predicted_power)
        actual.append(frame.aggregate_power)

    predicted, actual = np.asarray(predicted), np.asarray(actual)
    assert np.sqrt(np.mean((predicted - actual) ** 2)) / actual.mean() < 0.05


def _request(device: str, kind: RequestKind, power: float) -> PendingRequest:
    return PendingRequest(device=device, kind=kind, power=power)


def test_pem_grants_greedily_in_arrival_order():
    pending = [_request("a", RequestKind.ON, 1500.0), _request("b", RequestKind.ON, 1000.0),
               _request("c", RequestKind.ON, 500.0)]

    decision = pem_step(PemConfig(), pending, current_power=1000.0, reference=3000.0)

    assert [r.device for r in decision.granted] == ["a", "c"]
    assert [r.device for r in decision.denied] == ["b"]
    assert decision.grant_fraction == pytest.approx(2 / 3)


def test_pem_off_requests_keep_power_at_or_above_reference():
    pending = [_request("a", RequestKind.OFF, 1500.0), _request("b", RequestKind.OFF, 1000.0)]

    allowed = pem_step(PemConfig(), pending, current_power=5000.0, reference=3000.0)
    blocked = pem_step(PemConfig(allow_turn_off_requests=False), pending, 5000.0, 3000.0)

    assert [r.device for r in allowed.granted] == ["a"]
    assert not blocked.granted


def test_pem_without_requests_is_saturated():
    decision = pem_step(PemConfig(), [], 0.0, 1000.0)

    assert decision.saturated
    assert decision.grant_fraction == 0.0


def test_pem_controller_only_grants_requesting_devices(make_fleet):
    fleet = make_fleet(mean_time_to_request=5.0)
    controller = PemController(PemConfig(), len(fleet), seed=0)
    frame = fleet.step()

    batch = controller.step(frame.aggregate_power, frame.aggregate_power + 1e6, frame, 0.0)

    for hid, target in batch.commands:
        i = fleet.index[hid]
        assert target is SwitchTarget.ON
        assert frame.requests[i] == 1 and frame.state[i] == OFF


def test_pem_counts_packets_that_run_out_before_the_next_frame(small_fleet):
    controller = PemController(PemConfig(epoch_length=180.0), len(small_fleet), dt_control=2.0, seed=0)
    frame = small_fleet.step()
    running = np.flatnonzero(((frame.state == ON) | (frame.state == LOCKED_ON)) & ~frame.corrupt)
    idle = np.flatnonzero(frame.state == OFF)
    hid, off_hid = frame.house_ids[running[0]], frame.house_ids[idle[0]]
    controller.packets = {hid: 0.0, off_hid: 0.0}

    assert controller.expiring_power(frame, 100.0) == 0.0
    assert off_hid not in controller.packets
    assert controller.expiring_power(frame, 178.0) == pytest.approx(float(frame.power[running[0]]))
    assert hid in controller.packets


def test_pem_controller_tracks_its_grants(make_fleet):
    fleet = make_fleet(mean_time_to_request=5.0)
    controller = PemController(PemConfig(), len(fleet), seed=0)
    frame = fleet.step()

    batch = controller.step(frame.aggregate_power, frame.aggregate_power + 1e6, frame, 12.0)

    granted = {hid for hid, target in batch.commands if target is SwitchTarget.ON}
    assert granted
    assert controller.packets == {hid: 12.0 for hid in granted}
    assert batch.predicted_power > frame.aggregate_power


@pytest.mark.parametrize("kind, cls", [
    (ControllerKind.PI, PiController),
    (ControllerKind.MARKOV, MarkovController),
    (ControllerKind.PEM, PemController),
])
def test_build_controller(kind, cls):
    controller = build_controller(ControllerSpec(kind=kind), n_devices=12, dt_control=2.0, seed=3)

    assert isinstance(controller, cls)
    assert controller.kind is kind
    assert controller.n_devices == 12


def test_spec_seed_overrides_run_seed():
    a = build_controller(ControllerSpec(seed=9), 5, seed=1)
    b = build_controller(ControllerSpec(seed=9), 5, seed=2)

    assert a.rng.random() == b.rng.random()
