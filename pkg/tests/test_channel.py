import numpy as np
import pytest
from pydantic import ValidationError

from app.models.enums import ChannelMode, SwitchTarget
from app.schemas.channel import ChannelModel, DeviceCommand
from app.sim.channel import Channel, StaleFilter


def _delays(channel: Channel, n: int) -> np.ndarray:
    delivered = [channel.transmit(i, 0.0) for i in range(n)]
    return np.array([outcome[1] for outcome in delivered if outcome is not None])


def test_perfect_channel_delivers_immediately_in_send_order():
    channel = Channel(ChannelModel())

    channel.send_many(["a", "b", "c"], send_time=10.0)

    assert channel.loss_rate == 0.0
    assert channel.pop_due(9.9) == []
    assert channel.pop_due(10.0) == ["a", "b", "c"]
    assert channel.in_flight == 0
    assert (channel.sent, channel.dropped) == (3, 0)


def test_impaired_loss_rate_is_drawn_within_range():
    model = ChannelModel.impaired(rng_seed=4)

    rates = {Channel(model, stream).loss_rate for stream in range(20)}

    assert all(0.05 <= rate <= 0.10 for rate in rates)
    assert len(rates) > 1
    assert Channel(model, 3).loss_rate == Channel(model, 3).loss_rate


def test_dropped_share_matches_loss_rate():
    channel = Channel(ChannelModel.impaired(rng_seed=1))

    for i in range(20_000):
        channel.send(i, 0.0)

    assert channel.dropped / channel.sent == pytest.approx(channel.loss_rate, abs=0.01)
    assert channel.in_flight == channel.sent - channel.dropped


def test_delayed_messages_arrive_in_delivery_order():
    channel = Channel(ChannelModel.impaired(rng_seed=2, loss_rate_min=0.0, loss_rate_max=0.0))

    channel.send_many(range(200), send_time=0.0)
    assert channel.pop_due(0.0) == []

    arrived = channel.pop_due(1e6)
    assert sorted(arrived) == list(range(200))
    assert channel.in_flight == 0


def test_delays_are_never_negative():
    channel = Channel(ChannelModel.impaired(rng_seed=3, delay_mean=1.0, delay_std=5.0,
                                            loss_rate_min=0.0, loss_rate_max=0.0))

    assert (_delays(channel, 5000) >= 0).all()


def test_delay_statistics():
    channel = Channel(ChannelModel.impaired(rng_seed=5))

    delays = _delays(channel, 5000)

    assert delays.mean() == pytest.approx(18.0, abs=0.3)
    assert delays.std() == pytest.approx(3.0, abs=0.3)


@pytest.mark.slow
def test_delay_statistics_large_sample():
    channel = Channel(ChannelModel.impaired(rng_seed=6))

    delays = _delays(channel, 100_000)

    assert delays.mean() == pytest.approx(18.0, abs=0.05)
    assert delays.std() == pytest.approx(3.0, abs=0.05)


def test_per_message_loss_stays_within_range():
    channel = Channel(ChannelModel.impaired(rng_seed=7, per_message_loss=True))

    for i in range(20_000):
        channel.send(i, 0.0)

    assert 0.05 - 0.01 <= channel.dropped / channel.sent <= 0.10 + 0.01


def test_loss_range_is_validated():
    with pytest.raises(ValidationError):
        ChannelModel(mode=ChannelMode.IMPAIRED, loss_rate_min=0.2, loss_rate_max=0.1)


def test_stale_filter_drops_superseded_commands():
    stale = StaleFilter()
    newer = DeviceCommand(seq=5, house_id="v-0001", target=SwitchTarget.OFF)
    older = DeviceCommand(seq=3, house_id="v-0001", target=SwitchTarget.ON)
    other = DeviceCommand(seq=1, house_id="v-0002", target=SwitchTarget.ON)

    assert stale([newer]) == [newer]
    assert stale([older, other]) == [other]
    assert stale.discarded == 1
    assert stale([newer]) == [newer]
