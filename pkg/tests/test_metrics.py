import numpy as np
import pytest

from app.core.exceptions import InsufficientDataError, UndefinedNormalizationError
from app.sim.metrics import (
    TrackingRecord,
    fairness_variance,
    fractional_power_variation,
    nrmse,
    partition_activity,
    pjm_score,
    power_temperature_correlation,
)
from app.sim.signal import synthetic_regd


@pytest.fixture
def reference() -> np.ndarray:
    return 1000.0 * (1.0 + 0.2 * synthetic_regd(2400.0, seed=3))


def test_nrmse_of_a_constant_offset():
    record = TrackingRecord(reference=np.full(50, 100.0), achieved=np.full(50, 110.0))

    assert nrmse(record) == pytest.approx(0.10)


def test_nrmse_is_scale_invariant(reference):
    achieved = reference + 25.0 * np.sin(np.arange(reference.size) / 7.0)

    base = nrmse(TrackingRecord(reference, achieved))
    scaled = nrmse(TrackingRecord(reference * 40.0, achieved * 40.0))

    assert scaled == pytest.approx(base)


def test_nrmse_rejects_zero_mean_reference():
    with pytest.raises(UndefinedNormalizationError):
        nrmse(TrackingRecord(reference=np.array([1.0, -1.0]), achieved=np.zeros(2)))


def test_record_lengths_must_match():
    with pytest.raises(ValueError):
        TrackingRecord(reference=np.zeros(3), achieved=np.zeros(4))


def test_perfect_tracking_scores_one(reference):
    score = pjm_score(TrackingRecord(reference, reference.copy()))

    assert score.correlation == pytest.approx(1.0)
    assert score.delay == 1.0
    assert score.precision == 1.0
    assert score.composite == pytest.approx(1.0)


def test_delayed_response_is_found(reference):
    lag = 30
    achieved = np.concatenate((np.full(lag, reference[0]), reference[:-lag]))

    score = pjm_score(TrackingRecord(reference, achieved, period=2.0))

    assert score.delay_s == pytest.approx(60.0)
    assert score.delay == pytest.approx(0.8)
    assert score.correlation == pytest.approx(1.0)
    assert score.precision < 1.0


def test_score_averages_over_five_minute_windows(reference):
    achieved = reference.copy()
    achieved[600:] = reference.mean()

    score = pjm_score(TrackingRecord(reference, achieved, period=2.0))

    assert score.n_windows == 7
    assert score.correlation == pytest.approx(4.0 / 7.0)
    assert score.delay == 1.0


def test_score_needs_the_full_delay_window():
    with pytest.raises(InsufficientDataError):
        pjm_score(TrackingRecord(np.full(100, 1.0), np.full(100, 1.0), period=2.0))


def test_fairness_needs_two_groups_of_houses():
    with pytest.raises(InsufficientDataError):
        fairness_variance(np.ones((10, 30)), np.ones(10), np.zeros(30, dtype=bool))


def test_identical_houses_are_equally_fair():
    rng = np.random.default_rng(0)
    power = np.tile(rng.random((50, 1)) * 3000.0, (1, 60))
    remote = np.arange(60) >= 40

    report = fairness_variance(power, np.full(50, 60_000.0), remote, group_size=20, n_groups=25)

    assert len(report.virtual_variances) == 25
    assert report.remote_variance is not None
    assert report.within_range


def test_fairness_without_remote_houses():
    power = np.random.default_rng(1).random((20, 50))

    report = fairness_variance(power, np.zeros(20), np.zeros(50, dtype=bool))

    assert report.remote_variance is None
    assert report.within_range is None


def test_fractional_power_variation_trims_each_on_period():
    power = np.array([0.0, 100.0, 110.0, 120.0, 120.0, 0.0, 50.0, 50.0, 50.0])

    untrimmed = fractional_power_variation(power, period=1.0, trim=0.0)
    trimmed = fractional_power_variation(power, period=1.0, trim=1.0)

    np.testing.assert_allclose(untrimmed, [20.0 / 120.0, 0.0])
    np.testing.assert_allclose(trimmed, [10.0 / 120.0, 0.0])


def test_power_temperature_slope():
    T_amb = np.linspace(25.0, 35.0, 21)
    power = 1000.0 * (1.0 + 0.014 * (T_amb - 30.0))

    r, slope = power_temperature_correlation(T_amb, power)

    assert r == pytest.approx(1.0)
    assert slope == pytest.approx(0.014)


def test_partition_activity_splits_by_tag():
    states = np.array([[0, 2], [1, 2], [1, 0], [0, 0], [1, 0]], dtype=np.int8)
    remote = np.array([False, True])

    activity = partition_activity(states, remote, period=2.0)

    local, plant = activity["local_virtual"], activity["remote_plant"]
    assert local.on_fraction == pytest.approx(0.6)
    assert local.starts_per_hour == pytest.approx(900.0)
    assert plant.locked_fraction == pytest.approx(0.4)
    assert plant.off_fraction == pytest.approx(0.6)
    assert plant.starts_per_hour == 0.0
