import numpy as np
import pytest

from app.core.exceptions import ConfigError
from app.sim.validation import (
    PRESETS,
    command_delay,
    heterogeneity_spread,
    multiple_populations,
    oscillation_envelope,
    run_validation_preset,
)


def test_presets_are_registered():
    assert list(PRESETS) == [f"exp{k}" for k in range(1, 8)]


def test_unknown_preset_raises():
    with pytest.raises(ConfigError):
        run_validation_preset("exp99")


def test_oscillation_envelope_per_window():
    aggregate = np.array([1.0, 3.0, 2.0, 2.0, 0.0, 2.0, 2.0])

    envelope = oscillation_envelope(aggregate, window=2)

    mean = aggregate.mean()
    np.testing.assert_allclose(envelope, [3.0 - mean, 2.0 - mean, mean])


def test_spread_is_zero_for_identical_houses():
    result = heterogeneity_spread(n_houses=10, levels=(0.0, 0.3))

    assert result.name == "exp6"
    assert result.values["period_cv_h0.00"] == pytest.approx(0.0, abs=1e-12)
    assert result.values["period_cv_h0.30"] > 0
    assert result.passed


def test_command_delay_reports_both_responses():
    result = run_validation_preset("exp7", n_houses=20, warmup=60.0)

    assert set(result.values) == {"response_perfect_s", "response_impaired_s", "lag_s"}
    assert result.values["response_perfect_s"] <= 4.0
    assert result.values["response_impaired_s"] > result.values["response_perfect_s"]


@pytest.mark.slow
def test_impaired_broadcast_lags_by_the_channel_delay():
    assert command_delay().passed


@pytest.mark.slow
def test_populations_keep_their_own_duty_cycle():
    result = multiple_populations()

    assert result.passed
    assert result.values["period_low_gain_s"] > 0


@pytest.mark.slow
def test_spread_grows_with_heterogeneity():
    assert heterogeneity_spread().passed


@pytest.mark.slow
@pytest.mark.parametrize("name", ["exp1", "exp2", "exp4"])
def test_testbed_phenomena_are_reproduced(name):
    result = run_validation_preset(name)

    assert result.name == name
    assert result.verdicts
    assert all(result.verdicts.values()), result.verdicts
    assert result.passed
    assert all(np.isfinite(v) for v in result.values.values())


@pytest.mark.slow
def test_frequency_sweep_reports_its_check():
    result = run_validation_preset("exp3", n_houses=100)

    assert set(result.verdicts) == {"fast_switching_attenuated"}
    assert all(np.isfinite(v) for v in result.values.values())
