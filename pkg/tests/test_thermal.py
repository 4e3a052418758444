import math

import numpy as np
import pytest

from app.core.exceptions import IntegrationError, ModelDivergenceError, NeverOffError, NeverOnError
from app.schemas.thermal import (
    RATED_COOLING_W,
    RATED_EVAPORATOR_C,
    R410A_L_OVER_R,
    AcParams,
    HeatInputs,
    ThermalParams,
    ThermalState,
    nameplate_prefactor,
)
from app.sim.thermal import (
    ThermalBank,
    ac_power,
    check_band,
    cooling_rate,
    cycle_durations,
    cycle_durations_many,
    ensure_finite,
    equilibrium,
    nominal_off_time,
    on_state_power_slope,
    rk4_step,
    step_thermal,
    steady_on_power,
)

T_AMB = 32.2
DEADBAND = (22.0, 23.0)


def test_nameplate_prefactor_reproduces_rated_cooling():
    q = cooling_rate(RATED_EVAPORATOR_C, nameplate_prefactor(), R410A_L_OVER_R)

    assert float(q) == pytest.approx(RATED_COOLING_W, rel=1e-9)


def test_cooling_rate_rises_with_evaporator_temperature():
    A = nameplate_prefactor()
    rates = cooling_rate(np.array([-10.0, 0.0, 10.0, 20.0]), A, R410A_L_OVER_R)

    assert np.all(np.diff(rates) > 0)


def test_step_rejects_non_positive_dt():
    state = ThermalState.uniform(22.0, T_AMB)

    with pytest.raises(ValueError):
        step_thermal(state, ThermalParams(), AcParams(), HeatInputs(), on=False, dt=0.0)


def test_out_of_band_evaporator_raises_divergence():
    with pytest.raises(ModelDivergenceError) as info:
        check_band(np.array([20.0, 75.0]))

    assert info.value.T_1 == 75.0


def test_non_finite_state_names_the_house():
    T = np.array([[20.0, np.nan], [20.0, 20.0], [10.0, 10.0], [30.0, 30.0]])

    with pytest.raises(IntegrationError) as info:
        ensure_finite(T, ("v-0000", "v-0001"))

    assert info.value.house_id == "v-0001"


def test_off_equilibrium_is_stationary():
    params, ac = ThermalParams(), AcParams()
    inputs = HeatInputs(Q_w_dot=0.0, Q_fixed=20.0)
    fixed = equilibrium(params, ac, inputs, T_AMB, on=False)

    stepped = step_thermal(fixed, params, ac, inputs, on=False, dt=1.0)

    assert np.allclose(stepped.temperatures(), fixed.temperatures(), atol=1e-6)
    assert fixed.T_a == pytest.approx(T_AMB + inputs.total / params.U_a)


def test_on_equilibrium_is_stationary():
    params, ac, inputs = ThermalParams(), AcParams(), HeatInputs()
    fixed = equilibrium(params, ac, inputs, T_AMB, on=True)

    stepped = step_thermal(fixed, params, ac, inputs, on=True, dt=1.0)

    assert np.allclose(stepped.temperatures(), fixed.temperatures(), atol=1e-6)
    assert fixed.T_1 < fixed.T_a < fixed.T_w


def test_bank_step_matches_single_house_step():
    params, ac = ThermalParams(), AcParams()
    hot, cold = HeatInputs(Q_w_dot=375.0), HeatInputs()
    bank = ThermalBank.stack([(params, ac, cold), (params, ac, hot)])
    start = ThermalState(T_w=27.0, T_a=23.0, T_1=15.0, T_2=35.0, T_amb=T_AMB)
    T = np.tile(np.array(start.temperatures()).reshape(4, 1), (1, 2))

    T_next, _, _ = rk4_step(T, bank, np.array([True, True]), T_AMB, 1.0)

    for column, inputs in enumerate((cold, hot)):
        single = step_thermal(start, params, ac, inputs, on=True, dt=1.0)
        assert np.allclose(T_next[:, column], single.temperatures())


def _integrate(T0: np.ndarray, bank: ThermalBank, dt: float, horizon: float) -> np.ndarray:
    T = T0.copy()
    for _ in range(int(round(horizon / dt))):
        T, _, _ = rk4_step(T, bank, np.array([True]), T_AMB, dt)
    return T


def test_integrator_is_fourth_order():
    bank = ThermalBank.single(ThermalParams(), AcParams(), HeatInputs())
    start = ThermalState(T_w=27.0, T_a=23.0, T_1=15.0, T_2=35.0, T_amb=T_AMB)
    T0 = np.array(start.temperatures()).reshape(4, 1)

    reference = _integrate(T0, bank, 1 / 16, 240.0)
    errors = [np.abs(_integrate(T0, bank, dt, 240.0) - reference).max() for dt in (4.0, 2.0, 1.0)]

    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all((orders > 3.5) & (orders < 4.5))


def test_power_is_zero_when_off():
    state = ThermalState(T_w=27.0, T_a=23.0, T_1=15.0, T_2=35.0, T_amb=T_AMB)

    assert ac_power(state, AcParams(), on=False) == 0.0
    assert ac_power(state, AcParams(), on=True) > AcParams().W_fric


def test_on_power_rises_with_outdoor_temperature():
    params, ac = ThermalParams(), AcParams()

    slope = on_state_power_slope(params, ac, T_AMB, 22.5)

    assert 0.010 <= slope <= 0.022
    assert steady_on_power(params, ac, 35.0, 22.5) > steady_on_power(params, ac, 25.0, 22.5)


def test_limit_cycle_closes_its_energy_balance():
    summary = cycle_durations(ThermalParams(), AcParams(), HeatInputs(), DEADBAND, T_AMB, tol=1e-4)

    assert summary.on_time > 0 and summary.off_time > 0
    assert 0.0 < summary.duty_cycle < 1.0
    assert summary.energy_imbalance < 0.01


def test_more_heat_means_longer_on_phase():
    params, ac = ThermalParams(), AcParams()
    low, high = cycle_durations_many([(params, ac, HeatInputs(Q_w_dot=200.0)),
                                      (params, ac, HeatInputs(Q_w_dot=375.0))], DEADBAND, T_AMB)

    assert high.duty_cycle > low.duty_cycle
    assert high.on_time > low.on_time


def test_overwhelming_heat_never_turns_off():
    with pytest.raises(NeverOffError):
        cycle_durations(ThermalParams(), AcParams(), HeatInputs(Q_w_dot=8000.0), DEADBAND, T_AMB)


def test_cold_house_never_turns_on():
    with pytest.raises(NeverOnError):
        cycle_durations(ThermalParams(), AcParams(), HeatInputs(Q_w_dot=0.0, Q_fixed=0.0), DEADBAND, 20.0)


def test_nominal_off_time_formula():
    params, inputs = ThermalParams(), HeatInputs()

    expected = (params.C_a + params.C_w) * 1.0 / inputs.total

    assert nominal_off_time(params, inputs, DEADBAND) == pytest.approx(expected)


@pytest.mark.slow
def test_limit_cycles_match_fine_step_reference():
    rng = np.random.default_rng(5)
    ac = AcParams()
    houses = []
    for f in rng.uniform(0.9, 1.1, size=(20, 4)):
        params = ThermalParams(C_w=120_000.0 * f[0], C_a=15_000.0 * f[1], H_m=60.0 * f[2])
        houses.append((params, ac, HeatInputs(Q_w_dot=200.0 * f[3])))

    coarse = cycle_durations_many(houses, DEADBAND, T_AMB, dt=1.0)
    fine = cycle_durations_many(houses, DEADBAND, T_AMB, dt=0.01)

    for c, f in zip(coarse, fine):
        assert c.on_time == pytest.approx(f.on_time, rel=0.01)
        assert c.off_time == pytest.approx(f.off_time, rel=0.01)


@pytest.mark.slow
def test_cycle_duration_has_interior_minimum_over_heat_gain():
    params, ac = ThermalParams(), AcParams()
    gains = np.array([50.0, 100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1000.0, 1080.0])
    cycles = cycle_durations_many([(params, ac, HeatInputs(Q_w_dot=g)) for g in gains], DEADBAND, T_AMB)
    periods = np.array([c.period for c in cycles])
    duty = np.array([c.duty_cycle for c in cycles])

    shortest = int(np.argmin(periods))
    assert 0 < shortest < len(gains) - 1
    assert 0.2 <= duty[shortest] <= 0.8


@pytest.mark.slow
def test_cycle_lengthens_as_thermometer_moves_toward_the_mass():
    ac, inputs = AcParams(), HeatInputs()
    placements = np.linspace(0.1, 1.0, 10)
    cycles = cycle_durations_many([(ThermalParams(f_Hm=f), ac, inputs) for f in placements], DEADBAND, T_AMB)

    periods = [c.period for c in cycles]
    assert all(later > earlier for earlier, later in zip(periods, periods[1:]))
    assert math.isfinite(periods[-1])
