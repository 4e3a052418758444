import numpy as np
import pytest

from app.core.exceptions import AccountingError
from app.models.enums import HouseAssignment
from app.schemas.fleet import TelemetryFrame
from app.schemas.grid import TransformerSpec
from app.sim.grid import TransformerLedger, assign_houses, size_ratings

IDS = tuple(f"v-{i:04d}" for i in range(4))


def _frame(power, ids=IDS, starts=None, corrupt=None, inrush=None) -> TelemetryFrame:
    n = len(ids)
    power = np.asarray(power, dtype=float)
    zeros = np.zeros(n)
    return TelemetryFrame(
        t=0.0, house_ids=ids, power=power, temperature=zeros, position=zeros,
        state=(power > 0).astype(np.int8), lock_remaining=zeros,
        accepted=np.full(n, -1, dtype=np.int8), requests=np.zeros(n, dtype=np.int8),
        rated_power=np.full(n, 1000.0), inrush_peak=zeros if inrush is None else np.asarray(inrush, dtype=float),
        corrupt=np.zeros(n, dtype=bool) if corrupt is None else np.asarray(corrupt),
        turned_on=np.zeros(n, dtype=bool) if starts is None else np.asarray(starts),
    )


@pytest.fixture
def ledger() -> TransformerLedger:
    return TransformerLedger([
        TransformerSpec(transformer_id="a", rating=1000.0, assigned_houses=["v-0000", "v-0001"]),
        TransformerSpec(transformer_id="b", rating=2000.0, assigned_houses=["v-0002", "v-0003"]),
    ])


@pytest.mark.parametrize("n_houses, n_transformers", [(543, 100), (10, 3), (7, 7)])
def test_uniform_assignment_is_balanced(n_houses, n_transformers):
    ids = [f"v-{i:04d}" for i in range(n_houses)]

    specs = assign_houses(ids, n_transformers, seed=2)
    sizes = [len(s.assigned_houses) for s in specs]

    assert len(specs) == n_transformers
    assert max(sizes) - min(sizes) <= 1
    assert sorted(h for s in specs for h in s.assigned_houses) == ids


def test_random_assignment_covers_every_house_once():
    ids = [f"v-{i:04d}" for i in range(200)]

    specs = assign_houses(ids, 10, HouseAssignment.RANDOM, seed=1)

    assert sorted(h for s in specs for h in s.assigned_houses) == ids


def test_assignment_ratings_follow_house_power():
    ids = ["a", "b", "c", "d"]

    specs = assign_houses(ids, 2, seed=0, house_power=dict.fromkeys(ids, 900.0), headroom=0.9)

    assert [s.rating for s in specs] == pytest.approx([2000.0, 2000.0])
    with pytest.raises(ValueError):
        assign_houses(ids, 0)


def test_size_ratings_splits_the_coincident_peak_by_baseline_share():
    ids = IDS + ("v-0004",)
    specs = [
        TransformerSpec(transformer_id="a", rating=1.0, assigned_houses=["v-0000", "v-0001"]),
        TransformerSpec(transformer_id="b", rating=1.0, assigned_houses=["v-0002", "v-0003"]),
        TransformerSpec(transformer_id="c", rating=1.0, assigned_houses=["v-0004"]),
    ]
    window = np.array([[1000.0, 0.0, 500.0, 500.0, 0.0], [0.0, 0.0, 1000.0, 1500.0, 0.0]])

    a, b, c = size_ratings(specs, ids, window, headroom=0.5)

    assert a.rating == pytest.approx(2500.0 * 500.0 / 2250.0 / 0.5)
    assert b.rating == pytest.approx(2500.0 * 1750.0 / 2250.0 / 0.5)
    assert c.rating == pytest.approx(2500.0 * 0.2 / 0.5)
    assert a.rating + b.rating == pytest.approx(2500.0 / 0.5)


def test_ledger_rejects_double_assignment():
    with pytest.raises(AccountingError):
        TransformerLedger([
            TransformerSpec(transformer_id="a", rating=1.0, assigned_houses=["v-0000"]),
            TransformerSpec(transformer_id="b", rating=1.0, assigned_houses=["v-0000"]),
        ])


def test_ledger_rejects_unknown_or_missing_houses(ledger):
    with pytest.raises(AccountingError):
        ledger.update(_frame([0.0, 0.0, 0.0, 0.0], ids=IDS[:3] + ("v-0099",)), 2.0)
    with pytest.raises(AccountingError):
        ledger.update(_frame([0.0, 0.0, 0.0], ids=IDS[:3]), 2.0)


def test_overload_timer_tracks_the_longest_run(ledger):
    over = _frame([800.0, 400.0, 500.0, 500.0])
    fine = _frame([300.0, 300.0, 500.0, 500.0])

    for frame in (over, over, over, fine, over):
        loading = ledger.update(frame, 2.0)

    np.testing.assert_allclose(loading, [1.2, 0.5])
    report = ledger.report()
    a, b = report.transformers
    assert a.max_consecutive_overload_s == 6.0
    assert a.overload_sample_count == 4
    assert a.peak_loading_pu == pytest.approx(1.2)
    assert b.max_consecutive_overload_s == 0.0
    assert report.duration == 10.0
    assert report.max_consecutive_overload_s == 6.0


def test_corrupt_entries_do_not_load_transformers(ledger):
    loading = ledger.update(_frame([5000.0, 0.0, 0.0, 0.0], corrupt=[True, False, False, False]), 2.0)

    assert loading[0] == 0.0


def test_simultaneous_starts_are_counted(ledger):
    ledger.update(_frame([1.0] * 4, starts=[True, True, True, False]), 2.0)
    ledger.update(_frame([1.0] * 4, starts=[True, False, True, False]), 2.0)

    report = ledger.report()

    assert [t.simultaneous_inrush_count for t in report.transformers] == [1, 0]
    assert report.simultaneous_inrush_count == 1


def test_inrush_peak_is_recorded_apart_from_loading(ledger):
    loading = ledger.update(_frame([1000.0, 0.0, 0.0, 0.0], starts=[True, False, False, False],
                                   inrush=[5500.0, 0.0, 0.0, 0.0]), 2.0)
    ledger.update(_frame([1000.0, 0.0, 0.0, 0.0]), 2.0)

    report = ledger.report()
    a, b = report.transformers

    assert loading[0] == pytest.approx(1.0)
    assert a.max_consecutive_overload_s == 0.0
    assert a.peak_inrush_pu == pytest.approx(5.5)
    assert a.inrush_event_count == 1
    assert b.peak_inrush_pu == 0.0
    assert report.peak_inrush_pu == pytest.approx(5.5)
