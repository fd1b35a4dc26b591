"""Tests for periodic flush-cycle policies: capacity thresholds, feasible
cadences, overshoot bounds, and closed-loop cycle simulation."""

import json
import math

import pytest

from feelab.bangbang import (
    CycleReport,
    k_range,
    min_capacity,
    overshoot_bound,
    simulate_cycle,
)
from feelab.core import TxClassGrid, make_rng


# ---------------------------------------------------------------- capacity


def test_min_capacity_two_levels_exact():
    """Q=6, n=2: (Q/4)(3 + sqrt(8*4 - 32 + 9)) = 1.5 * 6 = 9, exactly."""
    assert min_capacity(6, 2) == 9.0


def test_min_capacity_three_levels_frozen():
    """Q=4, n=3: 3 + sqrt(33), frozen from an independent evaluation."""
    assert min_capacity(4, 3) == pytest.approx(8.744562646538029, rel=1e-15)
    assert min_capacity(4, 3) == pytest.approx(3 + math.sqrt(33), rel=1e-15)


def test_min_capacity_exceeds_half_load():
    """The threshold always sits strictly above n*Q/2 (so a block can never
    absorb a whole flush without overshoot)."""
    rng = make_rng(7)
    for _ in range(200):
        q = float(rng.uniform(0.1, 20.0))
        n = int(rng.integers(2, 12))
        assert min_capacity(q, n) > n * q / 2


def test_min_capacity_validation():
    with pytest.raises(ValueError):
        min_capacity(0.0, 2)
    with pytest.raises(ValueError):
        min_capacity(-1.0, 3)
    with pytest.raises(ValueError):
        min_capacity(6.0, 1)


# ---------------------------------------------------------------- cadence window


def test_k_range_tight_at_threshold():
    """At B = min_capacity(6,2) = 9 the window collapses to the single k=2."""
    assert k_range(6, 2, 9) == (2, 2)


def test_k_range_empty_below_threshold():
    """Just below the capacity threshold no integer cadence fits."""
    assert k_range(6, 2, 8.9) is None


def test_k_range_widens_with_budget():
    assert k_range(6, 2, 12) == (1, 3)
    lo, hi = k_range(6, 2, 30)
    assert lo == 1 and hi > 3


def test_k_range_validation():
    with pytest.raises(ValueError):
        k_range(6, 1, 9)
    with pytest.raises(ValueError):
        k_range(6, 2, 6.0)  # budget must exceed per-class load
    with pytest.raises(ValueError):
        k_range(6, 2, 5.0)


def test_k_range_empty_below_capacity_threshold():
    """min_capacity is where the real-valued cadence window collapses to a
    point; strictly below it the window is empty for every integer k."""
    rng = make_rng(11)
    for _ in range(150):
        q = float(rng.uniform(0.5, 10.0))
        n = int(rng.integers(2, 7))
        b = min_capacity(q, n) * float(rng.uniform(0.70, 0.995))
        assert b > q  # stays in k_range's domain
        assert k_range(q, n, b) is None


def test_k_range_nonempty_for_generous_budget():
    """B >= n*Q always admits a cadence (k=1 already fits), and every k in
    the window keeps the flush within the hard cap 2B."""
    rng = make_rng(13)
    for _ in range(150):
        q = float(rng.uniform(0.5, 10.0))
        n = int(rng.integers(2, 7))
        b = n * q * float(rng.uniform(1.0, 3.0))
        window = k_range(q, n, b)
        assert window is not None
        lo, hi = window
        assert 1 <= lo <= hi
        for k in range(lo, hi + 1):
            assert ((n - 1) * k + 1) * q <= 2 * b + 1e-9


# ---------------------------------------------------------------- overshoot bound


def test_overshoot_bound_examples():
    assert overshoot_bound(6, 2, 9) == 4.5  # B*Q*(n-1)/(2B-Q) = 54/12
    assert overshoot_bound(2, 3, 4) == pytest.approx(16 / 6, rel=1e-15)


def test_overshoot_bound_validation():
    with pytest.raises(ValueError):
        overshoot_bound(6, 1, 9)
    with pytest.raises(ValueError):
        overshoot_bound(6, 2, 3.0)  # needs 2B > Q
    with pytest.raises(ValueError):
        overshoot_bound(6, 2, 2.9)


def test_overshoot_bound_dominates_exact_average():
    """(((n-1)k + 1)Q - B)/k <= BQ(n-1)/(2B-Q) for every feasible cadence."""
    rng = make_rng(23)
    for _ in range(150):
        q = float(rng.uniform(0.5, 8.0))
        n = int(rng.integers(2, 6))
        b = n * q * float(rng.uniform(1.0, 3.0))
        lo, hi = k_range(q, n, b)
        cap = overshoot_bound(q, n, b)
        for k in range(lo, hi + 1):
            exact = (((n - 1) * k + 1) * q - b) / k
            assert exact <= cap + 1e-9


# ---------------------------------------------------------------- cycle simulation


def test_simulate_cycle_tight_two_level():
    """Sizes {2,4} with two value levels, B=9, k=2: flushes of 18 every other
    block, measured overshoot exactly matching both the closed form and the
    bound (the threshold case is tight)."""
    grid = TxClassGrid((2, 4), (1, 2))
    report = simulate_cycle(grid, B=9, k=2)
    assert report.flush_size == 18
    assert report.avg_overshoot == 4.5
    assert report.exact_avg_overshoot == 4.5
    assert report.bound == 4.5
    assert report.periodic is True
    assert report.period == 2
    assert report.delta_ok is True
    assert report.flow_residual <= 1e-9
    assert report.dropped == 0
    assert report.all_scheduled is True
    assert report.max_pool == 18  # pool peaks right before the flush


def test_simulate_cycle_unit_size():
    """Single size 1, two levels, B=1.5: only k=2 fits, flush of 3."""
    grid = TxClassGrid((1,), (1, 2))
    report = simulate_cycle(grid, B=1.5, k=2)
    assert report.flush_size == 3
    assert report.avg_overshoot == 0.75
    assert report.exact_avg_overshoot == 0.75
    assert report.bound == 0.75
    assert report.periodic is True


def test_simulate_cycle_cadence_sweep():
    """At B=12 (loose budget) the overshoot grows with the cadence: 0, 3, 4
    for k = 1, 2, 3, each matching the closed form and below the bound 4."""
    grid = TxClassGrid((2, 4), (1, 2))
    seen = []
    for k in (1, 2, 3):
        report = simulate_cycle(grid, B=12, k=k)
        assert report.avg_overshoot == report.exact_avg_overshoot
        assert report.avg_overshoot <= report.bound == 4.0
        assert report.periodic is True
        assert report.period == k
        seen.append(report.avg_overshoot)
    assert seen == [0.0, 3.0, 4.0]


def test_simulate_cycle_rejects_infeasible_cadence():
    grid = TxClassGrid((2, 4), (1, 2))
    with pytest.raises(ValueError):
        simulate_cycle(grid, B=12, k=5)  # window is (1, 3)
    with pytest.raises(ValueError):
        simulate_cycle(grid, B=9, k=1)  # window is (2, 2)


def test_cycle_report_json_round_trip(tmp_path):
    grid = TxClassGrid((2, 4), (1, 2))
    report = simulate_cycle(grid, B=9, k=2)
    payload = report.to_json()
    assert set(payload) == {
        "B", "Q", "n", "k", "flush_size", "avg_overshoot", "bound",
        "periodic", "delta_ok",
    }
    out = tmp_path / "cycle.json"
    report.dump(out)
    text = out.read_text()
    assert text.endswith("\n")
    assert json.loads(text) == payload
    assert isinstance(report, CycleReport)
