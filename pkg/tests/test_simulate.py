import numpy as np
import pytest

from ringflow.errors import ConfigError, DimensionError, DomainError, NumericalError
from ringflow.models import ControlModel, ControlSet, GameModel, MinPlusModel, a6_game, three_phase_controls
from ringflow.ring import RingConfig
from ringflow.simulate import (
    default_stride,
    estimate_growth_rate,
    gap_stats,
    gap_stats_from_state,
    initial_state,
    phase_report,
    ring_positions,
    run_trajectory,
    simulate,
    snapshot_frame,
    summarize,
)


def test_default_stride_keeps_every_step_for_small_rings():
    assert default_stride(8, 10_000) == 1
    assert default_stride(1000, 10_000) == 10


def test_initial_states():
    ring = RingConfig(4, 10)
    assert initial_state("uniform", ring).tolist() == [0.0, 2.5, 5.0, 7.5]
    assert initial_state("platoon", ring).tolist() == [0.0, 1.0, 2.0, 3.0]
    first = initial_state("random", ring, seed=5)
    assert first.tolist() == initial_state("random", ring, seed=5).tolist()
    assert first[0] == 0.0
    assert np.all(np.diff(first) >= 0)
    assert first[-1] < 10
    with pytest.raises(ConfigError):
        initial_state("scattered", ring)


def test_uniform_start_moves_at_closed_form_speed():
    model = ControlModel(three_phase_controls())
    ring = RingConfig(1, 4)
    trajectory = simulate(model, ring, 10)
    estimate = estimate_growth_rate(trajectory, burn_in=0)
    assert estimate.mu == pytest.approx(5.0 / 6.0, abs=1e-12)
    assert estimate.spread == pytest.approx(0.0, abs=1e-12)


def test_minplus_platoon_reaches_periodic_regime():
    model = MinPlusModel(2.0, 1.0)
    ring = RingConfig(2, 5)
    trajectory = simulate(model, ring, 200, init="platoon", stop_when_periodic=True)
    assert trajectory.period == 2
    assert trajectory.step < 200
    assert estimate_growth_rate(trajectory).mu == pytest.approx(1.5, abs=1e-12)


def test_growth_rate_window_aligns_to_lead_period():
    model = MinPlusModel(2.0, 1.0)
    ring = RingConfig(2, 5)
    trajectory = simulate(model, ring, 201, init="platoon")
    assert trajectory.period is None
    assert estimate_growth_rate(trajectory, burn_in=100).mu == pytest.approx(1.5, abs=1e-12)


def test_growth_rate_needs_steps_after_burn_in():
    model = MinPlusModel(2.0, 1.0)
    trajectory = run_trajectory(model, RingConfig(3, 7), [0.0, 1.0, 3.0], 5)
    with pytest.raises(DomainError):
        estimate_growth_rate(trajectory, burn_in=5)


def test_run_trajectory_snapshots_follow_stride():
    model = MinPlusModel(2.0, 1.0)
    trajectory = run_trajectory(model, RingConfig(2, 5), [0.0, 1.0], 10, stride=4)
    assert trajectory.snapshot_steps == [0, 4, 8, 10]
    assert len(trajectory.lead) == 11


def test_run_trajectory_rejects_bad_input():
    model = MinPlusModel(2.0, 1.0)
    with pytest.raises(DimensionError):
        run_trajectory(model, RingConfig(3, 7), [0.0, 1.0], 5)
    with pytest.raises(NumericalError):
        run_trajectory(model, RingConfig(2, 7), [0.0, np.inf], 5)


def test_control_simulation_matches_closed_form_random_sets():
    rng = np.random.default_rng(4)
    for _ in range(50):
        k = int(rng.integers(1, 7))
        pairs = list(zip(rng.uniform(-2.0, 2.0, size=k), rng.uniform(0.05, 1.0, size=k)))
        model = ControlModel(ControlSet.of(pairs))
        n = int(rng.integers(1, 13))
        ring = RingConfig(n, int(rng.integers(n, 4 * n + 1)))
        trajectory = simulate(model, ring, 10_000, stop_when_periodic=True)
        expected = model.closed_form_speed(ring.density).mu
        assert estimate_growth_rate(trajectory).mu == pytest.approx(expected, abs=1e-6)


def test_game_simulation_matches_closed_form():
    model = GameModel(a6_game())
    for n, m in ((1, 10), (3, 10), (9, 10), (7, 25)):
        ring = RingConfig(n, m)
        trajectory = simulate(model, ring, 10_000, stop_when_periodic=True)
        expected = model.closed_form_speed(ring.density).mu
        assert estimate_growth_rate(trajectory).mu == pytest.approx(expected, abs=1e-6)


def test_phase_two_platoon_spreads_out_uniformly():
    model = ControlModel(three_phase_controls())
    ring = RingConfig(8, 20)
    trajectory = simulate(model, ring, 500, init="platoon", stride=500)
    stats = gap_stats_from_state(trajectory.final_state, ring.m, trajectory.step)
    assert stats.max_dev <= 1e-3


def test_gap_stats_from_positions():
    stats = gap_stats([0.0, 2.0, 5.0], 10.0)
    assert stats.gaps.tolist() == [2.0, 3.0, 5.0]
    assert stats.max_dev == pytest.approx(5.0 - 10.0 / 3.0)


def test_gap_stats_from_wrapped_positions():
    positions = ring_positions([8.0, 11.0], 10.0)
    assert positions.tolist() == [8.0, 1.0]
    assert gap_stats(positions, 10.0).gaps.tolist() == [3.0, 7.0]


def test_gap_stats_from_state_uniform():
    stats = gap_stats_from_state([0.0, 2.5, 5.0, 7.5], 10.0)
    assert stats.max_dev == 0.0


def test_snapshot_frame_columns():
    model = MinPlusModel(2.0, 1.0)
    trajectory = run_trajectory(model, RingConfig(2, 5), [0.0, 1.0], 2)
    frame = snapshot_frame(trajectory)
    assert list(frame.columns) == ["step", "car", "position", "cumulative"]
    assert frame["step"].tolist() == [0, 0, 1, 1, 2, 2]
    assert frame["car"].tolist() == [1, 2, 1, 2, 1, 2]
    assert frame["cumulative"].tolist() == [0.0, 1.0, 0.0, 3.0, 2.0, 4.0]


def test_summary_records_seed_and_error():
    model = MinPlusModel(2.0, 1.0)
    trajectory = simulate(model, RingConfig(2, 5), 100, init="random", seed=42)
    summary = summarize(trajectory, burn_in=50)
    assert summary["seed"] == 42
    assert summary["init"] == "random"
    assert summary["mu_closed_form"] == 1.5
    assert summary["abs_error"] == pytest.approx(0.0, abs=1e-9)


def test_phase_report_uniform_interval():
    model = ControlModel(three_phase_controls())
    rings = [RingConfig(8, 40), RingConfig(8, 20), RingConfig(8, 10)]
    report = phase_report(model, rings, 500)
    densities = [run["density"] for run in report["runs"]]
    assert densities == [0.2, 0.4, 0.8]
    assert report["runs"][1]["uniform"]
    assert report["uniform_from"] is not None


def test_periodic_platoon_run_measures_only_the_periodic_regime():
    model = ControlModel(three_phase_controls())
    ring = RingConfig(8, 16)
    trajectory = simulate(model, ring, 10_000, init="platoon", stop_when_periodic=True)
    assert trajectory.period is not None
    estimate = estimate_growth_rate(trajectory, burn_in=0)
    assert estimate.mu == pytest.approx(7.0 / 12.0, abs=1e-6)
    assert estimate.start > 0
    assert (estimate.end - estimate.start) % trajectory.period == 0


@pytest.mark.parametrize("init", ["platoon", "random"])
def test_control_simulation_from_perturbed_start_matches_closed_form(init):
    rng = np.random.default_rng(11)
    for case in range(20):
        k = int(rng.integers(1, 5))
        pairs = list(zip(rng.uniform(-1.0, 1.5, size=k), rng.uniform(0.2, 1.0, size=k)))
        model = ControlModel(ControlSet.of(pairs))
        n = int(rng.integers(2, 9))
        ring = RingConfig(n, int(rng.integers(n, 3 * n + 1)))
        trajectory = simulate(model, ring, 10_000, init=init, seed=case, stop_when_periodic=True)
        expected = model.closed_form_speed(ring.density).mu
        assert estimate_growth_rate(trajectory, burn_in=100).mu == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("init", ["platoon", "random"])
def test_game_simulation_from_perturbed_start_matches_closed_form(init):
    model = GameModel(a6_game())
    for n, m in ((3, 10), (4, 10), (9, 10), (7, 25)):
        ring = RingConfig(n, m)
        trajectory = simulate(model, ring, 10_000, init=init, seed=n, stop_when_periodic=True)
        expected = model.closed_form_speed(ring.density).mu
        assert estimate_growth_rate(trajectory, burn_in=100).mu == pytest.approx(expected, abs=1e-6)


def test_ring_positions_stay_below_road_length():
    positions = ring_positions([-1e-17, 2.0, 8.0], 4.0)
    assert positions.tolist() == [0.0, 2.0, 0.0]
    assert np.all(positions < 4.0)
