from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .constants import (
    DEFAULT_SEED,
    INITIAL_CONDITIONS,
    PERIODICITY_TOLERANCE,
    SNAPSHOT_FULL_STRIDE_MAX_CARS,
    SNAPSHOT_MAX_ROWS,
)
from .errors import ConfigError, DimensionError, DomainError, NumericalError
from .models import TrafficModel, uniform_eigenvector
from .ring import RingConfig


@dataclass
class Trajectory:
    model: TrafficModel
    ring: RingConfig
    x0: np.ndarray
    snapshot_steps: List[int] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    lead: List[float] = field(default_factory=list)
    step: int = 0
    period: Optional[int] = None
    init: str = "custom"
    seed: Optional[int] = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class GrowthEstimate:
    mu: float
    spread: float
    start: int
    end: int


@dataclass(frozen=True)
class GapStats:
    gaps: np.ndarray
    max_dev: float
    step: int = 0


def default_stride(n: int, steps: int) -> int:
    if n <= SNAPSHOT_FULL_STRIDE_MAX_CARS:
        return 1
    return max(1, math.ceil(steps / SNAPSHOT_MAX_ROWS))


def initial_state(kind: str, ring: RingConfig, seed: Optional[int] = DEFAULT_SEED) -> np.ndarray:
    if kind == "uniform":
        return uniform_eigenvector(ring)
    if kind == "platoon":
        return np.arange(ring.n, dtype=float)
    if kind == "random":
        rng = np.random.default_rng(seed)
        draws = np.sort(rng.uniform(0.0, ring.m, size=ring.n))
        return draws - draws[0]
    raise ConfigError(f"Unknown initial condition {kind!r}; expected one of {', '.join(INITIAL_CONDITIONS)}")


def _detect_period(window: deque, max_period: int, tol: float) -> Optional[int]:
    states = np.asarray(window)
    latest = states[-1]
    for period in range(1, max_period + 1):
        if states.shape[0] < 2 * period + 1:
            break
        shift = latest - states[-1 - period]
        if np.ptp(shift) > tol:
            continue
        previous = states[-1 - period] - states[-1 - 2 * period]
        if np.max(np.abs(shift - previous)) <= tol:
            return period
    return None


def run_trajectory(
    model: TrafficModel,
    ring: RingConfig,
    x0: Sequence[float],
    steps: int,
    stride: Optional[int] = None,
    stop_when_periodic: bool = False,
    max_period: Optional[int] = None,
    tol: float = PERIODICITY_TOLERANCE,
) -> Trajectory:
    """Applies the model operator ``steps`` times from ``x0``.

    With ``stop_when_periodic`` the run ends as soon as x^k - x^{k-T} is a
    constant vector repeated over two consecutive periods (T <= ``max_period``).
    """
    state = np.asarray(x0, dtype=float)
    if state.ndim != 1 or state.shape[0] != ring.n:
        raise DimensionError(f"Initial state of shape {state.shape} does not match ring with n={ring.n}")
    if not np.isfinite(state).all():
        raise NumericalError("Initial state must be finite", step=0)
    if steps < 1:
        raise DomainError("A trajectory needs at least one step")

    stride = stride or default_stride(ring.n, steps)
    max_period = max_period or max(8, 4 * ring.n)
    trajectory = Trajectory(model=model, ring=ring, x0=state.copy())
    trajectory.snapshot_steps.append(0)
    trajectory.states.append(state.copy())
    trajectory.lead.append(float(state[0]))
    window: deque = deque([state.copy()], maxlen=2 * max_period + 1)

    for k in range(1, steps + 1):
        state = model.apply(state, ring)
        if not np.isfinite(state).all():
            raise NumericalError(f"Non-finite state at step {k}", step=k)
        trajectory.lead.append(float(state[0]))
        trajectory.step = k
        window.append(state)

        if stop_when_periodic:
            trajectory.period = _detect_period(window, max_period, tol)
        done = trajectory.period is not None or k == steps
        if k % stride == 0 or done:
            trajectory.snapshot_steps.append(k)
            trajectory.states.append(state.copy())
        if trajectory.period is not None:
            logging.debug("Periodic regime with T=%s detected at step %s", trajectory.period, k)
            break

    logging.debug("Trajectory of %s model on ring n=%s m=%s stopped at step %s", model.kind, ring.n, ring.m, trajectory.step)
    return trajectory


def _state_at_or_after(trajectory: Trajectory, step: int) -> tuple:
    for index, snap in enumerate(trajectory.snapshot_steps):
        if snap >= step:
            return snap, trajectory.states[index]
    return trajectory.snapshot_steps[-1], trajectory.states[-1]


def _lead_period(
    lead: Sequence[float], end: int, max_period: int, tol: float = PERIODICITY_TOLERANCE
) -> Optional[int]:
    for period in range(1, max_period + 1):
        if end < 3 * period:
            break
        recent = lead[end] - lead[end - period]
        middle = lead[end - period] - lead[end - 2 * period]
        oldest = lead[end - 2 * period] - lead[end - 3 * period]
        if abs(recent - middle) <= tol and abs(middle - oldest) <= tol:
            return period
    return None


def _periodic_start(lead: Sequence[float], end: int, period: int, floor: int, tol: float) -> int:
    """Earliest step, one period at a time back from ``end``, whose lead increment still matches the last one."""
    recent = lead[end] - lead[end - period]
    start = end - period
    while start - period >= floor and abs(lead[start] - lead[start - period] - recent) <= tol:
        start -= period
    return start


def estimate_growth_rate(trajectory: Trajectory, burn_in: int = 0) -> GrowthEstimate:
    """Average speed of the lead car after ``burn_in`` steps.

    When a period T is known the window covers only the periodic regime:
    whole periods back from the last step, as long as the lead car's
    increment over one period stays the same and the burn-in is respected.
    """
    end = trajectory.step
    period = trajectory.period
    if period is None:
        period = _lead_period(trajectory.lead, end, max(8, 4 * trajectory.ring.n))
        if period is not None and end - burn_in < period:
            period = None
    if period is not None:
        start = _periodic_start(trajectory.lead, end, period, burn_in, PERIODICITY_TOLERANCE)
    else:
        if end <= burn_in:
            raise DomainError(f"Trajectory has {end} steps, not more than burn-in {burn_in}")
        start = burn_in

    mu = (trajectory.lead[end] - trajectory.lead[start]) / (end - start)

    snap_step, snap_state = _state_at_or_after(trajectory, start)
    if snap_step < end:
        rates = (trajectory.final_state - snap_state) / (end - snap_step)
        spread = float(np.ptp(rates))
    else:
        spread = 0.0
    return GrowthEstimate(mu=float(mu), spread=spread, start=start, end=end)


def ring_positions(x: Sequence[float], m: float) -> np.ndarray:
    positions = np.mod(np.asarray(x, dtype=float), m)
    return np.where(positions >= m, 0.0, positions)


def _stats_from_gaps(gaps: np.ndarray, m: float, step: int) -> GapStats:
    target = m / gaps.shape[0]
    return GapStats(gaps=gaps, max_dev=float(np.max(np.abs(gaps - target))), step=step)


def gap_stats(positions: Sequence[float], m: float, step: int = 0) -> GapStats:
    """Distances from each car to the car ahead, for positions already reduced mod m."""
    p = np.asarray(positions, dtype=float)
    if p.shape[0] < 1:
        raise DimensionError("gap statistics need at least one car")
    gaps = np.empty_like(p)
    gaps[:-1] = np.mod(p[1:] - p[:-1], m)
    gaps[-1] = m - gaps[:-1].sum()
    return _stats_from_gaps(gaps, m, step)


def gap_stats_from_state(x: Sequence[float], m: float, step: int = 0) -> GapStats:
    state = np.asarray(x, dtype=float)
    gaps = np.append(np.diff(state), state[0] + m - state[-1])
    return _stats_from_gaps(gaps, m, step)


def snapshot_frame(trajectory: Trajectory) -> pd.DataFrame:
    rows = []
    m = trajectory.ring.m
    for step, state in zip(trajectory.snapshot_steps, trajectory.states):
        positions = ring_positions(state, m)
        for car, (position, cumulative) in enumerate(zip(positions, state), start=1):
            rows.append({"step": step, "car": car, "position": position, "cumulative": cumulative})
    return pd.DataFrame(rows, columns=["step", "car", "position", "cumulative"])


def summarize(trajectory: Trajectory, burn_in: int) -> Dict[str, Any]:
    estimate = estimate_growth_rate(trajectory, burn_in)
    closed = trajectory.model.closed_form_speed(trajectory.ring.density).mu
    gaps = gap_stats_from_state(trajectory.final_state, trajectory.ring.m, trajectory.step)
    return {
        "mu_estimate": estimate.mu,
        "mu_closed_form": closed,
        "abs_error": abs(estimate.mu - closed),
        "steps_used": trajectory.step,
        "seed": trajectory.seed,
        "init": trajectory.init,
        "period": trajectory.period,
        "spread": estimate.spread,
        "max_gap_dev": gaps.max_dev,
    }


def simulate(
    model: TrafficModel,
    ring: RingConfig,
    steps: int,
    init: str = "uniform",
    seed: Optional[int] = DEFAULT_SEED,
    stride: Optional[int] = None,
    stop_when_periodic: bool = False,
) -> Trajectory:
    trajectory = run_trajectory(
        model,
        ring,
        initial_state(init, ring, seed),
        steps,
        stride=stride,
        stop_when_periodic=stop_when_periodic,
    )
    trajectory.init = init
    trajectory.seed = seed
    logging.info(
        "Simulated %s model on ring n=%s m=%s for %s steps from %s start",
        model.kind,
        ring.n,
        ring.m,
        trajectory.step,
        init,
    )
    return trajectory


def phase_report(
    model: TrafficModel,
    rings: Sequence[RingConfig],
    steps: int,
    init: str = "platoon",
    tol: float = 1e-3,
) -> Dict[str, Any]:
    """Final gap deviation per density and the density interval where cars spread out uniformly."""
    rows = []
    for ring in rings:
        trajectory = simulate(model, ring, steps, init=init, stride=steps)
        stats = gap_stats_from_state(trajectory.final_state, ring.m, trajectory.step)
        rows.append({"density": ring.d, "max_dev": stats.max_dev, "uniform": stats.max_dev <= tol})
    uniform = [row["density"] for row in rows if row["uniform"]]
    return {
        "runs": rows,
        "uniform_from": min(uniform) if uniform else None,
        "uniform_to": max(uniform) if uniform else None,
    }


__all__ = [
    "GapStats",
    "GrowthEstimate",
    "Trajectory",
    "default_stride",
    "estimate_growth_rate",
    "gap_stats",
    "gap_stats_from_state",
    "initial_state",
    "phase_report",
    "ring_positions",
    "run_trajectory",
    "simulate",
    "snapshot_frame",
    "summarize",
]
