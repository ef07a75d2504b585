"""Fundamental diagrams: density -> flow as a min (or min of maxes) of affine segments."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .constants import DEFAULT_GRID_POINTS, DEFAULT_SEED, TOLERANCE, TRIANGLE_TOLERANCE
from .errors import ConfigError, DomainError, ModelSpecError
from .models import (
    ControlModel,
    ControlSet,
    GameControlSet,
    GameModel,
    MinPlusModel,
    TrafficModel,
    Violation,
    validate_control_set,
)
from .ring import RingConfig
from .simulate import estimate_growth_rate, simulate


@dataclass(frozen=True)
class AffineSegment:
    slope: float
    intercept: float

    def at(self, d: float) -> float:
        return self.slope * d + self.intercept


Branch = Tuple[AffineSegment, ...]


@dataclass(frozen=True)
class DiagramCurve:
    branches: Tuple[Branch, ...]
    samples: Tuple[Tuple[float, float], ...] = field(default=(), compare=False)

    @classmethod
    def minimum(cls, segments: Sequence[Tuple[float, float]]) -> "DiagramCurve":
        return cls(tuple((AffineSegment(float(a), float(b)),) for a, b in segments))

    @classmethod
    def min_max(cls, branches: Sequence[Sequence[Tuple[float, float]]]) -> "DiagramCurve":
        return cls(tuple(tuple(AffineSegment(float(a), float(b)) for a, b in branch) for branch in branches))

    @property
    def kind(self) -> str:
        return "min" if all(len(branch) == 1 for branch in self.branches) else "minmax"

    @property
    def segments(self) -> List[AffineSegment]:
        return [segment for branch in self.branches for segment in branch]

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(branch) for branch in self.branches)

    def sample(self, grid: Sequence[float], clamp_zero: bool = False) -> "DiagramCurve":
        flows = evaluate_grid(self, grid, clamp_zero=clamp_zero)
        return DiagramCurve(self.branches, tuple(zip(map(float, grid), map(float, flows))))


def _check_range(d: float) -> None:
    if not 0.0 <= d <= 1.0:
        raise DomainError(f"Density {d} outside [0, 1]")


def evaluate(curve: DiagramCurve, d: float, clamp_zero: bool = False) -> float:
    _check_range(d)
    flow = min(max(segment.at(d) for segment in branch) for branch in curve.branches)
    return max(flow, 0.0) if clamp_zero else flow


def evaluate_grid(curve: DiagramCurve, grid: Sequence[float], clamp_zero: bool = False) -> np.ndarray:
    d = np.asarray(grid, dtype=float)
    if d.size and (d.min() < 0.0 or d.max() > 1.0):
        raise DomainError("Density grid must lie in [0, 1]")
    branch_values = [
        np.max(np.vstack([segment.slope * d + segment.intercept for segment in branch]), axis=0)
        for branch in curve.branches
    ]
    flows = np.min(np.vstack(branch_values), axis=0)
    return np.maximum(flows, 0.0) if clamp_zero else flows


def density_grid(points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    if points < 2:
        raise DomainError("A density grid needs at least two points")
    return np.linspace(0.0, 1.0, points)


def diagram_minplus(v: float, sigma: float) -> DiagramCurve:
    if v < 0 or sigma < 0:
        raise DomainError(f"Speed and safety distance must be non-negative, got v={v}, sigma={sigma}")
    return DiagramCurve.minimum([(v, 0.0), (-sigma, 1.0)])


def diagram_control(U: ControlSet) -> DiagramCurve:
    validate_control_set(U).raise_if_invalid("control set")
    return DiagramCurve.minimum([(c.alpha, c.beta) for c in U.controls])


def diagram_game(G: GameControlSet) -> DiagramCurve:
    validate_control_set(G).raise_if_invalid("game")
    return DiagramCurve.min_max([[(c.alpha, c.beta) for c in row.options] for row in G.rows])


def diagram_for(model: TrafficModel) -> DiagramCurve:
    if isinstance(model, MinPlusModel):
        return diagram_minplus(model.v, model.sigma)
    if isinstance(model, ControlModel):
        return diagram_control(model.controls)
    if isinstance(model, GameModel):
        return diagram_game(model.game)
    raise TypeError(f"No diagram for {type(model).__name__}")


def curve_from_spec(payload: Dict[str, Any]) -> DiagramCurve:
    """Reads a curve from model-spec JSON without the model's validity rules, or from {"branches": [...]} sizes."""
    kind = payload.get("type")
    try:
        if kind == "minplus":
            return DiagramCurve.minimum([(float(payload["v"]), 0.0), (-float(payload["sigma"]), 1.0)])
        if kind == "control":
            return DiagramCurve.minimum([(c["alpha"], c["beta"]) for c in payload["controls"]])
        if kind == "game":
            return DiagramCurve.min_max(
                [[(c["alpha"], c["beta"]) for c in row["options"]] for row in payload["rows"]]
            )
    except (KeyError, TypeError, ValueError) as err:
        raise ModelSpecError(f"Malformed {kind} curve spec", [Violation("malformed", str(err))]) from err
    raise ModelSpecError(
        f"Cannot read a curve from spec type {kind!r}",
        [Violation("unknown_type", "type must be minplus, control or game", "type")],
    )


def curve_to_spec(curve: DiagramCurve, clamp: bool = True) -> Dict[str, Any]:
    def control(segment: AffineSegment) -> Dict[str, float]:
        beta = segment.intercept
        if clamp and not 0.0 <= beta <= 1.0:
            clamped = min(max(beta, 0.0), 1.0)
            logging.warning("Clamping fitted intercept %.6g to %.6g", beta, clamped)
            beta = clamped
        return {"alpha": float(segment.slope), "beta": float(beta)}

    if curve.kind == "min":
        return {"type": "control", "controls": [control(branch[0]) for branch in curve.branches]}
    return {
        "type": "game",
        "rows": [
            {"u": f"u{index + 1}", "options": [control(segment) for segment in branch]}
            for index, branch in enumerate(curve.branches)
        ],
    }


def active_segment(curve: DiagramCurve, d: float) -> Tuple[int, int]:
    """(branch, option) attaining the flow at d; lowest index on ties."""
    _check_range(d)
    branch_values = []
    options = []
    for branch in curve.branches:
        values = [segment.at(d) for segment in branch]
        w = int(np.argmax(values))
        options.append(w)
        branch_values.append(values[w])
    u = int(np.argmin(branch_values))
    return u, options[u]


def breakpoints(curve: DiagramCurve, resolution: int = 2001) -> List[float]:
    """Densities where the active segment changes (phase boundaries)."""
    grid = np.linspace(0.0, 1.0, resolution)
    labels = [active_segment(curve, float(d)) for d in grid]
    result: List[float] = []
    for left, right, d_left, d_right in zip(labels, labels[1:], grid, grid[1:]):
        if left == right:
            continue
        first = curve.branches[left[0]][left[1]]
        second = curve.branches[right[0]][right[1]]
        if first.slope != second.slope:
            crossing = (second.intercept - first.intercept) / (first.slope - second.slope)
            if d_left - TOLERANCE <= crossing <= d_right + TOLERANCE:
                result.append(float(crossing))
                continue
        result.append(float((d_left + d_right) / 2))
    return result


def jam_density(curve: DiagramCurve, grid: Optional[Sequence[float]] = None) -> Optional[float]:
    d = density_grid() if grid is None else np.asarray(grid, dtype=float)
    d = d[d > 0]
    flows = evaluate_grid(curve, d)
    jammed = np.nonzero(flows <= TRIANGLE_TOLERANCE)[0]
    return float(d[jammed[0]]) if jammed.size else None


def fenchel_check(U: ControlSet, grid: Sequence[float]) -> float:
    """Max |f(d) - g*(d)| where g(α_u) = -β_u and g*(d) = min_v (d v - g(v))."""
    d = np.asarray(grid, dtype=float)
    alphas = U.alphas
    betas = U.betas
    slopes = np.unique(alphas)
    g = np.array([-betas[alphas == v].min() for v in slopes])
    conjugate = np.min(d[:, np.newaxis] * slopes[np.newaxis, :] - g[np.newaxis, :], axis=1)
    flows = evaluate_grid(diagram_control(U), d)
    return float(np.max(np.abs(flows - conjugate))) if d.size else 0.0


@dataclass(frozen=True)
class TriangleCheck:
    ok: bool
    worst_density: float
    worst_excess: float


def triangle_check(curve: DiagramCurve, grid: Sequence[float]) -> TriangleCheck:
    d = np.asarray(grid, dtype=float)
    excess = evaluate_grid(curve, d) - (1.0 - d)
    worst = int(np.argmax(excess))
    return TriangleCheck(
        ok=bool(excess[worst] <= TRIANGLE_TOLERANCE),
        worst_density=float(d[worst]),
        worst_excess=float(excess[worst]),
    )


@dataclass(frozen=True)
class MeasuredDiagram:
    points: np.ndarray
    free_speed_ref: Tuple[float, float]

    @property
    def free_speed(self) -> float:
        d_low, flow = self.free_speed_ref
        if d_low <= 0:
            raise DomainError(f"Free-speed reference density must be positive, got {d_low}")
        if flow <= 0:
            raise DomainError(f"Free-speed reference flow must be positive, got {flow}")
        return flow / d_low

    @property
    def scale(self) -> float:
        # flow of a full road moving at free speed
        return self.free_speed * 1.0


def normalize_measurements(raw: MeasuredDiagram) -> np.ndarray:
    points = np.asarray(raw.points, dtype=float).reshape(-1, 2)
    occupancy, flow = points[:, 0], points[:, 1]
    if occupancy.size and (occupancy.min() < 0.0 or occupancy.max() > 1.0):
        raise DomainError("Occupancies must lie in [0, 1]")
    if flow.size and flow.min() < 0.0:
        raise DomainError("Flows must be non-negative")
    if flow.size and not flow.any():
        raise DomainError("Flow column is all zero; nothing to normalize")
    scale = raw.scale
    logging.info("Normalizing %s points by a flow scale of %.6g", occupancy.size, scale)
    return np.column_stack([occupancy, flow / scale])


def load_measurements(path: Union[str, Path]) -> np.ndarray:
    frame = pd.read_csv(path)
    missing = {"occupancy", "flow"} - set(frame.columns)
    if missing:
        raise ConfigError(f"{path} is missing column(s): {', '.join(sorted(missing))}")
    return frame[["occupancy", "flow"]].to_numpy(dtype=float)


@dataclass(frozen=True)
class SweepPoint:
    n: int
    m: int
    density: float
    flow_closed_form: float
    flow_simulated: float
    mu_estimate: float
    steps_used: int


def _sweep_one(
    model: TrafficModel,
    curve: DiagramCurve,
    ring: RingConfig,
    steps: int,
    burn_in: int,
    init: str,
    seed: Optional[int],
) -> SweepPoint:
    trajectory = simulate(model, ring, steps, init=init, seed=seed, stride=steps, stop_when_periodic=True)
    estimate = estimate_growth_rate(trajectory, min(burn_in, max(trajectory.step - 1, 0)))
    return SweepPoint(
        n=ring.n,
        m=ring.m,
        density=ring.d,
        flow_closed_form=evaluate(curve, ring.d),
        flow_simulated=ring.d * estimate.mu,
        mu_estimate=estimate.mu,
        steps_used=trajectory.step,
    )


def simulated_sweep(
    model: TrafficModel,
    rings: Sequence[RingConfig],
    steps: int,
    burn_in: int = 0,
    init: str = "uniform",
    seed: Optional[int] = DEFAULT_SEED,
    workers: int = 1,
) -> List[SweepPoint]:
    """Simulates one ring per density and reports flow = density x estimated speed."""
    curve = diagram_for(model)
    logging.info("Sweeping %s densities for the %s model", len(rings), model.kind)
    if workers <= 1:
        return [_sweep_one(model, curve, ring, steps, burn_in, init, seed) for ring in rings]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_one, model, curve, ring, steps, burn_in, init, seed) for ring in rings]
        return [future.result() for future in futures]


def diagram_frame(
    curve: DiagramCurve,
    grid: Sequence[float],
    simulated: Optional[Sequence[float]] = None,
    clamp_zero: bool = False,
) -> pd.DataFrame:
    d = np.asarray(grid, dtype=float)
    frame = pd.DataFrame(
        {
            "density": d,
            "flow_closed_form": evaluate_grid(curve, d, clamp_zero=clamp_zero),
            "flow_simulated": np.full(d.shape, np.nan) if simulated is None else np.asarray(simulated, dtype=float),
        }
    )
    if simulated is not None and clamp_zero:
        frame["flow_simulated"] = frame["flow_simulated"].clip(lower=0.0)
    return frame


def sweep_frame(curve: DiagramCurve, points: Sequence[SweepPoint], clamp_zero: bool = False) -> pd.DataFrame:
    return diagram_frame(
        curve,
        [p.density for p in points],
        [p.flow_simulated for p in points],
        clamp_zero=clamp_zero,
    )


__all__ = [
    "AffineSegment",
    "DiagramCurve",
    "MeasuredDiagram",
    "SweepPoint",
    "TriangleCheck",
    "active_segment",
    "breakpoints",
    "curve_from_spec",
    "curve_to_spec",
    "density_grid",
    "diagram_control",
    "diagram_for",
    "diagram_frame",
    "diagram_game",
    "diagram_minplus",
    "evaluate",
    "evaluate_grid",
    "fenchel_check",
    "jam_density",
    "load_measurements",
    "normalize_measurements",
    "simulated_sweep",
    "sweep_frame",
    "triangle_check",
]
