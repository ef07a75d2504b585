"""Piecewise-affine fits of measured fundamental diagrams."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import ConvexHull

from .constants import DEFAULT_SEED, MAJORANT_GRID_POINTS, SLOPE_MERGE_TOLERANCE
from .diagram import AffineSegment, DiagramCurve, evaluate_grid
from .errors import DomainError


@dataclass(frozen=True)
class FitResult:
    curve: DiagramCurve
    max_residual: float
    mean_residual: float
    converged: bool = True
    iterations: int = 0
    majorant: Tuple[Tuple[float, float], ...] = field(default=(), compare=False)

    def report(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "converged": self.converged,
            "iterations": self.iterations,
            "segments": len(self.curve.segments),
        }


def _as_points(points: Sequence[Sequence[float]]) -> np.ndarray:
    data = np.asarray(points, dtype=float).reshape(-1, 2)
    if data.shape[0] < 2:
        raise DomainError("Fitting needs at least two points")
    if not np.isfinite(data).all():
        raise DomainError("Fitting points must be finite")
    if np.ptp(data[:, 0]) == 0:
        raise DomainError("Degenerate point cloud: all densities are identical")
    return data


def _residuals(curve: DiagramCurve, data: np.ndarray) -> Tuple[float, float]:
    errors = np.abs(evaluate_grid(curve, data[:, 0]) - data[:, 1])
    return float(errors.max()), float(errors.mean())


def upper_hull(data: np.ndarray) -> np.ndarray:
    """Vertices of the least concave majorant, left to right."""
    order = np.lexsort((-data[:, 1], data[:, 0]))
    ordered = data[order]
    ordered = ordered[np.append(True, np.diff(ordered[:, 0]) > 0)]
    if ordered.shape[0] <= 2:
        return ordered

    # anchors below the cloud; the remaining vertices form the upper chain
    floor = ordered[:, 1].min() - (np.ptp(ordered[:, 1]) + 1.0)
    anchors = np.array([[ordered[0, 0], floor], [ordered[-1, 0], floor]])
    hull = ConvexHull(np.vstack([ordered, anchors]))
    vertices = np.sort(hull.vertices[hull.vertices < ordered.shape[0]])
    return ordered[vertices]


def _hull_segments(hull: np.ndarray) -> List[AffineSegment]:
    runs: List[Tuple[int, int]] = []
    start = 0
    slopes = np.diff(hull[:, 1]) / np.diff(hull[:, 0])
    for edge in range(1, slopes.shape[0] + 1):
        if edge == slopes.shape[0] or abs(slopes[edge] - slopes[start]) > SLOPE_MERGE_TOLERANCE:
            runs.append((start, edge))
            start = edge

    segments = []
    for first, last in runs:
        (x0, y0), (x1, y1) = hull[first], hull[last]
        slope = (y1 - y0) / (x1 - x0)
        segments.append(AffineSegment(float(slope), float(y0 - slope * x0)))
    return segments


def fit_concave(points: Sequence[Sequence[float]], max_segments: int) -> FitResult:
    """Least concave majorant of the points, reduced to at most ``max_segments`` lines."""
    if max_segments < 1:
        raise DomainError("max_segments must be at least 1")
    data = _as_points(points)
    hull = upper_hull(data)
    segments = _hull_segments(hull)

    while len(segments) > max_segments:
        scores = []
        for index in range(len(segments)):
            trial = DiagramCurve(tuple((s,) for k, s in enumerate(segments) if k != index))
            scores.append(_residuals(trial, data)[0])
        drop = int(np.argmin(scores))
        logging.debug("Dropping segment %s (max residual becomes %.3g)", segments[drop], scores[drop])
        segments.pop(drop)

    curve = DiagramCurve(tuple((s,) for s in segments))
    grid = np.linspace(hull[0, 0], hull[-1, 0], MAJORANT_GRID_POINTS)
    majorant = tuple(zip(grid.tolist(), np.interp(grid, hull[:, 0], hull[:, 1]).tolist()))
    max_residual, mean_residual = _residuals(curve, data)
    logging.info("Concave fit with %s segments, max residual %.3g", len(segments), max_residual)
    return FitResult(curve, max_residual, mean_residual, majorant=majorant)


def _unpack(theta: np.ndarray, shape: Tuple[int, ...]) -> DiagramCurve:
    branches = []
    position = 0
    for size in shape:
        branch = tuple(
            AffineSegment(float(theta[2 * k]), float(theta[2 * k + 1])) for k in range(position, position + size)
        )
        branches.append(branch)
        position += size
    return DiagramCurve(tuple(branches))


def _pack(curve: DiagramCurve) -> np.ndarray:
    return np.array([value for s in curve.segments for value in (s.slope, s.intercept)], dtype=float)


def _segment_values(theta: np.ndarray, d: np.ndarray) -> np.ndarray:
    return theta[0::2, np.newaxis] * d[np.newaxis, :] + theta[1::2, np.newaxis]


def _active_centers(theta: np.ndarray, shape: Tuple[int, ...], d: np.ndarray) -> np.ndarray:
    values = _segment_values(theta, d)
    bounds = np.cumsum((0,) + shape)
    branch_best = []
    branch_values = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        block = values[lo:hi]
        branch_best.append(lo + np.argmax(block, axis=0))
        branch_values.append(block.max(axis=0))
    winner = np.argmin(np.vstack(branch_values), axis=0)
    active = np.vstack(branch_best)[winner, np.arange(d.shape[0])]

    centers = np.full(values.shape[0], d.mean())
    for segment in range(values.shape[0]):
        mask = active == segment
        if mask.any():
            centers[segment] = d[mask].mean()
    return centers


def _objective(theta: np.ndarray, shape: Tuple[int, ...], data: np.ndarray) -> Tuple[float, float]:
    values = _segment_values(theta, data[:, 0])
    bounds = np.cumsum((0,) + shape)
    flows = np.min(np.vstack([values[lo:hi].max(axis=0) for lo, hi in zip(bounds[:-1], bounds[1:])]), axis=0)
    errors = np.abs(flows - data[:, 1])
    return float(errors.max()), float(errors.mean())


def _better(candidate: Tuple[float, float], best: Tuple[float, float]) -> bool:
    if candidate[0] < best[0] - 1e-15:
        return True
    return abs(candidate[0] - best[0]) <= 1e-15 and candidate[1] < best[1] - 1e-15


def _heuristic_start(data: np.ndarray, shape: Tuple[int, ...], seed: Optional[int]) -> DiagramCurve:
    rng = np.random.default_rng(seed)
    base = fit_concave(data, max_segments=len(shape)).curve.segments
    branches = []
    for index, size in enumerate(shape):
        anchor = base[min(index, len(base) - 1)]
        options = [anchor]
        for _ in range(size - 1):
            jitter = rng.normal(0.0, 0.01)
            options.append(AffineSegment(anchor.slope, anchor.intercept + jitter))
        branches.append(tuple(options))
    return DiagramCurve(tuple(branches))


def fit_minmax(
    points: Sequence[Sequence[float]],
    template: Union[DiagramCurve, Sequence[int]],
    start: Optional[DiagramCurve] = None,
    max_iter: int = 5000,
    tol: float = 1e-10,
    initial_step: float = 0.02,
    seed: Optional[int] = DEFAULT_SEED,
) -> FitResult:
    """Fits a min-of-max curve with a fixed branch structure by minimizing the max residual.

    Each segment is moved along three directions: its intercept, its slope,
    and a pivot about the centre of the densities where it is active. Moves
    are accepted when they lower (max residual, mean residual)
    lexicographically; the step halves when no move helps.
    """
    data = _as_points(points)
    if isinstance(template, DiagramCurve):
        shape = template.shape
        start = start or template
    else:
        shape = tuple(int(size) for size in template)
    if not shape or min(shape) < 1:
        raise DomainError("Template needs at least one branch and one segment per branch")
    if start is None:
        start = _heuristic_start(data, shape, seed)
    if start.shape != shape:
        raise DomainError(f"Start curve shape {start.shape} does not match template {shape}")

    theta = _pack(start)
    best = _objective(theta, shape, data)
    step = initial_step
    iterations = 0
    d = data[:, 0]
    while step > tol and best[0] > tol and iterations < max_iter:
        iterations += 1
        improved = False
        centers = _active_centers(theta, shape, d)
        for segment in range(len(centers)):
            directions = []
            intercept = np.zeros_like(theta)
            intercept[2 * segment + 1] = 1.0
            slope = np.zeros_like(theta)
            slope[2 * segment] = 1.0
            pivot = slope - centers[segment] * intercept
            directions.extend([intercept, pivot, slope])
            for direction in directions:
                for sign in (1.0, -1.0):
                    candidate = theta + sign * step * direction
                    value = _objective(candidate, shape, data)
                    if _better(value, best):
                        theta, best = candidate, value
                        improved = True
                        break
        if not improved:
            step /= 2.0
        logging.debug("Descent sweep %s: step %.3g, max residual %.3g", iterations, step, best[0])

    converged = step <= tol or best[0] <= tol
    if not converged:
        logging.warning("fit_minmax stopped after %s sweeps with max residual %.3g", iterations, best[0])
    curve = _unpack(theta, shape)
    return FitResult(curve, best[0], best[1], converged=converged, iterations=iterations)


__all__ = ["FitResult", "fit_concave", "fit_minmax", "upper_hull"]
