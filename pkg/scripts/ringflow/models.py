"""The three traffic operators on the ring and their closed-form average speeds.

Every operator updates car i from its own position x_i and the position of
the car ahead x_{i+1}; the last car follows the first one shifted by a lap
(road length m = n/d).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .constants import A6_GAME_ROWS, THREE_PHASE_CONTROLS, TOLERANCE
from .errors import ConfigError, DimensionError, DomainError, ModelSpecError
from .minplus import MinPlusMatrix, build_traffic_matrix
from .ring import RingConfig

Density = Union[Fraction, float]


@dataclass(frozen=True)
class Control:
    alpha: float
    beta: float

    def to_json(self) -> Dict[str, float]:
        return {"alpha": float(self.alpha), "beta": float(self.beta)}


@dataclass(frozen=True)
class ControlSet:
    controls: Tuple[Control, ...]

    @classmethod
    def of(cls, pairs: Sequence[Tuple[float, float]]) -> "ControlSet":
        return cls(tuple(Control(float(a), float(b)) for a, b in pairs))

    @property
    def alphas(self) -> np.ndarray:
        return np.array([c.alpha for c in self.controls], dtype=float)

    @property
    def betas(self) -> np.ndarray:
        return np.array([c.beta for c in self.controls], dtype=float)

    def as_game(self) -> "GameControlSet":
        return GameControlSet(tuple(GameRow(f"u{k + 1}", (c,)) for k, c in enumerate(self.controls)))


@dataclass(frozen=True)
class GameRow:
    label: str
    options: Tuple[Control, ...]


@dataclass(frozen=True)
class GameControlSet:
    rows: Tuple[GameRow, ...]

    @classmethod
    def of(cls, rows: Sequence[Tuple[str, Sequence[Tuple[float, float]]]]) -> "GameControlSet":
        return cls(
            tuple(
                GameRow(label, tuple(Control(float(a), float(b)) for a, b in options))
                for label, options in rows
            )
        )

    def pairs(self) -> List[Tuple[int, int, Control]]:
        return [(u, w, c) for u, row in enumerate(self.rows) for w, c in enumerate(row.options)]


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    location: str = ""

    def to_json(self) -> Dict[str, str]:
        return {"code": self.code, "message": self.message, "location": self.location}


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self, what: str = "model") -> None:
        if self.violations:
            summary = "; ".join(f"{v.location}: {v.message}" if v.location else v.message for v in self.violations)
            raise ModelSpecError(f"Invalid {what}: {summary}", self.violations)


def _check_controls(controls: Sequence[Tuple[str, Control]]) -> List[Violation]:
    violations: List[Violation] = []
    for location, control in controls:
        if not (np.isfinite(control.alpha) and np.isfinite(control.beta)):
            violations.append(Violation("non_finite", "α and β must be finite", location))
        elif not 0.0 <= control.beta <= 1.0:
            violations.append(Violation("beta_range", f"β out of [0,1] (β={control.beta:g})", location))
    if controls and not any(c.beta > 0 for _, c in controls):
        violations.append(
            Violation("no_coupling", "all β = 0: every arc of the operator graph is a loop")
        )
    return violations


def validate_control_set(U: Union[ControlSet, GameControlSet]) -> ValidationReport:
    """Reports β-range and coupling violations; never raises."""
    if isinstance(U, GameControlSet):
        if not U.rows:
            return ValidationReport((Violation("empty", "game has no minimizer rows"),))
        violations = [
            Violation("empty", "row has no maximizer options", f"rows[{u}]")
            for u, row in enumerate(U.rows)
            if not row.options
        ]
        labelled = [(f"rows[{u}].options[{w}]", c) for u, w, c in U.pairs()]
        return ValidationReport(tuple(violations + _check_controls(labelled)))
    if not U.controls:
        return ValidationReport((Violation("empty", "control set is empty"),))
    labelled = [(f"controls[{k}]", c) for k, c in enumerate(U.controls)]
    return ValidationReport(tuple(_check_controls(labelled)))


def _as_state(x: Sequence[float], ring: RingConfig) -> np.ndarray:
    state = np.asarray(x, dtype=float)
    if state.ndim != 1 or state.shape[0] != ring.n:
        raise DimensionError(f"State of shape {state.shape} does not match ring with n={ring.n}")
    return state


def _affine_terms(alphas: np.ndarray, betas: np.ndarray, x: np.ndarray, ring: RingConfig) -> np.ndarray:
    """Rows α + (1-β) x_i + β x_{i+1}, with the lap cost mβ on the last car."""
    ahead = np.roll(x, -1)
    cost = np.repeat(alphas[:, np.newaxis], x.shape[0], axis=1)
    cost[:, -1] = cost[:, -1] + ring.m * betas
    return cost + (1.0 - betas)[:, np.newaxis] * x[np.newaxis, :] + betas[:, np.newaxis] * ahead[np.newaxis, :]


def apply_control_operator(x: Sequence[float], U: ControlSet, ring: RingConfig) -> np.ndarray:
    state = _as_state(x, ring)
    return _affine_terms(U.alphas, U.betas, state, ring).min(axis=0)


def apply_game_operator(x: Sequence[float], G: GameControlSet, ring: RingConfig) -> np.ndarray:
    state = _as_state(x, ring)
    row_values = []
    for row in G.rows:
        alphas = np.array([c.alpha for c in row.options], dtype=float)
        betas = np.array([c.beta for c in row.options], dtype=float)
        row_values.append(_affine_terms(alphas, betas, state, ring).max(axis=0))
    return np.min(np.vstack(row_values), axis=0)


def safety_midpoint_game(sigma: float) -> GameControlSet:
    return GameControlSet.of([("follow", [(-sigma, 1.0), (0.0, 0.5)])])


def safety_midpoint_rule(y: float, z: float, sigma: float) -> float:
    """max{z - σ, (y + z)/2}: keep the safety distance or close half the gap."""
    row = safety_midpoint_game(sigma).rows[0]
    return max(c.alpha + (1.0 - c.beta) * y + c.beta * z for c in row.options)


@dataclass(frozen=True)
class ClosedFormSpeed:
    mu: float
    argmin: int
    argmax: Optional[int] = None


def _check_density(d: Density) -> None:
    if d <= 0:
        raise DomainError(f"Density must be positive, got {d} (the empty road is trivial)")
    if d > 1:
        raise DomainError(f"Density cannot exceed 1, got {d}")


def _speed_terms(controls: Sequence[Control], d: Density) -> np.ndarray:
    return np.array([c.alpha + c.beta / d for c in controls], dtype=float)


def closed_form_speed_control(U: ControlSet, d: Density) -> ClosedFormSpeed:
    _check_density(d)
    terms = _speed_terms(U.controls, d)
    best = int(np.argmin(terms))
    return ClosedFormSpeed(mu=float(terms[best]), argmin=best)


def closed_form_speed_game(G: GameControlSet, d: Density) -> ClosedFormSpeed:
    _check_density(d)
    row_values = []
    row_argmax = []
    for row in G.rows:
        terms = _speed_terms(row.options, d)
        w = int(np.argmax(terms))
        row_argmax.append(w)
        row_values.append(terms[w])
    u = int(np.argmin(row_values))
    return ClosedFormSpeed(mu=float(row_values[u]), argmin=u, argmax=row_argmax[u])


def uniform_eigenvector(ring: RingConfig) -> np.ndarray:
    return (np.arange(ring.n, dtype=float) * ring.m) / ring.n


class TrafficModel(Protocol):
    kind: str

    def apply(self, x: Sequence[float], ring: RingConfig) -> np.ndarray: ...

    def closed_form_speed(self, d: Density) -> ClosedFormSpeed: ...

    def validate(self) -> ValidationReport: ...

    def to_spec(self) -> Dict[str, Any]: ...


@dataclass(frozen=True)
class MinPlusModel:
    v: float
    sigma: float
    kind: str = field(default="minplus", init=False)

    def apply(self, x: Sequence[float], ring: RingConfig) -> np.ndarray:
        state = _as_state(x, ring)
        ahead = np.roll(state, -1)
        ahead[-1] = ahead[-1] + ring.m
        return np.minimum(self.v + state, ahead - self.sigma)

    def matrix(self, ring: RingConfig) -> MinPlusMatrix:
        return build_traffic_matrix(self.v, self.sigma, ring)

    def as_control_set(self) -> ControlSet:
        return ControlSet.of([(self.v, 0.0), (-self.sigma, 1.0)])

    def closed_form_speed(self, d: Density) -> ClosedFormSpeed:
        return closed_form_speed_control(self.as_control_set(), d)

    def validate(self) -> ValidationReport:
        violations = []
        if not (np.isfinite(self.v) and self.v >= 0):
            violations.append(Violation("speed_range", f"desired speed must be >= 0 (v={self.v:g})", "v"))
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            violations.append(Violation("sigma_range", f"safety distance must be >= 0 (σ={self.sigma:g})", "sigma"))
        elif self.sigma < 1:
            logging.warning("Safety distance σ=%g is shorter than one car length", self.sigma)
        return ValidationReport(tuple(violations))

    def to_spec(self) -> Dict[str, Any]:
        return {"type": self.kind, "v": float(self.v), "sigma": float(self.sigma)}


@dataclass(frozen=True)
class ControlModel:
    controls: ControlSet
    kind: str = field(default="control", init=False)

    def apply(self, x: Sequence[float], ring: RingConfig) -> np.ndarray:
        return apply_control_operator(x, self.controls, ring)

    def closed_form_speed(self, d: Density) -> ClosedFormSpeed:
        return closed_form_speed_control(self.controls, d)

    def validate(self) -> ValidationReport:
        return validate_control_set(self.controls)

    def to_spec(self) -> Dict[str, Any]:
        return {"type": self.kind, "controls": [c.to_json() for c in self.controls.controls]}


@dataclass(frozen=True)
class GameModel:
    game: GameControlSet
    kind: str = field(default="game", init=False)

    def apply(self, x: Sequence[float], ring: RingConfig) -> np.ndarray:
        return apply_game_operator(x, self.game, ring)

    def closed_form_speed(self, d: Density) -> ClosedFormSpeed:
        return closed_form_speed_game(self.game, d)

    def validate(self) -> ValidationReport:
        return validate_control_set(self.game)

    def to_spec(self) -> Dict[str, Any]:
        return {
            "type": self.kind,
            "rows": [
                {"u": row.label, "options": [c.to_json() for c in row.options]}
                for row in self.game.rows
            ],
        }


def verify_eigenpair(
    mu: float,
    x: Sequence[float],
    model: Union[TrafficModel, ControlSet, GameControlSet],
    ring: RingConfig,
    tol: float = TOLERANCE,
) -> bool:
    """True when h(x) = μ + x holds componentwise within ``tol``."""
    if isinstance(model, ControlSet):
        image = apply_control_operator(x, model, ring)
    elif isinstance(model, GameControlSet):
        image = apply_game_operator(x, model, ring)
    else:
        image = model.apply(x, ring)
    state = _as_state(x, ring)
    return bool(np.max(np.abs(image - (mu + state))) <= tol)


def three_phase_controls() -> ControlSet:
    return ControlSet.of(THREE_PHASE_CONTROLS)


def a6_game() -> GameControlSet:
    return GameControlSet.of(A6_GAME_ROWS)


def _parse_control(raw: Any, location: str) -> Control:
    if not isinstance(raw, dict) or "alpha" not in raw or "beta" not in raw:
        raise ModelSpecError(
            f"{location} must be an object with alpha and beta",
            [Violation("malformed", "expected {alpha, beta}", location)],
        )
    try:
        return Control(float(raw["alpha"]), float(raw["beta"]))
    except (TypeError, ValueError) as err:
        raise ModelSpecError(
            f"{location} has non-numeric coefficients",
            [Violation("malformed", str(err), location)],
        ) from err


def model_from_spec(payload: Dict[str, Any]) -> TrafficModel:
    if not isinstance(payload, dict):
        raise ModelSpecError("Model spec must be a JSON object", [Violation("malformed", "not an object")])
    kind = payload.get("type")
    if kind == "minplus":
        try:
            model: TrafficModel = MinPlusModel(float(payload["v"]), float(payload["sigma"]))
        except (KeyError, TypeError, ValueError) as err:
            raise ModelSpecError(
                "minplus spec needs numeric v and sigma",
                [Violation("malformed", f"missing or invalid {err}")],
            ) from err
    elif kind == "control":
        raw_controls = payload.get("controls") or []
        controls = tuple(_parse_control(c, f"controls[{k}]") for k, c in enumerate(raw_controls))
        model = ControlModel(ControlSet(controls))
    elif kind == "game":
        rows = []
        for u, raw_row in enumerate(payload.get("rows") or []):
            if not isinstance(raw_row, dict):
                raise ModelSpecError(f"rows[{u}] must be an object", [Violation("malformed", "not an object", f"rows[{u}]")])
            options = tuple(
                _parse_control(c, f"rows[{u}].options[{w}]")
                for w, c in enumerate(raw_row.get("options") or [])
            )
            rows.append(GameRow(str(raw_row.get("u", f"u{u + 1}")), options))
        model = GameModel(GameControlSet(tuple(rows)))
    else:
        raise ModelSpecError(
            f"Unknown model type {kind!r}",
            [Violation("unknown_type", "type must be minplus, control or game", "type")],
        )
    model.validate().raise_if_invalid(f"{kind} model")
    return model


def load_model(path: Union[str, Path]) -> TrafficModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"Model spec {path} is not valid JSON: {err}") from err
    model = model_from_spec(payload)
    logging.debug("Loaded %s model from %s", model.kind, path)
    return model


__all__ = [
    "ClosedFormSpeed",
    "Control",
    "ControlModel",
    "ControlSet",
    "GameControlSet",
    "GameModel",
    "GameRow",
    "MinPlusModel",
    "RingConfig",
    "TrafficModel",
    "ValidationReport",
    "Violation",
    "a6_game",
    "apply_control_operator",
    "apply_game_operator",
    "closed_form_speed_control",
    "closed_form_speed_game",
    "load_model",
    "model_from_spec",
    "safety_midpoint_game",
    "safety_midpoint_rule",
    "three_phase_controls",
    "uniform_eigenvector",
    "validate_control_set",
    "verify_eigenpair",
]
