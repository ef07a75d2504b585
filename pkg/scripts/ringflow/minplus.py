"""Min-plus semiring scalars and matrices.

Entries are stored as float arrays where ``numpy.inf`` encodes the semiring
zero ε; -inf and NaN are rejected on construction, and every operation masks
ε explicitly before doing arithmetic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .constants import TOLERANCE
from .errors import DimensionError, GraphError, NonConvergenceError, NumericalError
from .ring import RingConfig


class _Epsilon:
    _instance = None

    def __new__(cls) -> "_Epsilon":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ε"

    def __reduce__(self):
        return (_Epsilon, ())


EPS = _Epsilon()


@dataclass(frozen=True)
class MinPlusScalar:
    value: Union[float, _Epsilon]

    @classmethod
    def lift(cls, raw: Any) -> "MinPlusScalar":
        if isinstance(raw, MinPlusScalar):
            return raw
        if raw is None or raw is EPS or (isinstance(raw, str) and raw.strip().lower() in ("inf", "ε", "eps")):
            return EPSILON
        value = float(raw)
        if np.isnan(value) or value == -np.inf:
            raise ValueError(f"{raw!r} is not a min-plus scalar")
        if value == np.inf:
            return EPSILON
        return cls(value)

    @property
    def is_epsilon(self) -> bool:
        return self.value is EPS

    def as_float(self) -> float:
        return np.inf if self.is_epsilon else float(self.value)

    def __add__(self, other: Any) -> "MinPlusScalar":
        other = MinPlusScalar.lift(other)
        if self.is_epsilon:
            return other
        if other.is_epsilon:
            return self
        return self if self.value <= other.value else other

    __radd__ = __add__

    def __mul__(self, other: Any) -> "MinPlusScalar":
        other = MinPlusScalar.lift(other)
        if self.is_epsilon or other.is_epsilon:
            return EPSILON
        return MinPlusScalar(self.value + other.value)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return "ε" if self.is_epsilon else f"{self.value:g}"


EPSILON = MinPlusScalar(EPS)
E = MinPlusScalar(0.0)


def oplus(a: Any, b: Any) -> MinPlusScalar:
    return MinPlusScalar.lift(a) + b


def otimes(a: Any, b: Any) -> MinPlusScalar:
    return MinPlusScalar.lift(a) * b


def as_vector(values: Iterable[Any]) -> np.ndarray:
    return np.array([MinPlusScalar.lift(v).as_float() for v in values], dtype=float)


def to_scalars(values: np.ndarray) -> List[MinPlusScalar]:
    return [MinPlusScalar.lift(v) for v in values]


class MinPlusMatrix:
    """Square min-plus matrix; entry (i, j) is the weight of the arc j -> i of G(A)."""

    def __init__(self, entries: Union[np.ndarray, Sequence[Sequence[Any]]]):
        if isinstance(entries, np.ndarray):
            weights = entries.astype(float, copy=True)
        else:
            weights = np.array([as_vector(row) for row in entries], dtype=float)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1] or weights.shape[0] == 0:
            raise DimensionError(f"Min-plus matrix must be square and non-empty, got shape {weights.shape}")
        if np.isnan(weights).any() or (weights == -np.inf).any():
            raise ValueError("Min-plus matrix entries must be finite or ε")
        weights.setflags(write=False)
        self._weights = weights

    @property
    def n(self) -> int:
        return self._weights.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def arc_mask(self) -> np.ndarray:
        return np.isfinite(self._weights)

    def entry(self, i: int, j: int) -> MinPlusScalar:
        return MinPlusScalar.lift(self._weights[i, j])

    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        rows, cols = np.nonzero(self.arc_mask)
        for i, j in zip(rows.tolist(), cols.tolist()):
            graph.add_edge(j, i, weight=float(self._weights[i, j]))
        return graph

    def to_json(self) -> List[List[Union[float, str]]]:
        return [["inf" if np.isinf(w) else float(w) for w in row] for row in self._weights]

    @classmethod
    def from_json(cls, payload: Sequence[Sequence[Any]]) -> "MinPlusMatrix":
        return cls(payload)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MinPlusMatrix):
            return NotImplemented
        return np.array_equal(self._weights, other._weights)

    def __repr__(self) -> str:
        return f"MinPlusMatrix({self.to_json()})"


def _matvec_array(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    finite_x = np.isfinite(x)
    mask = np.isfinite(weights) & finite_x[np.newaxis, :]
    terms = np.where(mask, weights + np.where(finite_x, x, 0.0)[np.newaxis, :], np.inf)
    return terms.min(axis=1)


def matvec(A: MinPlusMatrix, x: Sequence[Any]) -> List[MinPlusScalar]:
    vector = as_vector(x)
    if vector.shape[0] != A.n:
        raise DimensionError(f"Vector of length {vector.shape[0]} does not match matrix dimension {A.n}")
    return to_scalars(_matvec_array(A.weights, vector))


def matmul(A: MinPlusMatrix, B: MinPlusMatrix) -> MinPlusMatrix:
    if A.n != B.n:
        raise DimensionError(f"Cannot multiply {A.n}x{A.n} by {B.n}x{B.n}")
    left = A.weights[:, :, np.newaxis]
    right = B.weights[np.newaxis, :, :]
    mask = np.isfinite(left) & np.isfinite(right)
    terms = np.where(mask, np.where(np.isfinite(left), left, 0.0) + np.where(np.isfinite(right), right, 0.0), np.inf)
    return MinPlusMatrix(terms.min(axis=1))


def identity(n: int) -> MinPlusMatrix:
    weights = np.full((n, n), np.inf)
    np.fill_diagonal(weights, 0.0)
    return MinPlusMatrix(weights)


def matrix_power(A: MinPlusMatrix, k: int) -> MinPlusMatrix:
    if k < 0:
        raise ValueError("Min-plus matrix powers are defined for k >= 0 only")
    result = identity(A.n)
    base = A
    while k:
        if k & 1:
            result = matmul(result, base)
        base = matmul(base, base)
        k >>= 1
    return result


def is_strongly_connected(A: MinPlusMatrix) -> bool:
    """True when every node of G(A) reaches every other and lies on a circuit."""
    graph = A.graph()
    if graph.number_of_edges() == 0:
        return False
    return nx.is_strongly_connected(graph)


def _require_strongly_connected(A: MinPlusMatrix) -> None:
    if not is_strongly_connected(A):
        raise GraphError("no unique eigenvalue: the graph of the matrix is not strongly connected")


def karp_eigenvalue(A: MinPlusMatrix) -> float:
    """Minimum cycle mean of G(A) by Karp's dynamic program from node 0."""
    _require_strongly_connected(A)
    n = A.n
    walks = np.full((n + 1, n), np.inf)
    walks[0, 0] = 0.0
    for k in range(n):
        walks[k + 1] = _matvec_array(A.weights, walks[k])

    last = walks[n]
    usable = np.isfinite(walks[:n]) & np.isfinite(last)[np.newaxis, :]
    lengths = (n - np.arange(n, dtype=float))[:, np.newaxis]
    with np.errstate(invalid="ignore"):
        ratios = (last[np.newaxis, :] - walks[:n]) / lengths
    ratios = np.where(usable, ratios, -np.inf)
    per_node = ratios.max(axis=0)
    per_node[~np.isfinite(last)] = np.inf

    node = int(np.argmin(per_node))
    logging.debug("Karp minimum attained at node %s", node)
    return float(per_node[node])


def circuit_mean_bruteforce(A: MinPlusMatrix) -> float:
    graph = A.graph()
    best = np.inf
    for cycle in nx.simple_cycles(graph):
        total = 0.0
        for position, source in enumerate(cycle):
            target = cycle[(position + 1) % len(cycle)]
            total += graph[source][target]["weight"]
        best = min(best, total / len(cycle))
    if not np.isfinite(best):
        raise GraphError("no unique eigenvalue: the graph of the matrix has no circuit")
    return float(best)


@dataclass(frozen=True)
class PowerIterationResult:
    mu: float
    K: int
    T: int
    final_state: np.ndarray

    def to_json(self) -> Dict[str, Any]:
        return {"mu": self.mu, "K": self.K, "T": self.T, "final_state": self.final_state.tolist()}


def _state_key(x: np.ndarray, decimals: int) -> tuple:
    return tuple((np.round(x - x[0], decimals) + 0.0).tolist())


def power_iteration(
    A: MinPlusMatrix,
    x0: Sequence[Any],
    max_steps: int = 10_000,
    tol: float = TOLERANCE,
) -> PowerIterationResult:
    """Iterates x <- A ⊗ x until a state repeats up to a constant shift.

    States are normalized by their first component and rounded to ``tol``;
    only those keys and the first component are kept. A repeat at steps
    j < k gives the transient K = j, the period T = k - j and μ from the shift.
    """
    _require_strongly_connected(A)
    x = as_vector(x0)
    if x.shape[0] != A.n:
        raise DimensionError(f"Initial state of length {x.shape[0]} does not match matrix dimension {A.n}")
    if not np.isfinite(x).all():
        raise NumericalError("Initial state must be finite", step=0)

    decimals = max(0, int(round(-np.log10(tol))))
    start = float(x[0])
    seen: Dict[tuple, Tuple[int, float]] = {_state_key(x, decimals): (0, start)}
    for k in range(1, max_steps + 1):
        x = _matvec_array(A.weights, x)
        if not np.isfinite(x).all():
            raise NumericalError(f"Non-finite state at step {k}", step=k)
        key = _state_key(x, decimals)
        if key in seen:
            j, lead = seen[key]
            period = k - j
            mu = (float(x[0]) - lead) / period
            logging.debug("Periodic regime after K=%s steps with period T=%s", j, period)
            return PowerIterationResult(mu=mu, K=j, T=period, final_state=x)
        seen[key] = (k, float(x[0]))

    best = (float(x[0]) - start) / max_steps
    raise NonConvergenceError(
        f"No periodic regime detected within {max_steps} steps",
        best_estimate=best,
        steps=max_steps,
    )


def build_traffic_matrix(v: float, sigma: float, ring: RingConfig) -> MinPlusMatrix:
    if v < 0 or sigma < 0:
        raise ValueError(f"Speed and safety distance must be non-negative, got v={v}, sigma={sigma}")
    n, m = ring.n, ring.m
    if n == 1:
        return MinPlusMatrix([[min(float(v), m - float(sigma))]])
    weights = np.full((n, n), np.inf)
    np.fill_diagonal(weights, float(v))
    for i in range(n - 1):
        weights[i, i + 1] = -float(sigma)
    weights[n - 1, 0] = m - float(sigma)
    return MinPlusMatrix(weights)


__all__ = [
    "E",
    "EPSILON",
    "MinPlusMatrix",
    "MinPlusScalar",
    "PowerIterationResult",
    "as_vector",
    "build_traffic_matrix",
    "circuit_mean_bruteforce",
    "identity",
    "is_strongly_connected",
    "karp_eigenvalue",
    "matmul",
    "matrix_power",
    "matvec",
    "oplus",
    "otimes",
    "power_iteration",
]
