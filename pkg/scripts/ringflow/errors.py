from __future__ import annotations

from typing import Any, Dict, List, Optional

from .constants import EXIT_CONFIG_ERROR, EXIT_NON_CONVERGENCE


class RingflowError(RuntimeError):
    exit_code = EXIT_CONFIG_ERROR

    def details(self) -> Dict[str, Any]:
        return {}


class ConfigError(RingflowError):
    pass


class GraphError(RingflowError):
    pass


class DomainError(RingflowError, ValueError):
    pass


class DimensionError(RingflowError, ValueError):
    pass


class ModelSpecError(RingflowError):
    def __init__(self, message: str, violations: Optional[List[Any]] = None):
        super().__init__(message)
        self.violations = list(violations or [])

    def details(self) -> Dict[str, Any]:
        return {"violations": [v.to_json() for v in self.violations]}


class NonConvergenceError(RingflowError):
    exit_code = EXIT_NON_CONVERGENCE

    def __init__(self, message: str, best_estimate: Optional[float] = None, steps: int = 0):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.steps = steps

    def details(self) -> Dict[str, Any]:
        return {"best_estimate": self.best_estimate, "steps": self.steps}


class NumericalError(RingflowError):
    exit_code = EXIT_NON_CONVERGENCE

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step

    def details(self) -> Dict[str, Any]:
        return {"step": self.step}


__all__ = [
    "ConfigError",
    "DimensionError",
    "DomainError",
    "GraphError",
    "ModelSpecError",
    "NonConvergenceError",
    "NumericalError",
    "RingflowError",
]
