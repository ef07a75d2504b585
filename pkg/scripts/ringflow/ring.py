from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .errors import ConfigError

DensityLike = Union[Fraction, float, int, str]


@dataclass(frozen=True)
class RingConfig:
    """n unit-length cars on a circular road of length m (in car lengths)."""

    n: int
    m: int

    def __post_init__(self) -> None:
        if int(self.n) != self.n or int(self.m) != self.m:
            raise ConfigError(f"Ring sizes must be integers, got n={self.n}, m={self.m}")
        if self.n < 1:
            raise ConfigError(f"Ring needs at least one car, got n={self.n}")
        if self.m < self.n:
            raise ConfigError(f"Road length m={self.m} cannot hold n={self.n} cars")

    @property
    def density(self) -> Fraction:
        return Fraction(self.n, self.m)

    @property
    def d(self) -> float:
        return self.n / self.m

    @property
    def spacing(self) -> float:
        return self.m / self.n

    @classmethod
    def from_density(
        cls,
        density: DensityLike,
        max_denominator: int = 10_000,
        scale: int = 1,
    ) -> "RingConfig":
        """Builds the ring for a density given as a ratio, a decimal or an ``n/m`` string.

        Decimals are replaced by the closest ratio with denominator at most
        ``max_denominator``; ``scale`` multiplies both n and m.
        """
        if isinstance(density, str):
            text = density.strip()
            if "/" in text:
                n_text, m_text = text.split("/", 1)
                try:
                    ring = cls(int(n_text), int(m_text))
                except ValueError as err:
                    raise ConfigError(f"Invalid density ratio {density!r}") from err
                return cls(ring.n * scale, ring.m * scale)
            try:
                density = float(text)
            except ValueError as err:
                raise ConfigError(f"Invalid density {density!r}") from err

        if isinstance(density, Fraction):
            ratio = density
        else:
            ratio = Fraction(density).limit_denominator(max_denominator)
            if not isinstance(density, int):
                logging.warning(
                    "Density %s replaced by exact ratio %s/%s",
                    density,
                    ratio.numerator,
                    ratio.denominator,
                )
        if ratio <= 0 or ratio > 1:
            raise ConfigError(f"Density must lie in (0, 1], got {density}")
        return cls(ratio.numerator * scale, ratio.denominator * scale)


__all__ = ["DensityLike", "RingConfig"]
