from __future__ import annotations

import math
from dataclasses import dataclass

INF = math.inf


@dataclass(frozen=True, order=True)
class TropicalWeight:
    """(min, +) semiring over costs in nats. Zero is +inf, One is 0."""

    value: float

    @classmethod
    def zero(cls) -> "TropicalWeight":
        return cls(INF)

    @classmethod
    def one(cls) -> "TropicalWeight":
        return cls(0.0)

    def plus(self, other: "TropicalWeight") -> "TropicalWeight":
        return self if self.value <= other.value else other

    def times(self, other: "TropicalWeight") -> "TropicalWeight":
        if self.is_zero() or other.is_zero():
            return TropicalWeight.zero()
        return TropicalWeight(self.value + other.value)

    def is_zero(self) -> bool:
        return self.value == INF

    def approx_equal(self, other: "TropicalWeight", tol: float = 1e-9) -> bool:
        if self.is_zero() or other.is_zero():
            return self.is_zero() and other.is_zero()
        return abs(self.value - other.value) <= tol


def plus(a: float, b: float) -> float:
    return a if a <= b else b


def times(a: float, b: float) -> float:
    if a == INF or b == INF:
        return INF
    return a + b
