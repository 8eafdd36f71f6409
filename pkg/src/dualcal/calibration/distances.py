"""Calibration functions ``F = g^{-1}`` for the supported distances.

Each distance exposes ``F(u)`` (the weight ratio ``w/d`` as a function of
the linear score ``u = x @ lambda``), its derivative, its antiderivative
``G`` with ``G(0) = 0`` (the per-unit dual objective) and a validity check
on ``u`` used for step damping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

DISTANCE_NAMES = ("euclidean", "raking", "logit", "kullback_leibler")

_ALIASES = {
    "euc": "euclidean", "linear": "euclidean", "chi2": "euclidean",
    "rak": "raking", "exponential": "raking",
    "log": "logit",
    "kl": "kullback_leibler", "kullback-leibler": "kullback_leibler",
}

# exp overflows just above 709
_MAX_EXP = 700.0


@dataclass(frozen=True)
class Distance:
    kind: str = "euclidean"
    lower: float = 0.3
    upper: float = 3.0

    def __post_init__(self):
        if self.kind not in DISTANCE_NAMES:
            raise ValueError(f"unknown distance {self.kind!r}")
        if self.kind == "logit" and not (0 < self.lower < 1 < self.upper):
            raise ValueError("logit bounds must satisfy 0 < L < 1 < U")

    @property
    def _A(self) -> float:
        L, U = self.lower, self.upper
        return (U - L) / ((1 - L) * (U - 1))

    def _logit_score(self, u):
        # F = L + (U - L) * expit(v) with v = log((1-L)/(U-1)) + A u
        L, U = self.lower, self.upper
        return np.log((1 - L) / (U - 1)) + self._A * u

    def valid(self, u: np.ndarray) -> bool:
        if not np.all(np.isfinite(u)):
            return False
        if self.kind == "kullback_leibler":
            return bool(np.all(u < 1.0))
        if self.kind == "raking":
            return bool(np.all(u < _MAX_EXP))
        return True

    def F(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "euclidean":
            return 1.0 + u
        if self.kind == "raking":
            return np.exp(u)
        if self.kind == "kullback_leibler":
            return 1.0 / (1.0 - u)
        return self.lower + (self.upper - self.lower) * expit(self._logit_score(u))

    def dF(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "euclidean":
            return np.ones_like(u)
        if self.kind == "raking":
            return np.exp(u)
        if self.kind == "kullback_leibler":
            return 1.0 / (1.0 - u) ** 2
        p = expit(self._logit_score(u))
        return (self.upper - self.lower) * self._A * p * (1.0 - p)

    def G(self, u: np.ndarray) -> np.ndarray:
        """Antiderivative of ``F`` vanishing at 0."""
        u = np.asarray(u, dtype=float)
        if self.kind == "euclidean":
            return u + 0.5 * u * u
        if self.kind == "raking":
            return np.expm1(u)
        if self.kind == "kullback_leibler":
            return -np.log1p(-u)
        L, U, A = self.lower, self.upper, self._A
        v0 = np.log((1 - L) / (U - 1))
        return L * u + (U - L) / A * (np.logaddexp(0.0, self._logit_score(u))
                                      - np.logaddexp(0.0, v0))


def get_distance(kind, bounds: tuple[float, float] | None = None) -> Distance:
    """Resolve a distance name (or pass a :class:`Distance` through)."""
    if isinstance(kind, Distance):
        return kind
    name = _ALIASES.get(str(kind).lower(), str(kind).lower())
    if bounds is None:
        return Distance(name)
    return Distance(name, float(bounds[0]), float(bounds[1]))
