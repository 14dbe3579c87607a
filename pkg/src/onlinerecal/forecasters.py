"""Baseline (uncalibrated) forecasters."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

TINY_FLOOR = 1e-12


class LinearKind(str, enum.Enum):
    LOGISTIC = "logistic"
    HINGE = "hinge"


def sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(s, dtype=float)))


@dataclass
class OnlineLinearForecaster:
    """Online linear model trained by l1-regularized subgradient descent.

    ``LOGISTIC`` maps the score through the sigmoid. ``HINGE`` is an online
    linear SVM whose scores are normalized as ``(s + m) / (2 m)``, with ``m``
    the running maximum of ``|s|``.

    The step size at update ``t`` is ``learning_rate / sqrt(t)``; after each
    gradient step the weights are soft-thresholded by ``step * l1_strength``.
    """

    dim: int
    learning_rate: float = 0.1
    l1_strength: float = 1e-4
    kind: LinearKind = LinearKind.LOGISTIC
    weights: np.ndarray = field(default=None)
    running_abs_max: float = 0.0
    updates: int = 0

    def __post_init__(self):
        self.kind = LinearKind(self.kind)
        if self.learning_rate < 0 or self.l1_strength < 0:
            raise DomainError("learning_rate and l1_strength must be nonnegative")
        if self.weights is None:
            self.weights = np.zeros(self.dim)
        self.weights = np.asarray(self.weights, dtype=float).copy()
        if self.weights.shape != (self.dim,):
            raise DomainError(f"weights must have shape ({self.dim},), got {self.weights.shape}")

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DomainError(f"feature vector must have shape ({self.dim},), got {x.shape}")
        return x

    def predict(self, x) -> tuple[float, float]:
        """Return ``(score, probability)``. For HINGE this also updates ``m``."""
        s = float(self.weights @ self._check_x(x))
        if self.kind is LinearKind.LOGISTIC:
            return s, float(sigmoid(s))
        self.running_abs_max = max(self.running_abs_max, abs(s), TINY_FLOOR)
        m = self.running_abs_max
        return s, min(max((s + m) / (2 * m), 0.0), 1.0)

    def update(self, x, y: int) -> None:
        x = self._check_x(x)
        if y not in (0, 1):
            raise DomainError(f"outcome must be 0 or 1, got {y!r}")
        self.updates += 1
        step = self.learning_rate / math.sqrt(self.updates)
        if step == 0.0:
            return
        s = float(self.weights @ x)
        if self.kind is LinearKind.LOGISTIC:
            grad = (float(sigmoid(s)) - y) * x
        else:
            label = 2 * y - 1
            grad = -label * x if label * s < 1 else np.zeros_like(x)
        w = self.weights - step * grad
        shrink = step * self.l1_strength
        self.weights = np.sign(w) * np.maximum(np.abs(w) - shrink, 0.0)


@dataclass(frozen=True)
class TwoValueExpert:
    """Clairvoyant expert: ``high`` when the coming outcome is 1, else ``low``."""

    low: float = 0.3
    high: float = 0.7

    def __post_init__(self):
        if not (0.0 <= self.low < self.high <= 1.0):
            raise DomainError(f"need 0 <= low < high <= 1, got {self.low}, {self.high}")

    def predict(self, y_next: int) -> float:
        return self.high if y_next == 1 else self.low


def two_value_predict(expert: TwoValueExpert, y_next: int) -> float:
    return expert.predict(y_next)


def noise_predict(rng: np.random.Generator) -> float:
    """A coin-flip forecast: 0.0 or 1.0 with equal probability."""
    return float(rng.integers(0, 2))
