"""Binary losses for accuracy measurement and a grid properness check.

Every loss maps an outcome ``y in {0, 1}`` and a probability ``p in [0, 1]``
to a nonnegative real. Losses are addressable by lowercase names
(``"l2"``, ``"log"``, ``"misclass"``, ``"l1"``, ``"hinge"``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


class LossId(str, enum.Enum):
    L2 = "l2"
    LOG = "log"
    MISCLASS = "misclass"
    L1 = "l1"
    HINGE = "hinge"


@dataclass(frozen=True)
class LossSpec:
    """A loss function descriptor.

    ``log_clamp`` only affects LOG: probabilities are clipped to
    ``[log_clamp, 1 - log_clamp]`` before taking logs, which keeps the loss
    bounded.
    """

    id: LossId
    log_clamp: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "id", LossId(self.id))
        if not (0.0 < self.log_clamp < 0.5):
            raise DomainError(f"log_clamp must lie in (0, 0.5), got {self.log_clamp}")

    @property
    def name(self) -> str:
        return self.id.value

    @property
    def bound_B(self) -> float:
        """Supremum of the loss over y in {0,1} and p in [0,1]."""
        if self.id is LossId.LOG:
            return -math.log(self.log_clamp)
        if self.id is LossId.HINGE:
            return 2.0
        return 1.0

    def __call__(self, y, p):
        return eval_loss(self, y, p)


def get_loss(name: str | LossId | LossSpec, log_clamp: float = 1e-6) -> LossSpec:
    if isinstance(name, LossSpec):
        return name
    try:
        lid = LossId(name.lower() if isinstance(name, str) else name)
    except ValueError:
        valid = ", ".join(l.value for l in LossId)
        raise DomainError(f"unknown loss {name!r}; expected one of {valid}") from None
    return LossSpec(lid, log_clamp)


def _check_y(y) -> None:
    if y not in (0, 1):
        raise DomainError(f"outcome must be 0 or 1, got {y!r}")


def _check_p(p, name: str = "p") -> None:
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {p!r}")


def _raw_loss(lid: LossId, log_clamp: float, y, p):
    # Works elementwise on floats or numpy arrays; no validation.
    if lid is LossId.L2:
        return (y - p) ** 2
    if lid is LossId.L1:
        return np.abs(y - p)
    if lid is LossId.LOG:
        pc = np.clip(p, log_clamp, 1.0 - log_clamp)
        return -(y * np.log(pc) + (1 - y) * np.log1p(-pc))
    if lid is LossId.MISCLASS:
        # ties at 0.5 predict class 1
        return (y != (np.asarray(p) >= 0.5)).astype(float)
    if lid is LossId.HINGE:
        return np.maximum(0.0, 1.0 - (2 * y - 1) * (2 * p - 1))
    raise DomainError(f"unhandled loss {lid!r}")  # pragma: no cover


def eval_loss(spec: LossSpec, y: int, p: float) -> float:
    """Loss of predicting ``p`` when the outcome is ``y``."""
    _check_y(y)
    _check_p(p)
    return float(_raw_loss(spec.id, spec.log_clamp, y, p))


def loss_table(spec: LossSpec, N: int) -> np.ndarray:
    """``(2, N+1)`` array whose entry ``[y, i]`` is the loss of ``i/N`` on ``y``."""
    if N < 1:
        raise DomainError(f"grid size must be positive, got {N}")
    grid = np.arange(N + 1) / N
    return np.stack([_raw_loss(spec.id, spec.log_clamp, 0, grid),
                     _raw_loss(spec.id, spec.log_clamp, 1, grid)]).astype(float)


def expected_loss(spec: LossSpec, p: float, q: float) -> float:
    """Expected loss of reporting ``q`` when ``y ~ Bernoulli(p)``."""
    _check_p(p)
    _check_p(q, "q")
    return p * eval_loss(spec, 1, q) + (1 - p) * eval_loss(spec, 0, q)


def is_proper_on_grid(spec: LossSpec, grid_size: int, tol: float) -> bool:
    """Check properness on the grid ``{i/N}``.

    True iff for every grid ``p`` the truthful report ``q = p`` attains the
    minimum expected loss over grid reports up to ``tol``. This is a finite
    certificate, not a proof over the continuum.
    """
    if grid_size < 2:
        raise DomainError(f"grid_size must be >= 2, got {grid_size}")
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    table = loss_table(spec, grid_size)
    p = np.arange(grid_size + 1) / grid_size
    # risk[a, b]: expected loss of reporting grid point b under Ber(grid point a)
    risk = p[:, None] * table[1][None, :] + (1 - p[:, None]) * table[0][None, :]
    truthful = np.diag(risk)
    return bool(np.all(truthful <= risk.min(axis=1) + tol))
