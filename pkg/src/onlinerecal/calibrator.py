"""Online calibration by internal-regret minimization over a probability grid.

The forecaster plays a distribution over the ``N + 1`` grid points ``i/N``.
Each point is an expert whose loss is ``(y - i/N)**2``. After each outcome the
cumulative internal regret ``R[i, j]`` (what would have been saved by moving
all the mass placed on ``i`` over to ``j``) is updated with the played
distribution. The next distribution is a stationary point of the
regret-matching chain built from the positive parts of ``R``.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from .errors import DomainError, EmptyStateError, NumericFailure, ProtocolError

FIXED_POINT_TOL = 1e-8
STATE_VERSION = 1


def transition_matrix(positive_regret: np.ndarray) -> np.ndarray:
    """Row-stochastic regret-matching matrix.

    Every row is divided by the same constant ``c = max_i S_i``, where
    ``S_i`` is the positive regret mass of row ``i``: ``Q[i, j] = R+[i, j] / c``
    and ``Q[i, i] = 1 - S_i / c``. Rows with no positive regret become pure
    self-loops. Because the constant is shared, a stationary ``mu`` satisfies
    ``sum_i mu_i R+[i, j] = mu_j S_j``, the balance condition that drives
    internal regret to zero.
    """
    pos = np.array(positive_regret, dtype=float)
    np.fill_diagonal(pos, 0.0)
    row_mass = pos.sum(axis=1)
    c = row_mass.max()
    if c <= 0.0:
        return np.eye(pos.shape[0])
    Q = pos / c
    Q[np.diag_indices_from(Q)] = 1.0 - row_mass / c
    return Q


def _residual(mu: np.ndarray, Q: np.ndarray) -> float:
    return float(np.max(np.abs(mu - mu @ Q)))


def _exact_stationary(Q: np.ndarray) -> np.ndarray:
    n = Q.shape[0]
    A = np.vstack([(Q - np.eye(n)).T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    mu, *_ = np.linalg.lstsq(A, b, rcond=None)
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def _power_iterate(mu: np.ndarray, Q: np.ndarray, tol: float, iters: int):
    for _ in range(iters):
        step = mu @ Q
        if np.max(np.abs(mu - step)) <= tol:
            return mu, True
        mu = 0.5 * (mu + step)
        mu /= mu.sum()
    return mu, False


def fixed_point(positive_regret: np.ndarray, start: np.ndarray | None = None,
                tol: float = FIXED_POINT_TOL, max_iter: int | None = None) -> np.ndarray:
    """Stationary distribution of the regret-matching chain.

    Power iteration runs on the lazy chain ``(I + Q) / 2``, which has the same
    stationary points as ``Q`` but no periodicity. A short burst of ``2 (N+1)``
    iterations from ``start`` (uniform by default) handles the common case of a
    warm start that is already nearly stationary. Otherwise an exact
    least-squares solve is tried, and if its residual is still above ``tol`` it
    is polished by up to ``max_iter`` (default ``10 (N+1)**2``) further
    iterations. Convergence means ``||mu - mu Q||_inf <= tol``. An all-zero
    regret matrix returns the uniform distribution.

    Raises:
        NumericFailure: no route reached ``tol``.
    """
    pos = np.asarray(positive_regret, dtype=float)
    n = pos.shape[0]
    if pos.ndim != 2 or pos.shape[1] != n:
        raise DomainError(f"regret matrix must be square, got shape {pos.shape}")
    if np.any(pos < 0):
        raise DomainError("regret matrix must be nonnegative (take positive parts first)")
    if not np.any(pos - np.diag(np.diag(pos)) > 0):
        return np.full(n, 1.0 / n)
    Q = transition_matrix(pos)
    if max_iter is None:
        max_iter = 10 * n * n
    mu = np.full(n, 1.0 / n) if start is None else np.array(start, dtype=float)
    mu /= mu.sum()
    mu, ok = _power_iterate(mu, Q, tol, min(2 * n, max_iter))
    if ok:
        return mu
    mu = _exact_stationary(Q)
    mu, ok = _power_iterate(mu, Q, tol, max_iter)
    if not ok:
        raise NumericFailure("regret-matching fixed point did not converge", _residual(mu, Q))
    return mu


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _rng_state_to_json(state: dict) -> dict:
    out = {}
    for k, v in state.items():
        if isinstance(v, dict):
            out[k] = _rng_state_to_json(v)
        elif isinstance(v, np.ndarray):
            out[k] = {"__uint64__": [int(x) for x in v]}
        else:
            out[k] = int(v) if isinstance(v, np.integer) else v
    return out


def _rng_state_from_json(state: dict) -> dict:
    out = {}
    for k, v in state.items():
        if isinstance(v, dict) and "__uint64__" in v:
            out[k] = np.array(v["__uint64__"], dtype=np.uint64)
        elif isinstance(v, dict):
            out[k] = _rng_state_from_json(v)
        else:
            out[k] = v
    return out


class OnlineCalibrator:
    """Randomized calibrated forecaster on the grid ``{0, 1/N, ..., 1}``.

    Calls must alternate: :meth:`predict` then :meth:`update`. Calling
    ``predict`` again before ``update`` returns the same pending pair, so the
    random draw for a step is made once.

    Args:
        N: grid resolution.
        seed: anything ``numpy.random.SeedSequence`` accepts, or a
            ``SeedSequence``; drives a Philox counter-based generator.
    """

    def __init__(self, N: int, seed=0):
        if int(N) != N or N < 1:
            raise DomainError(f"grid resolution N must be a positive integer, got {N!r}")
        self.N = int(N)
        n = self.N + 1
        self.grid = np.arange(n) / self.N
        self.cum_internal_regret = np.zeros((n, n))
        self.grid_counts = np.zeros(n, dtype=np.int64)
        self.grid_outcome_sums = np.zeros(n, dtype=np.int64)
        self.steps_T = 0
        self._rng = np.random.Generator(np.random.Philox(_as_seed_sequence(seed)))
        self._last_mu: np.ndarray | None = None
        self._pending: tuple[np.ndarray, int] | None = None
        # squared losses of every grid point, indexed by outcome
        self._sq_loss = np.stack([self.grid ** 2, (1.0 - self.grid) ** 2])

    @property
    def pending(self) -> tuple[np.ndarray, int] | None:
        if self._pending is None:
            return None
        return self._pending[0].copy(), self._pending[1]

    def distribution(self) -> np.ndarray:
        """Distribution the next prediction will be drawn from (no sampling)."""
        if self._pending is not None:
            return self._pending[0].copy()
        pos = np.maximum(self.cum_internal_regret, 0.0)
        return fixed_point(pos, start=self._last_mu)

    def predict(self) -> tuple[np.ndarray, int]:
        """Return ``(mu, i)``: the play distribution and the sampled grid index."""
        if self._pending is None:
            mu = self.distribution()
            cdf = np.cumsum(mu)
            cdf[-1] = 1.0
            idx = int(np.searchsorted(cdf, self._rng.random(), side="right"))
            self._pending = (mu, min(idx, self.N))
        return self.pending

    def update(self, distribution: np.ndarray, sampled_index: int, y: int) -> None:
        """Absorb outcome ``y`` for the pending prediction ``(distribution, sampled_index)``."""
        if self._pending is None:
            raise ProtocolError("update() called without a pending predict()")
        mu, idx = self._pending
        if sampled_index != idx or not np.array_equal(np.asarray(distribution), mu):
            raise ProtocolError("update() arguments do not match the pending prediction")
        if y not in (0, 1):
            raise DomainError(f"outcome must be 0 or 1, got {y!r}")
        y = int(y)
        loss = self._sq_loss[y]
        # expected-play increment mu_i * (l_i - l_j); diagonal stays exactly 0
        self.cum_internal_regret += mu[:, None] * (loss[:, None] - loss[None, :])
        self.grid_counts[idx] += 1
        self.grid_outcome_sums[idx] += y
        self.steps_T += 1
        self._last_mu = mu
        self._pending = None

    def step(self, y: int) -> tuple[np.ndarray, int]:
        """Predict, then update with ``y``. The outcome cannot depend on the draw."""
        mu, idx = self.predict()
        self.update(mu, idx, y)
        return mu, idx

    def calibration_error(self, norm_p: int = 1) -> float:
        return grid_calibration_error(self.grid_counts, self.grid_outcome_sums, self.N, norm_p)

    # -- checkpointing -------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "OnlineCalibrator",
            "version": STATE_VERSION,
            "N": self.N,
            "cum_internal_regret": self.cum_internal_regret.tolist(),
            "grid_counts": self.grid_counts.tolist(),
            "grid_outcome_sums": self.grid_outcome_sums.tolist(),
            "steps_T": self.steps_T,
            "rng_state": _rng_state_to_json(self._rng.bit_generator.state),
            "last_mu": None if self._last_mu is None else self._last_mu.tolist(),
            "pending": None if self._pending is None
            else {"distribution": self._pending[0].tolist(), "index": self._pending[1]},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "OnlineCalibrator":
        if d.get("kind") != "OnlineCalibrator" or d.get("version") != STATE_VERSION:
            raise DomainError(f"unsupported calibrator snapshot: {d.get('kind')} v{d.get('version')}")
        obj = cls(d["N"])
        obj.cum_internal_regret = np.array(d["cum_internal_regret"], dtype=float)
        obj.grid_counts = np.array(d["grid_counts"], dtype=np.int64)
        obj.grid_outcome_sums = np.array(d["grid_outcome_sums"], dtype=np.int64)
        obj.steps_T = int(d["steps_T"])
        obj._rng.bit_generator.state = _rng_state_from_json(d["rng_state"])
        obj._last_mu = None if d["last_mu"] is None else np.array(d["last_mu"], dtype=float)
        if d["pending"] is not None:
            obj._pending = (np.array(d["pending"]["distribution"], dtype=float),
                            int(d["pending"]["index"]))
        return obj


def grid_calibration_error(counts, outcome_sums, N: int, norm_p: int = 1) -> float:
    """Weighted l_p distance between empirical frequencies and grid values.

    ``sum_i |s_i/n_i - i/N|**p * n_i/T``; levels with ``n_i = 0`` add nothing.
    """
    if norm_p not in (1, 2):
        raise DomainError(f"norm_p must be 1 or 2, got {norm_p!r}")
    counts = np.asarray(counts)
    T = int(counts.sum())
    if T == 0:
        raise EmptyStateError("calibration error is undefined before the first step")
    hit = counts > 0
    rho = np.asarray(outcome_sums)[hit] / counts[hit]
    level = np.flatnonzero(hit) / N
    return float(np.sum(np.abs(rho - level) ** norm_p * counts[hit]) / T)
