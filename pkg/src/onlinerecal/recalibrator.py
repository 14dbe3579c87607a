"""Bucketed online recalibration of a black-box forecaster.

Raw forecasts are routed by value into ``M`` intervals
``[0, 1/M), [1/M, 2/M), ..., [(M-1)/M, 1]`` and each interval owns an
independent :class:`~onlinerecal.calibrator.OnlineCalibrator`. The output for
a step is the grid value sampled by the owning calibrator.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from .calibrator import OnlineCalibrator, grid_calibration_error
from .errors import DomainError, ProtocolError

STATE_VERSION = 1


def bucket_index(p_f: float, M: int) -> int:
    """Index of the interval containing ``p_f``; the last interval is closed."""
    if not (0.0 <= p_f <= 1.0):
        raise DomainError(f"forecast must lie in [0, 1], got {p_f!r}")
    if M < 1:
        raise DomainError(f"bucket count must be positive, got {M}")
    return min(int(np.floor(p_f * M)), M - 1)


class Recalibrator:
    """Turns uncalibrated forecasts into calibrated ones.

    Usage per step::

        p = rec.observe_forecast(p_f)
        rec.observe_outcome(y)

    Calibrators are created lazily on first use; bucket ``j`` draws from the
    random substream ``SeedSequence(seed, spawn_key=(0, j))``.
    """

    def __init__(self, M: int = 10, N: int | None = None, seed: int = 0):
        N = M if N is None else N
        if int(M) != M or M < 1 or int(N) != N or N < 1:
            raise DomainError(f"M and N must be positive integers, got M={M!r}, N={N!r}")
        self.M = int(M)
        self.N = int(N)
        self.seed = int(seed)
        self.instances: dict[int, OnlineCalibrator] = {}
        self.bucket_counts = np.zeros(self.M, dtype=np.int64)
        self.pending: tuple[int, np.ndarray, int] | None = None

    @property
    def steps(self) -> int:
        return int(self.bucket_counts.sum())

    def instance(self, j: int) -> OnlineCalibrator:
        if j not in self.instances:
            ss = np.random.SeedSequence(self.seed, spawn_key=(0, j))
            self.instances[j] = OnlineCalibrator(self.N, ss)
        return self.instances[j]

    def observe_forecast(self, p_f: float) -> float:
        """Route ``p_f`` to its bucket and return the calibrated prediction."""
        if self.pending is not None:
            raise ProtocolError("observe_forecast() called twice without observe_outcome()")
        j = bucket_index(p_f, self.M)
        mu, idx = self.instance(j).predict()
        self.pending = (j, mu, idx)
        return idx / self.N

    @property
    def pending_mean(self) -> float:
        """Expected value of the pending prediction, before the draw is revealed.

        An adaptive adversary that knows the algorithm and the history, but not
        the current random draw, sees exactly this quantity.
        """
        if self.pending is None:
            raise ProtocolError("no pending forecast")
        _, mu, _ = self.pending
        return float(mu @ (np.arange(self.N + 1) / self.N))

    def observe_outcome(self, y: int) -> None:
        if self.pending is None:
            raise ProtocolError("observe_outcome() called without a pending forecast")
        j, mu, idx = self.pending
        self.instances[j].update(mu, idx, y)
        self.bucket_counts[j] += 1
        self.pending = None

    def calibration_error(self, norm_p: int = 1) -> float:
        """Calibration error of the combined output stream over all buckets."""
        counts = np.zeros(self.N + 1, dtype=np.int64)
        sums = np.zeros(self.N + 1, dtype=np.int64)
        for inst in self.instances.values():
            counts += inst.grid_counts
            sums += inst.grid_outcome_sums
        return grid_calibration_error(counts, sums, self.N, norm_p)

    def weighted_instance_error(self, norm_p: int = 1) -> float:
        """``sum_j (T_j / T) * C_j``, the right-hand side of the aggregation bound."""
        T = self.steps
        return sum(self.bucket_counts[j] / T * inst.calibration_error(norm_p)
                   for j, inst in self.instances.items() if inst.steps_T > 0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "Recalibrator",
            "version": STATE_VERSION,
            "M": self.M,
            "N": self.N,
            "seed": self.seed,
            "bucket_counts": self.bucket_counts.tolist(),
            "instances": {str(j): inst.to_dict() for j, inst in sorted(self.instances.items())},
            "pending": None if self.pending is None else {
                "bucket": self.pending[0],
                "distribution": self.pending[1].tolist(),
                "index": self.pending[2],
            },
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Recalibrator":
        if d.get("kind") != "Recalibrator" or d.get("version") != STATE_VERSION:
            raise DomainError(f"unsupported recalibrator snapshot: {d.get('kind')} v{d.get('version')}")
        obj = cls(d["M"], d["N"], d["seed"])
        obj.bucket_counts = np.array(d["bucket_counts"], dtype=np.int64)
        obj.instances = {int(j): OnlineCalibrator.from_dict(s) for j, s in d["instances"].items()}
        if d["pending"] is not None:
            p = d["pending"]
            obj.pending = (int(p["bucket"]), np.array(p["distribution"], dtype=float), int(p["index"]))
        return obj
