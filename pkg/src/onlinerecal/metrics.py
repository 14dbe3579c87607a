"""Calibration error, calibration curves and regret over recorded streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .calibrator import grid_calibration_error
from .errors import DomainError, EmptyStateError
from .losses import LossSpec, eval_loss, get_loss, loss_table
from .recalibrator import bucket_index

GRID_ATOL = 1e-9


def grid_level(p: float, N: int, strict: bool = True) -> int:
    """Grid index of ``p``; raises on off-grid values when ``strict``."""
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"prediction must lie in [0, 1], got {p!r}")
    i = int(round(p * N))
    if strict and abs(p * N - i) > GRID_ATOL * max(N, 1):
        raise DomainError(f"prediction {p!r} is not on the grid {{i/{N}}}")
    return i


@dataclass
class CalibrationCurve:
    """Per-bucket mean prediction, mean outcome and count.

    Empty buckets have ``count == 0`` and NaN means.
    """

    bucket_lo: np.ndarray
    bucket_hi: np.ndarray
    mean_pred: np.ndarray
    mean_outcome: np.ndarray
    count: np.ndarray

    def rows(self):
        for lo, hi, mp, mo, n in zip(self.bucket_lo, self.bucket_hi, self.mean_pred,
                                     self.mean_outcome, self.count):
            yield (float(lo), float(hi), None if n == 0 else float(mp),
                   None if n == 0 else float(mo), int(n))


def _curve(pred_sums, outcome_sums, counts) -> CalibrationCurve:
    B = len(counts)
    counts = np.asarray(counts, dtype=np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        mp = np.where(counts > 0, pred_sums / np.maximum(counts, 1), np.nan)
        mo = np.where(counts > 0, outcome_sums / np.maximum(counts, 1), np.nan)
    edges = np.arange(B + 1) / B
    return CalibrationCurve(edges[:-1], edges[1:], mp, mo, counts)


@dataclass
class MetricsAccumulator:
    """Running statistics for a recalibrated stream and its baseline.

    Recalibrated predictions are tallied per grid level ``i/N``; raw
    forecasts go into ``raw_bins`` value buckets (same interval convention as
    the recalibrator). Set ``keep_history`` to retain every
    ``(p_f, p_t, y)`` triple for regret audits. With ``grid_strict`` off,
    off-grid predictions are tallied at the nearest grid level.
    """

    resolution_N: int
    loss: LossSpec = field(default_factory=lambda: get_loss("l2"))
    raw_bins: int | None = None
    keep_history: bool = False
    grid_strict: bool = True

    def __post_init__(self):
        if self.resolution_N < 1:
            raise DomainError(f"resolution must be positive, got {self.resolution_N}")
        self.loss = get_loss(self.loss)
        if self.raw_bins is None:
            self.raw_bins = self.resolution_N
        n = self.resolution_N + 1
        self.level_counts = np.zeros(n, dtype=np.int64)
        self.level_outcome_sums = np.zeros(n, dtype=np.int64)
        self.level_pred_sums = np.zeros(n)
        self.raw_counts = np.zeros(self.raw_bins, dtype=np.int64)
        self.raw_outcome_sums = np.zeros(self.raw_bins, dtype=np.int64)
        self.raw_pred_sums = np.zeros(self.raw_bins)
        self.cum_loss_recal = 0.0
        self.cum_loss_baseline = 0.0
        self.steps_T = 0
        self.history: list[tuple[float, float, int]] = []

    def record(self, p_f: float, p_t: float, y: int) -> None:
        i = grid_level(p_t, self.resolution_N, self.grid_strict)
        b = bucket_index(p_f, self.raw_bins)
        # eval_loss validates y and both probabilities before any mutation
        l_recal = eval_loss(self.loss, y, p_t)
        l_base = eval_loss(self.loss, y, p_f)
        self.level_counts[i] += 1
        self.level_outcome_sums[i] += y
        self.level_pred_sums[i] += p_t
        self.raw_counts[b] += 1
        self.raw_outcome_sums[b] += y
        self.raw_pred_sums[b] += p_f
        self.cum_loss_recal += l_recal
        self.cum_loss_baseline += l_base
        self.steps_T += 1
        if self.keep_history:
            self.history.append((p_f, p_t, y))

    def _require_data(self):
        if self.steps_T == 0:
            raise EmptyStateError("no records yet")

    @property
    def avg_loss_recal(self) -> float:
        self._require_data()
        return self.cum_loss_recal / self.steps_T

    @property
    def avg_loss_baseline(self) -> float:
        self._require_data()
        return self.cum_loss_baseline / self.steps_T

    def calibration_error(self, norm_p: int = 1) -> float:
        """Calibration error of the recalibrated predictions on the grid."""
        self._require_data()
        return grid_calibration_error(self.level_counts, self.level_outcome_sums,
                                      self.resolution_N, norm_p)

    def raw_calibration_error(self, norm_p: int = 1) -> float:
        """Binned calibration error of the raw forecasts.

        Each value bucket is compared with its own mean forecast, so a
        forecaster taking finitely many values inside distinct buckets is
        scored exactly.
        """
        self._require_data()
        if norm_p not in (1, 2):
            raise DomainError(f"norm_p must be 1 or 2, got {norm_p!r}")
        hit = self.raw_counts > 0
        n = self.raw_counts[hit]
        gap = np.abs(self.raw_outcome_sums[hit] / n - self.raw_pred_sums[hit] / n)
        return float(np.sum(gap ** norm_p * n) / self.steps_T)

    def calibration_curve(self, buckets: int | None = None, source: str = "recal") -> CalibrationCurve:
        """Calibration curve of the recalibrated (``"recal"``) or raw (``"raw"``) stream.

        Raw forecasts are only kept at ``raw_bins`` resolution, so for them
        ``buckets`` must divide ``raw_bins``.
        """
        self._require_data()
        if source == "recal":
            buckets = self.resolution_N if buckets is None else buckets
            if buckets < 1:
                raise DomainError(f"buckets must be positive, got {buckets}")
            dest = [bucket_index(i / self.resolution_N, buckets)
                    for i in range(self.resolution_N + 1)]
            c = np.bincount(dest, self.level_counts, buckets).astype(np.int64)
            s = np.bincount(dest, self.level_outcome_sums, buckets)
            p = np.bincount(dest, self.level_pred_sums, buckets)
            return _curve(p, s, c)
        if source == "raw":
            buckets = self.raw_bins if buckets is None else buckets
            if buckets < 1 or self.raw_bins % buckets:
                raise DomainError(f"raw curve buckets must divide {self.raw_bins}, got {buckets}")
            k = self.raw_bins // buckets
            merge = lambda a: a.reshape(buckets, k).sum(axis=1)
            return _curve(merge(self.raw_pred_sums), merge(self.raw_outcome_sums),
                          merge(self.raw_counts))
        raise DomainError(f"source must be 'recal' or 'raw', got {source!r}")

    def recalibration_regret(self) -> float:
        """Average loss of the recalibrated stream minus that of the baseline."""
        self._require_data()
        return (self.cum_loss_recal - self.cum_loss_baseline) / self.steps_T

    def summary(self) -> dict:
        return {
            "T": self.steps_T,
            "loss": self.loss.name,
            "loss_recal_avg": self.avg_loss_recal,
            "loss_base_avg": self.avg_loss_baseline,
            "regret": self.recalibration_regret(),
            "cal_err_l1": self.calibration_error(1),
            "cal_err_l2": self.calibration_error(2),
            "base_cal_err_l1": self.raw_calibration_error(1),
            "base_cal_err_l2": self.raw_calibration_error(2),
            "mean_prediction": float(self.level_pred_sums.sum() / self.steps_T),
        }


def _level_stats(history: Iterable[tuple[float, int]], N: int):
    counts = np.zeros(N + 1, dtype=np.int64)
    ones = np.zeros(N + 1, dtype=np.int64)
    for p, y in history:
        if y not in (0, 1):
            raise DomainError(f"outcome must be 0 or 1, got {y!r}")
        i = grid_level(p, N)
        counts[i] += 1
        ones[i] += y
    return counts, ones


def switching_gains(counts, ones, loss: LossSpec, N: int) -> np.ndarray:
    """``G[i, j]``: loss saved by replaying every play of ``i/N`` as ``j/N``."""
    table = loss_table(get_loss(loss), N)
    zeros = np.asarray(counts) - np.asarray(ones)
    at_i = ones * table[1] + zeros * table[0]
    at_j = np.outer(ones, table[1]) + np.outer(zeros, table[0])
    return at_i[:, None] - at_j


def internal_regret(history: Sequence[tuple[float, int]], loss, N: int) -> float:
    """Largest gain from switching all plays of one grid value to another (>= 0)."""
    counts, ones = _level_stats(history, N)
    return float(max(switching_gains(counts, ones, loss, N).max(), 0.0))


def external_regret(history: Sequence[tuple[float, int]], loss, N: int) -> float:
    """Realized loss minus the loss of the best fixed grid prediction."""
    counts, ones = _level_stats(history, N)
    table = loss_table(get_loss(loss), N)
    realized = float(np.sum(ones * table[1] + (counts - ones) * table[0]))
    best = float(np.min(ones.sum() * table[1] + (counts.sum() - ones.sum()) * table[0]))
    return realized - best
