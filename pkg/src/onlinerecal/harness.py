"""Experiment runner: forecaster -> recalibrator -> outcome -> metrics.

Each step follows the same order: features and/or the raw forecast are
obtained, the recalibrator commits to a prediction, the outcome is revealed
(an adaptive adversary may look at the committed prediction), the recalibrator
and the baseline learn from it, and the metrics are recorded.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from .errors import ConfigError, DataError, DomainError
from .forecasters import (LinearKind, OnlineLinearForecaster, TwoValueExpert, noise_predict,
                          sigmoid)
from .losses import get_loss
from .metrics import MetricsAccumulator, switching_gains
from .recalibrator import Recalibrator
from .streams import (StreamRecord, adversarial_outcome, bernoulli_stream, iter_csv,
                      logistic_synth_stream, pattern_stream, write_csv, write_table)

log = logging.getLogger(__name__)

SERIES_COLUMNS = ("t", "loss_recal_avg", "loss_base_avg", "cal_err_l1", "cal_err_l2")
CURVE_COLUMNS = ("bucket_lo", "bucket_hi", "mean_pred", "mean_outcome", "count")
DEFAULT_T = 5000


class Experiment(str, enum.Enum):
    BERNOULLI_EXPERT = "bernoulli_expert"
    ADVERSARIAL = "adversarial"
    PATTERN_L1 = "pattern_l1"
    COVARIATE = "covariate"
    CSV = "csv"


@dataclass
class ExperimentConfig:
    experiment: Experiment = Experiment.BERNOULLI_EXPERT
    # None: 5000 steps for synthetic experiments, the whole file for csv
    T: int | None = None
    M: int = 10
    N: int = 10
    # None picks the experiment's natural loss: l1 for pattern_l1, l2 otherwise
    loss: str | None = None
    seed: int = 0
    report_every: int = 100
    out: str | None = None
    curve_out: str | None = None
    input: str | None = None
    allow_small_grid: bool = False
    # bernoulli_expert
    bernoulli_p: float = 0.5
    expert_low: float = 0.3
    expert_high: float = 0.7
    # pattern_l1
    pattern: str = "001"
    # covariate
    w_true: tuple[float, ...] = (1.5, -1.0, 0.5)
    baseline: str = "scaled"  # scaled | logistic | hinge
    temperature: float = 3.0
    learning_rate: float = 0.1
    l1_strength: float = 1e-4

    def __post_init__(self):
        try:
            self.experiment = Experiment(self.experiment)
        except ValueError:
            valid = ", ".join(e.value for e in Experiment)
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {valid}") from None
        if isinstance(self.w_true, str):
            self.w_true = tuple(float(v) for v in self.w_true.split(","))
        self.w_true = tuple(float(v) for v in self.w_true)

    @property
    def steps(self) -> int | None:
        if self.T is None and self.experiment is not Experiment.CSV:
            return DEFAULT_T
        return self.T

    @property
    def loss_name(self) -> str:
        if self.loss is not None:
            return self.loss
        return "l1" if self.experiment is Experiment.PATTERN_L1 else "l2"

    def validate(self) -> "ExperimentConfig":
        if self.T is not None and self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if self.M < 1 or self.N < 1:
            raise ConfigError(f"M and N must be positive, got M={self.M}, N={self.N}")
        if not self.allow_small_grid and not (self.M >= self.N >= 2):
            raise ConfigError(f"need M >= N >= 2 (got M={self.M}, N={self.N}); "
                              "set allow_small_grid to override")
        if self.report_every < 1:
            raise ConfigError(f"report_every must be >= 1, got {self.report_every}")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError(f"seed must be a 64-bit nonnegative integer, got {self.seed}")
        try:
            get_loss(self.loss_name)
        except DomainError as e:
            raise ConfigError(str(e)) from None
        if self.experiment is Experiment.CSV and not self.input:
            raise ConfigError("csv experiment needs an input path")
        if self.baseline not in ("scaled", "logistic", "hinge"):
            raise ConfigError(f"baseline must be scaled, logistic or hinge, got {self.baseline!r}")
        if not (0.0 <= self.bernoulli_p <= 1.0):
            raise ConfigError(f"bernoulli_p must lie in [0, 1], got {self.bernoulli_p}")
        if not self.w_true:
            raise ConfigError("w_true must be nonempty")
        if not self.pattern or set(self.pattern) - {"0", "1"}:
            raise ConfigError(f"pattern must be a nonempty binary string, got {self.pattern!r}")
        try:
            TwoValueExpert(self.expert_low, self.expert_high)
        except DomainError as e:
            raise ConfigError(str(e)) from None
        return self

    def as_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["experiment"] = self.experiment.value
        d["w_true"] = list(self.w_true)
        d["loss"] = self.loss_name
        return d


def _coerce(name: str, raw: str, kind) -> Any:
    text = str(raw).strip()
    kind = str(kind)
    if text.lower() in ("none", "") and "None" in kind:
        return None
    try:
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
        if kind.startswith("tuple"):
            return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {text!r} as {kind}") from None
    return text


def parse_config_file(path: str | Path) -> dict[str, Any]:
    """Read ``key = value`` lines; ``#`` starts a comment. Keys are config fields."""
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    out: dict[str, Any] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, value, types[key])
    return out


def make_config(file_values: dict[str, Any] | None = None, **overrides) -> ExperimentConfig:
    """Build a config from file values, with ``overrides`` (CLI flags) taking precedence."""
    values = dict(file_values or {})
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values).validate()
    except TypeError as e:
        raise ConfigError(str(e)) from None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    series: list[tuple]
    summary: dict[str, Any]
    metrics: MetricsAccumulator
    recalibrator: Recalibrator


def _substream(seed: int, k: int) -> np.random.Generator:
    # spawn_key (0, j) is reserved for recalibrator buckets
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, k)))


class _Step:
    """One protocol step: the raw forecast and how to reveal the outcome."""

    __slots__ = ("p_f", "reveal", "learn")

    def __init__(self, p_f, reveal, learn=None):
        self.p_f = p_f
        self.reveal = reveal
        self.learn = learn


def _linear_baseline(cfg: ExperimentConfig, dim: int) -> OnlineLinearForecaster:
    kind = LinearKind.HINGE if cfg.baseline == "hinge" else LinearKind.LOGISTIC
    return OnlineLinearForecaster(dim, cfg.learning_rate, cfg.l1_strength, kind)


def _steps(cfg: ExperimentConfig, rec: Recalibrator) -> Iterator[_Step]:
    exp = cfg.experiment
    if exp is Experiment.BERNOULLI_EXPERT:
        expert = TwoValueExpert(cfg.expert_low, cfg.expert_high)
        ys = bernoulli_stream(cfg.bernoulli_p, cfg.steps, _substream(cfg.seed, 0))
        for y in ys:
            y = int(y)
            yield _Step(expert.predict(y), lambda y=y: y)
    elif exp is Experiment.ADVERSARIAL:
        rng = _substream(cfg.seed, 1)
        for _ in range(cfg.steps):
            # the adversary sees the committed distribution, not the random draw
            yield _Step(noise_predict(rng), lambda: adversarial_outcome(rec.pending_mean))
    elif exp is Experiment.PATTERN_L1:
        for y in pattern_stream(cfg.pattern, cfg.steps):
            y = int(y)
            yield _Step(0.0, lambda y=y: y)
    elif exp is Experiment.COVARIATE:
        w = np.asarray(cfg.w_true)
        records = logistic_synth_stream(w, cfg.steps, _substream(cfg.seed, 2))
        yield from _record_steps(cfg, records, w)
    elif exp is Experiment.CSV:
        yield from _record_steps(cfg, iter_csv(cfg.input), None)
    else:  # pragma: no cover
        raise ConfigError(f"unhandled experiment {exp}")


def _record_steps(cfg: ExperimentConfig, records, w_true) -> Iterator[_Step]:
    model = None
    for rec in records:
        y = rec.y
        if rec.p_f is not None and cfg.experiment is Experiment.CSV:
            yield _Step(rec.p_f, lambda y=y: y)
            continue
        if rec.x is None:
            raise DataError("record has neither a raw forecast nor features")
        if cfg.baseline == "scaled" and w_true is not None:
            p_f = float(sigmoid(cfg.temperature * float(w_true @ rec.x)))
            yield _Step(p_f, lambda y=y: y)
            continue
        if model is None:
            model = _linear_baseline(cfg, rec.x.size)
        _, p_f = model.predict(rec.x)
        yield _Step(p_f, lambda y=y: y, lambda x=rec.x, y=y: model.update(x, y))


def run_experiment(cfg: ExperimentConfig, keep_history: bool = False) -> ExperimentResult:
    """Run one experiment; write the series / curve CSVs if paths are configured.

    ``keep_history`` retains every ``(p_f, p_t, y)`` triple in the metrics for
    regret audits.
    """
    cfg.validate()
    loss = get_loss(cfg.loss_name)
    rec = Recalibrator(cfg.M, cfg.N, cfg.seed)
    acc = MetricsAccumulator(cfg.N, loss, keep_history=keep_history)
    series: list[tuple] = []

    def snapshot():
        series.append((acc.steps_T, acc.avg_loss_recal, acc.avg_loss_baseline,
                       acc.calibration_error(1), acc.calibration_error(2)))

    T = cfg.steps
    for step in _steps(cfg, rec):
        if T is not None and acc.steps_T >= T:
            break
        p_t = rec.observe_forecast(step.p_f)
        y = step.reveal()
        rec.observe_outcome(y)
        if step.learn is not None:
            step.learn()
        acc.record(step.p_f, p_t, y)
        if acc.steps_T % cfg.report_every == 0:
            snapshot()

    if acc.steps_T == 0:
        raise DataError("stream produced no records")
    if T is not None and acc.steps_T < T:
        raise DataError(f"stream exhausted after {acc.steps_T} of {T} steps")
    if not series or series[-1][0] != acc.steps_T:
        snapshot()

    summary = summarize(cfg, acc, rec)
    if cfg.out:
        write_table(cfg.out, SERIES_COLUMNS, series)
    if cfg.curve_out:
        write_table(cfg.curve_out, CURVE_COLUMNS, acc.calibration_curve(cfg.N).rows())
        base = Path(cfg.curve_out)
        write_table(base.with_name(base.stem + "_baseline" + base.suffix), CURVE_COLUMNS,
                    acc.calibration_curve(source="raw").rows())
    log.info("%s finished: %s", cfg.experiment.value, summary)
    return ExperimentResult(cfg, series, summary, acc, rec)


def summarize(cfg: ExperimentConfig, acc: MetricsAccumulator, rec: Recalibrator) -> dict[str, Any]:
    s = {"experiment": cfg.experiment.value, "M": cfg.M, "N": cfg.N, "seed": cfg.seed}
    s.update(acc.summary())
    gains = switching_gains(acc.level_counts, acc.level_outcome_sums, acc.loss, cfg.N)
    s["internal_regret_avg"] = float(max(gains.max(), 0.0)) / acc.steps_T
    s["bucket_counts"] = rec.bucket_counts.tolist()
    s["instance_weighted_cal_err_l1"] = rec.weighted_instance_error(1)
    s["instance_weighted_cal_err_l2"] = rec.weighted_instance_error(2)
    return s


def recalibrate_csv(input_path: str | Path, output_path: str | Path, M: int = 10,
                    N: int | None = None, seed: int = 0, loss: str = "l2") -> dict[str, Any]:
    """Recalibrate the ``p_f`` column of a CSV; the output gains a ``p_cal`` column."""
    N = M if N is None else N
    cfg = make_config(experiment="csv", input=str(input_path), M=M, N=N, seed=seed, loss=loss,
                      allow_small_grid=True)
    lossspec = get_loss(loss)
    rec = Recalibrator(M, N, seed)
    acc = MetricsAccumulator(N, lossspec)
    records: list[StreamRecord] = []
    p_cal: list[float] = []
    for r in iter_csv(input_path):
        if r.p_f is None:
            raise DataError(f"{input_path}: recalibration needs a 'p_f' column")
        p = rec.observe_forecast(r.p_f)
        rec.observe_outcome(r.y)
        acc.record(r.p_f, p, r.y)
        records.append(r)
        p_cal.append(p)
    if not records:
        raise DataError(f"{input_path}: no data rows")
    write_csv(output_path, records, {"p_cal": p_cal})
    return summarize(cfg, acc, rec)


def format_summary(summary: dict[str, Any]) -> str:
    return json.dumps(summary, indent=2, sort_keys=True)
