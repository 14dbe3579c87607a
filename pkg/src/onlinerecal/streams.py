"""Outcome and forecast streams, plus CSV ingestion.

CSV files carry a header naming the columns. Recognized names are ``y``
(required), ``p_f`` and ``x0 .. xk``; other columns are ignored on read.
Floats are written with ``repr`` (shortest round-tripping form), so a
write/read cycle is lossless.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, DomainError
from .forecasters import sigmoid

_FEATURE = re.compile(r"^x(\d+)$")


@dataclass
class StreamRecord:
    y: int
    p_f: float | None = None
    x: np.ndarray | None = None

    def __post_init__(self):
        if self.y not in (0, 1):
            raise DomainError(f"outcome must be 0 or 1, got {self.y!r}")
        if self.p_f is None and self.x is None:
            raise DomainError("a record needs features, a raw forecast, or both")
        if self.p_f is not None and not (0.0 <= self.p_f <= 1.0):
            raise DomainError(f"raw forecast must lie in [0, 1], got {self.p_f!r}")

    def __eq__(self, other):
        if not isinstance(other, StreamRecord):
            return NotImplemented
        same_x = (self.x is None and other.x is None) or (
            self.x is not None and other.x is not None and np.array_equal(self.x, other.x))
        return self.y == other.y and self.p_f == other.p_f and same_x


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def bernoulli_stream(p: float, T: int, seed=None) -> np.ndarray:
    """``T`` i.i.d. Bernoulli(p) outcomes as an int array."""
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"p must lie in [0, 1], got {p!r}")
    if T < 0:
        raise DomainError(f"T must be nonnegative, got {T}")
    return (_rng(seed).random(T) < p).astype(np.int64)


def pattern_stream(pattern: str | Sequence[int], T: int) -> np.ndarray:
    """``pattern`` (e.g. ``"001"``) repeated and cut to length ``T``."""
    bits = [int(c) for c in pattern]
    if not bits:
        raise DomainError("pattern must be nonempty")
    if any(b not in (0, 1) for b in bits):
        raise DomainError(f"pattern must be binary, got {pattern!r}")
    return np.resize(np.array(bits, dtype=np.int64), T)


def adversarial_outcome(p_t: float) -> int:
    """Outcome that contradicts the prediction: 0 above one half, else 1."""
    return 0 if p_t > 0.5 else 1


def logistic_synth_stream(w_true, T: int, seed=None) -> list[StreamRecord]:
    """Standard-normal features with logistic outcomes under ``w_true``."""
    w = np.asarray(w_true, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DomainError("w_true must be a nonempty vector")
    rng = _rng(seed)
    X = rng.standard_normal((T, w.size))
    y = (rng.random(T) < sigmoid(X @ w)).astype(np.int64)
    return [StreamRecord(y=int(yt), x=xt) for xt, yt in zip(X, y)]


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise DataError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return v


def read_csv(path: str | Path) -> list[StreamRecord]:
    return list(iter_csv(path))


def iter_csv(path: str | Path) -> Iterator[StreamRecord]:
    """Stream records from ``path``; rows are numbered from 1 after the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        if "y" not in header:
            raise DataError(f"{path}: missing required column 'y'")
        y_col = header.index("y")
        pf_col = header.index("p_f") if "p_f" in header else None
        feats = sorted((int(m.group(1)), k) for k, h in enumerate(header)
                       if (m := _FEATURE.match(h)))
        if pf_col is None and not feats:
            raise DataError(f"{path}: need a 'p_f' column or feature columns x0..xk")
        for row, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise DataError(f"row {row}: expected {len(header)} fields, got {len(cells)}")
            yv = _parse_float(cells[y_col], row, "y")
            if yv not in (0.0, 1.0):
                raise DataError(f"row {row}, column 'y': outcome must be 0 or 1, got {cells[y_col]!r}")
            p_f = None
            if pf_col is not None:
                p_f = _parse_float(cells[pf_col], row, "p_f")
                if not (0.0 <= p_f <= 1.0):
                    raise DataError(f"row {row}, column 'p_f': {p_f!r} is outside [0, 1]")
            x = None
            if feats:
                x = np.array([_parse_float(cells[k], row, header[k]) for _, k in feats])
            yield StreamRecord(y=int(yv), p_f=p_f, x=x)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV with LF line endings; floats use their shortest exact repr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_csv(path: str | Path, records: Sequence[StreamRecord],
              extra: dict[str, Sequence] | None = None) -> None:
    """Write records in the ingestion schema, plus optional extra columns."""
    dims = {r.x.size for r in records if r.x is not None}
    if len(dims) > 1:
        raise DataError(f"records have inconsistent feature dimensions {sorted(dims)}")
    d = dims.pop() if dims else 0
    has_pf = any(r.p_f is not None for r in records)
    extra = extra or {}
    header = [f"x{k}" for k in range(d)] + (["p_f"] if has_pf else []) + ["y"] + list(extra)

    def rows():
        for t, r in enumerate(records):
            xs = list(r.x) if r.x is not None else [None] * d
            yield xs + ([r.p_f] if has_pf else []) + [r.y] + [extra[k][t] for k in extra]

    write_table(path, header, rows())
