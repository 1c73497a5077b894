"""Reconstruction quality metrics and wall-clock timing.

All metrics return fractions; percentages are a presentation concern.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError, UndefinedMetricError
from .signals import MeasurementVector, SparseSignal

SECTIONS = ("sampling", "recovery", "total")

# Pearson values may overshoot +-1 by rounding; anything larger is a bug
CLAMP_SLACK = 1e-12


def _pair(s, s_hat, min_len=1):
    s = np.asarray(s.values if isinstance(s, (SparseSignal, MeasurementVector)) else s, dtype=float).ravel()
    s_hat = np.asarray(s_hat.values if isinstance(s_hat, (SparseSignal, MeasurementVector)) else s_hat,
                       dtype=float).ravel()
    if s.shape != s_hat.shape:
        raise InvalidDimensionError(f"length mismatch: {s.size} vs {s_hat.size}")
    if s.size < min_len:
        raise InvalidDimensionError(f"need at least {min_len} entries, got {s.size}")
    return s, s_hat


def reconstruction_error(s, s_hat) -> float:
    """``||s_hat - s|| / ||s||``."""
    s, s_hat = _pair(s, s_hat)
    peak = np.max(np.abs(s))
    if peak == 0:
        raise UndefinedMetricError("reconstruction error is undefined for an all-zero reference")
    # scaled so tiny references do not underflow to a zero norm
    return float(np.linalg.norm((s_hat - s) / peak) / np.linalg.norm(s / peak))


def mean_square_error(s, s_hat) -> float:
    s, s_hat = _pair(s, s_hat)
    d = s - s_hat
    return float(d @ d / d.size)


def correlation(s, s_hat) -> Optional[float]:
    """Pearson correlation, or ``None`` if either input is constant.

    ``(N sum(s h) - sum(s) sum(h)) / sqrt((N sum(s^2) - sum(s)^2)(N sum(h^2) - sum(h)^2))``
    is evaluated in its centered form (numerator and denominator divided by
    ``N^2``), which is the same quantity without the cancellation.
    """
    s, s_hat = _pair(s, s_hat, min_len=2)
    ds, dh = s - s.mean(), s_hat - s_hat.mean()
    ss, hh = float(ds @ ds), float(dh @ dh)
    if ss == 0 or hh == 0 or not np.any(s != s[0]) or not np.any(s_hat != s_hat[0]):
        return None
    cc = float(ds @ dh) / np.sqrt(ss * hh)
    if abs(cc) > 1.0 + CLAMP_SLACK:
        raise ArithmeticError(f"correlation {cc!r} outside [-1, 1] beyond rounding")
    return float(np.clip(cc, -1.0, 1.0))


class Stopwatch:
    """Context manager recording one section's elapsed seconds.

    >>> with Stopwatch("recovery") as sw:
    ...     pass
    >>> sw.elapsed >= 0
    True
    """

    def __init__(self, section: str = "total"):
        if section not in SECTIONS:
            raise InvalidParameterError(f"unknown section {section!r}; expected one of {SECTIONS}")
        self.section = section
        self.elapsed: Optional[float] = None
        self._start = None

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self._start
        return False


def stopwatch(section: str = "total") -> Stopwatch:
    return Stopwatch(section)


@dataclass(frozen=True)
class MetricReport:
    """Per-trial scores. ``cc`` is ``None`` when undefined."""

    re: float
    mse: float
    cc: Optional[float]
    support_size: int
    t_s: float
    t_r: float
    t_p: float

    def __post_init__(self):
        for name in ("re", "mse", "t_s", "t_r", "t_p"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise InvalidParameterError(f"{name} must be finite and >= 0, got {v}")
        if self.cc is not None and not -1.0 <= self.cc <= 1.0:
            raise InvalidParameterError(f"cc out of range: {self.cc}")
        if self.t_p < max(self.t_s, self.t_r):
            raise InvalidParameterError("total time shorter than one of its sections")


def score(s, s_hat, support_size, t_s, t_r, t_p) -> MetricReport:
    return MetricReport(reconstruction_error(s, s_hat), mean_square_error(s, s_hat),
                        correlation(s, s_hat), int(support_size), t_s, t_r, t_p)
