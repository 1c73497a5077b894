"""Sparse spike test signals and additive white Gaussian measurement noise."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import InvalidDimensionError, InvalidParameterError, InvalidSparsityError

Amplitude = Union[str, Tuple[str, float, float]]


@dataclass(frozen=True, eq=False)
class SparseSignal:
    values: np.ndarray
    true_support: Optional[np.ndarray] = None
    k: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True).ravel()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.true_support is not None:
            support = np.array(sorted(set(int(i) for i in self.true_support)), dtype=np.int64)
            if np.any(support < 0) or np.any(support >= values.size):
                raise InvalidDimensionError("support index out of range")
            mask = np.zeros(values.size, dtype=bool)
            mask[support] = True
            if np.any(values[mask] == 0) or np.any(values[~mask] != 0):
                raise InvalidSparsityError("values must be nonzero exactly on true_support")
            support.setflags(write=False)
            object.__setattr__(self, "true_support", support)
            if self.k is None:
                object.__setattr__(self, "k", int(support.size))
            elif self.k != support.size:
                raise InvalidSparsityError(f"k={self.k} but |true_support|={support.size}")
        elif self.k is None:
            object.__setattr__(self, "k", int(np.count_nonzero(values)))

    @property
    def n(self):
        return self.values.size

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class MeasurementVector:
    values: np.ndarray
    noise_sigma: Optional[float] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True).ravel()
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError("measurements must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise InvalidParameterError("noise_sigma must be >= 0")

    @property
    def m(self):
        return self.values.size

    def __len__(self):
        return self.values.size


def _amplitudes(rng, k, amplitude):
    if amplitude == "pm_one":
        return rng.choice(np.array([-1.0, 1.0]), size=k)
    if amplitude == "gaussian":
        out = rng.standard_normal(k)
    elif isinstance(amplitude, (tuple, list)) and len(amplitude) == 3 and amplitude[0] == "uniform":
        lo, hi = float(amplitude[1]), float(amplitude[2])
        if not lo < hi:
            raise InvalidParameterError(f"uniform amplitude needs lo < hi, got ({lo}, {hi})")
        out = rng.uniform(lo, hi, size=k)
    else:
        raise InvalidParameterError(f"unknown amplitude law {amplitude!r}")
    # a draw of exactly 0.0 would silently shrink the support
    if np.any(out == 0):
        raise InvalidParameterError("amplitude law produced an exact zero")
    return out


def generate_spikes(rng, n: int, k: int, amplitude: Amplitude = "pm_one") -> SparseSignal:
    """Length-``n`` signal with ``k`` spikes at uniformly drawn positions.

    ``amplitude`` is ``"pm_one"`` (random signs, unit magnitude),
    ``"gaussian"``, or ``("uniform", lo, hi)``. Off-support entries are
    exact zeros.
    """
    if n < 1:
        raise InvalidDimensionError(f"n must be >= 1, got {n}")
    if not (0 <= k <= n):
        raise InvalidSparsityError(f"need 0 <= k <= n, got k={k}, n={n}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    support = np.sort(rng.choice(n, size=k, replace=False))
    values = np.zeros(n)
    values[support] = _amplitudes(rng, k, amplitude)
    return SparseSignal(values, support, k)


def add_awgn(rng, clean: MeasurementVector, sigma: float) -> MeasurementVector:
    """Add i.i.d. N(0, sigma^2) noise; ``sigma == 0`` returns an exact copy."""
    if not sigma >= 0:
        raise InvalidParameterError(f"sigma must be >= 0, got {sigma}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    values = clean.values
    if sigma > 0:
        values = values + sigma * rng.standard_normal(values.size)
    return MeasurementVector(values, float(sigma))


def sigma_for_snr(k: int, m: int, snr_db: float, mean_square_amplitude: float = 1.0) -> float:
    """Noise level giving the requested expected measurement SNR.

    With unit-variance operator entries scaled by ``1/sqrt(m)`` each clean
    measurement has expected power ``k * E[amp^2] / m``.
    """
    power = k * mean_square_amplitude / m
    return float(np.sqrt(power / 10.0 ** (snr_db / 10.0)))


def save_columns(path, signal) -> None:
    """Write ``index value`` pairs, one per line, for plotting."""
    values = signal.values if isinstance(signal, (SparseSignal, MeasurementVector)) else np.asarray(signal)
    with open(path, "w") as fh:
        for i, v in enumerate(values):
            fh.write(f"{i} {float(v)!r}\n")


def load_columns(path) -> np.ndarray:
    data = np.loadtxt(path, ndmin=2)
    out = np.zeros(data.shape[0])
    out[data[:, 0].astype(int)] = data[:, 1]
    return out
