"""Circulant and dense random sensing operators.

A partial circulant operator keeps only its length-N seed, the selected row
indices and the seed's spectrum, and multiplies through the FFT. Entry
``(i, j)`` of the implied matrix is ``scale * c[(j - i) mod N]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import fft as sfft

from .errors import InvalidDimensionError, InvalidParameterError, ResourceLimitError
from .signals import MeasurementVector, SparseSignal

DISTRIBUTIONS = ("gaussian", "bernoulli")
ROW_SELECTIONS = ("first_m", "random")
KINDS = ("partial_circulant", "dense_random")

DENSE_LIMIT = 10**7

RngLike = Union[np.random.Generator, int, None]


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    return np.random.default_rng(rng), (int(rng) if rng is not None else None)


def _draw(rng, size, dist):
    if dist == "gaussian":
        return rng.standard_normal(size)
    if dist == "bernoulli":
        return rng.choice(np.array([-1.0, 1.0]), size=size)
    raise InvalidParameterError(f"unknown distribution {dist!r}; expected one of {DISTRIBUTIONS}")


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SeedVector:
    """First row ``c`` of a circulant matrix plus the law it was drawn from."""

    entries: np.ndarray
    distribution: str = "gaussian"

    def __post_init__(self):
        entries = _readonly(np.ravel(self.entries))
        if entries.size < 1:
            raise InvalidDimensionError("seed vector must have length >= 1")
        if not np.all(np.isfinite(entries)):
            raise InvalidParameterError("seed vector entries must be finite")
        if self.distribution not in DISTRIBUTIONS:
            raise InvalidParameterError(f"unknown distribution {self.distribution!r}")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return self.entries.size


@dataclass(frozen=True, eq=False)
class SensingOperator:
    """An M x N linear map with forward (``matvec``) and adjoint (``rmatvec``).

    Build instances with :func:`build_circulant` or :func:`build_dense_random`
    rather than calling the constructor directly.
    """

    kind: str
    m: int
    n: int
    scale: float
    seed: Optional[SeedVector] = None
    row_indices: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None
    rng_seed: Optional[int] = None
    _spectrum: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown operator kind {self.kind!r}")
        if not (1 <= self.m <= self.n):
            raise InvalidDimensionError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")
        if not np.isfinite(self.scale):
            raise InvalidParameterError("scale must be finite")
        if self.kind == "partial_circulant":
            if self.seed is None or self.row_indices is None:
                raise InvalidParameterError("partial_circulant needs seed and row_indices")
            rows = _readonly(self.row_indices, dtype=np.int64)
            if len(self.seed) != self.n or rows.shape != (self.m,):
                raise InvalidDimensionError("seed length must be n and row_indices length m")
            if np.any(np.diff(rows) <= 0) or rows[0] < 0 or rows[-1] >= self.n:
                raise InvalidParameterError("row_indices must be strictly increasing in [0, n)")
            object.__setattr__(self, "row_indices", rows)
            spectrum = sfft.rfft(self.seed.entries)
            spectrum.setflags(write=False)
            object.__setattr__(self, "_spectrum", spectrum)
        else:
            if self.matrix is None:
                raise InvalidParameterError("dense_random needs a matrix")
            mat = _readonly(self.matrix)
            if mat.shape != (self.m, self.n):
                raise InvalidDimensionError(f"matrix shape {mat.shape} != ({self.m}, {self.n})")
            object.__setattr__(self, "matrix", mat)

    @property
    def shape(self):
        return (self.m, self.n)

    def matvec(self, x):
        """Return ``M_c @ x`` for a plain length-N array."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise InvalidDimensionError(f"expected input of length {self.n}, got shape {x.shape}")
        if self.kind == "dense_random":
            return self.scale * (self.matrix @ x)
        # y[i] = sum_j c[(j - i) mod N] x[j] is a circular cross-correlation.
        full = sfft.irfft(np.conj(self._spectrum) * sfft.rfft(x), self.n)
        return self.scale * full[self.row_indices]

    def rmatvec(self, y):
        """Return ``M_c.T @ y`` for a plain length-M array."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.m,):
            raise InvalidDimensionError(f"expected input of length {self.m}, got shape {y.shape}")
        if self.kind == "dense_random":
            return self.scale * (self.matrix.T @ y)
        padded = np.zeros(self.n)
        padded[self.row_indices] = y
        return self.scale * sfft.irfft(self._spectrum * sfft.rfft(padded), self.n)

    def to_record(self):
        """Plain-dict form suitable for JSON."""
        rec = {
            "kind": self.kind,
            "n": self.n,
            "m": self.m,
            "scale": self.scale,
            "rng_seed": self.rng_seed,
        }
        if self.kind == "partial_circulant":
            rec["seed"] = self.seed.entries.tolist()
            rec["distribution"] = self.seed.distribution
            rec["row_indices"] = self.row_indices.tolist()
        else:
            rec["matrix"] = self.matrix.tolist()
        return rec

    @classmethod
    def from_record(cls, rec):
        if rec["kind"] == "partial_circulant":
            seed = SeedVector(np.asarray(rec["seed"], dtype=float), rec.get("distribution", "gaussian"))
            return cls("partial_circulant", int(rec["m"]), int(rec["n"]), float(rec["scale"]),
                       seed=seed, row_indices=np.asarray(rec["row_indices"], dtype=np.int64),
                       rng_seed=rec.get("rng_seed"))
        return cls("dense_random", int(rec["m"]), int(rec["n"]), float(rec["scale"]),
                   matrix=np.asarray(rec["matrix"], dtype=float), rng_seed=rec.get("rng_seed"))


def make_seed(rng: RngLike, n: int, dist: str = "gaussian") -> SeedVector:
    """Draw ``n`` i.i.d. seed entries (standard normal, or +-1 equiprobable)."""
    if n < 1:
        raise InvalidDimensionError(f"seed length must be >= 1, got {n}")
    rng, _ = _as_rng(rng)
    return SeedVector(_draw(rng, n, dist), dist)


def build_circulant(seed: SeedVector, m: int, row_select: str = "random",
                    rng: RngLike = None, scale: Optional[float] = None) -> SensingOperator:
    """Keep ``m`` rows of the circulant matrix generated by ``seed``.

    ``row_select="random"`` draws the rows uniformly without replacement from
    ``rng``; ``"first_m"`` keeps rows ``0..m-1``. The default scale is
    ``1/sqrt(m)``.
    """
    n = len(seed)
    if not (1 <= m <= n):
        raise InvalidDimensionError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng_seed = None
    if row_select == "first_m":
        rows = np.arange(m)
    elif row_select == "random":
        gen, rng_seed = _as_rng(rng)
        rows = np.sort(gen.choice(n, size=m, replace=False))
    else:
        raise InvalidParameterError(f"unknown row selection {row_select!r}; expected one of {ROW_SELECTIONS}")
    if scale is None:
        scale = 1.0 / np.sqrt(m)
    return SensingOperator("partial_circulant", m, n, float(scale), seed=seed,
                           row_indices=rows, rng_seed=rng_seed)


def build_dense_random(rng: RngLike, m: int, n: int, dist: str = "gaussian",
                       scale: Optional[float] = None) -> SensingOperator:
    """i.i.d. M x N matrix, scaled by ``1/sqrt(m)`` unless ``scale`` is given."""
    if not (1 <= m <= n):
        raise InvalidDimensionError(f"need 1 <= m <= n, got m={m}, n={n}")
    gen, rng_seed = _as_rng(rng)
    if scale is None:
        scale = 1.0 / np.sqrt(m)
    return SensingOperator("dense_random", m, n, float(scale),
                           matrix=_draw(gen, (m, n), dist), rng_seed=rng_seed)


def _values(x):
    return x.values if isinstance(x, (SparseSignal, MeasurementVector)) else x


def apply(op: SensingOperator, s) -> MeasurementVector:
    """Noiseless measurements ``M_c S`` of a signal (or plain array)."""
    return MeasurementVector(op.matvec(_values(s)))


def adjoint_apply(op: SensingOperator, y) -> np.ndarray:
    return op.rmatvec(_values(y))


def to_dense(op: SensingOperator) -> np.ndarray:
    """Materialize the operator as an explicit ``(m, n)`` array."""
    if op.m * op.n > DENSE_LIMIT:
        raise ResourceLimitError(f"refusing to materialize {op.m}x{op.n} > {DENSE_LIMIT} entries")
    if op.kind == "dense_random":
        return op.scale * op.matrix
    idx = (np.arange(op.n)[None, :] - op.row_indices[:, None]) % op.n
    return op.scale * op.seed.entries[idx]
