"""Return type shared by both reconstruction solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    """Output of a solver run.

    ``support_size`` counts entries with ``|x| > support_tol * max|x|``;
    ``raw_support_size`` counts every entry that is not exactly zero.
    """

    estimate: np.ndarray
    estimated_noise_variance: Optional[float]
    support_size: int
    raw_support_size: int
    iterations: int
    converged: bool
    recovery_time: float
    info: dict = field(default_factory=dict)


def support_counts(x, rel_tol):
    x = np.asarray(x)
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0:
        return 0, 0
    return int(np.count_nonzero(np.abs(x) > rel_tol * peak)), int(np.count_nonzero(x))
