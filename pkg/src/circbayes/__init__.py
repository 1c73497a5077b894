"""Compressive sensing with partial circulant operators: sparse Bayesian and L1 reconstruction."""

from .bayes import BayesConfig, PosteriorState, init_state, reconstruct_bayes, update_hyperparameters, update_posterior
from .bp import BpConfig, reconstruct_bp, soft_threshold
from .errors import (CSError, DivergenceError, IllConditionedError, InvalidConfigError, InvalidDimensionError,
                     InvalidParameterError, InvalidSparsityError, ResourceLimitError, UndefinedMetricError)
from .metrics import MetricReport, Stopwatch, correlation, mean_square_error, reconstruction_error
from .result import ReconstructionResult
from .sensing import SeedVector, SensingOperator, adjoint_apply, apply, build_circulant, build_dense_random, make_seed, to_dense
from .signals import MeasurementVector, SparseSignal, add_awgn, generate_spikes, sigma_for_snr

__version__ = "0.1.0"
