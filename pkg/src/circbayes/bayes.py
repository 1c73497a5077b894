"""Sparse Bayesian reconstruction by evidence maximization.

Every coefficient ``s_i`` carries a zero-mean Gaussian prior with precision
``a_i``; the noise has precision ``b``. For fixed ``(a, b)`` the posterior
over the active coefficients is Gaussian with

    sigma = (b * Phi.T @ Phi + diag(a))^-1
    mu    = b * sigma @ Phi.T @ r

and the hyperparameters are re-estimated from it with the MacKay fixed-point
updates

    gamma_i = 1 - a_i * sigma_ii
    a_i     = gamma_i / mu_i^2
    b       = (M - sum(gamma)) / ||r - Phi @ mu||^2

Coefficients whose precision exceeds ``a_prune`` are dropped for good (their
``a_i`` becomes ``inf``), so the active set only ever shrinks.

With M < N the marginal likelihood is typically maximized by driving the
noise variance to zero and interpolating the data with about M coefficients,
so the default ``noise_update="fixed"`` keeps ``b`` at its initial value.
``noise_update="mackay"`` applies the update above.
"""

from __future__ import annotations

import functools
import time
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lapack

from .errors import IllConditionedError, InvalidDimensionError, InvalidParameterError
from .result import ReconstructionResult, support_counts
from .sensing import SensingOperator, to_dense
from .signals import MeasurementVector

A0_RULES = ("inv_power",)
B0_RULES = ("inv_power_1pct", "known_noise")
NOISE_UPDATES = ("fixed", "mackay")


@dataclass(frozen=True)
class BayesConfig:
    """Solver settings.

    ``a0_rule``/``b0_rule`` are a rule name or a fixed positive number.
    ``inv_power`` sets every ``a_i = 1/mean(r^2)``; ``inv_power_1pct`` sets
    ``b = 1/(0.01 * mean(r^2))``; ``known_noise`` uses ``1/noise_sigma^2``
    from the measurement record (``b_max`` if it is zero) and falls back to
    ``inv_power_1pct`` when the record carries no noise level.
    ``support_tol`` is relative to the largest estimated magnitude.
    """

    a0_rule: Union[str, float] = "inv_power"
    b0_rule: Union[str, float] = "inv_power_1pct"
    tol: float = 1e-8
    max_iter: int = 1000
    a_prune: float = 1e12
    support_tol: float = 1e-6
    b_max: float = 1e12
    noise_update: str = "fixed"

    def __post_init__(self):
        for name, rules in (("a0_rule", A0_RULES), ("b0_rule", B0_RULES)):
            v = getattr(self, name)
            if isinstance(v, str):
                if v not in rules:
                    raise InvalidParameterError(f"unknown {name} {v!r}")
            elif not (np.isfinite(v) and v > 0):
                raise InvalidParameterError(f"{name} must be a positive number or one of {rules}")
        if self.noise_update not in NOISE_UPDATES:
            raise InvalidParameterError(f"unknown noise_update {self.noise_update!r}")
        if not self.tol > 0 or self.max_iter < 1:
            raise InvalidParameterError("need tol > 0 and max_iter >= 1")
        if not (self.a_prune > 0 and self.b_max > 0 and self.support_tol >= 0):
            raise InvalidParameterError("a_prune, b_max must be > 0 and support_tol >= 0")


@dataclass(frozen=True, eq=False)
class PosteriorState:
    """Hyperparameters and the Gaussian posterior they induce.

    ``a`` has length N with ``inf`` at pruned indices. ``sigma`` and ``gamma``
    are indexed like ``active_set``; ``mu`` has length N and is zero off the
    active set. ``fresh`` is False between a hyperparameter update and the
    next posterior update.
    """

    a: np.ndarray
    b: float
    active_set: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    iteration: int = 0
    fresh: bool = True


class _Problem:
    """Dense matrix and measurements plus the products every iteration reuses."""

    def __init__(self, phi, r, noise_sigma=None):
        if phi.shape[0] != r.size:
            raise InvalidDimensionError(f"operator has {phi.shape[0]} rows but r has length {r.size}")
        self.phi = phi
        self.r = r
        self.noise_sigma = noise_sigma
        self.gram = phi.T @ phi
        self.atr = phi.T @ r
        self.m, self.n = phi.shape


@functools.lru_cache(maxsize=8)
def _cached_dense(op):
    mat = to_dense(op)
    mat.setflags(write=False)
    return mat


def _problem(op, r):
    if isinstance(op, _Problem):
        return op
    phi = _cached_dense(op) if isinstance(op, SensingOperator) else np.asarray(op, dtype=float)
    if isinstance(r, MeasurementVector):
        return _Problem(phi, r.values, r.noise_sigma)
    return _Problem(phi, np.asarray(r, dtype=float).ravel())


def _posterior(prob, act, a_act, b, sub=None, want_sigma=True):
    """Posterior on the active columns: ``(mu_act, sigma or None, gamma)``.

    ``sub`` optionally supplies ``(gram[act, act], atr[act], phi[:, act])``.
    Uses the K x K precision when K <= M and the Woodbury identity on the
    M x M marginal covariance otherwise.
    """
    k, m = act.size, prob.m
    if k == 0:
        return np.zeros(0), np.zeros((0, 0)), np.zeros(0)
    gram, atr, phi = sub if sub is not None else (prob.gram[np.ix_(act, act)], prob.atr[act], None)
    sigma = None
    if k <= m:
        h = b * gram
        h.flat[:: k + 1] += a_act
        chol, info = lapack.dpotrf(h, lower=1)
        if info != 0:
            raise IllConditionedError("posterior precision not positive definite", np.linalg.cond(h))
        mu, _ = lapack.dpotrs(chol, b * atr, lower=1)
        chol_inv, info = lapack.dtrtri(chol, lower=1)
        if info != 0:
            raise IllConditionedError("singular Cholesky factor", np.inf)
        if want_sigma:
            sigma = chol_inv.T @ chol_inv
            diag = np.diag(sigma)
        else:
            diag = np.einsum("ij,ij->j", chol_inv, chol_inv)
        gamma = 1.0 - a_act * diag
    else:
        if phi is None:
            phi = prob.phi[:, act]
        a_inv = 1.0 / a_act
        phi_ainv = phi * a_inv
        c = phi_ainv @ phi.T
        c.flat[:: m + 1] += 1.0 / b
        try:
            cho = cho_factor(c, lower=True)
        except LinAlgError:
            raise IllConditionedError("marginal covariance not positive definite", np.linalg.cond(c)) from None
        w = cho_solve(cho, phi_ainv)
        mu = phi_ainv.T @ cho_solve(cho, prob.r)
        # equals 1 - a_i sigma_ii, written without the cancellation
        gamma = np.einsum("ij,ij->j", phi, w)
        if want_sigma:
            sigma = -(phi_ainv.T @ w)
            sigma.flat[:: k + 1] += a_inv
            sigma = 0.5 * (sigma + sigma.T)
    if not np.all(np.isfinite(mu)) or (sigma is not None and not np.all(np.isfinite(sigma))):
        raise IllConditionedError("posterior contains non-finite values")
    return mu, sigma, gamma


def _hyper_step(prob, phi_act, mu_act, gamma, b, cfg):
    """New ``(a_act, keep, b)`` from a fresh posterior on the active set."""
    if cfg.noise_update == "mackay":
        resid = prob.r - phi_act @ mu_act
        rss = float(resid @ resid)
        slack = prob.m - float(np.sum(gamma))
        if rss == 0.0:
            b = cfg.b_max
        elif slack > 0:
            b = min(slack / rss, cfg.b_max)
    with np.errstate(divide="ignore", invalid="ignore"):
        a_act = gamma / mu_act**2
    keep = (gamma > 0) & np.isfinite(a_act) & (a_act > 0) & (a_act <= cfg.a_prune)
    return a_act, keep, b


def _initial_hyper(prob, cfg):
    power = float(np.mean(prob.r**2))
    a0 = 1.0 / power if cfg.a0_rule == "inv_power" else float(cfg.a0_rule)
    if cfg.b0_rule == "known_noise" and prob.noise_sigma is not None:
        b0 = 1.0 / prob.noise_sigma**2 if prob.noise_sigma > 0 else cfg.b_max
    elif isinstance(cfg.b0_rule, str):
        b0 = 1.0 / (0.01 * power)
    else:
        b0 = float(cfg.b0_rule)
    return a0, min(b0, cfg.b_max)


def init_state(op, r, cfg: BayesConfig = BayesConfig()) -> PosteriorState:
    """Uniform ``a``, data-scaled ``b``, every index active, posterior solved.

    All-zero measurements give the trivial state (empty active set, ``mu = 0``).
    """
    prob = _problem(op, r)
    if not np.any(prob.r):
        return PosteriorState(np.full(prob.n, np.inf), 1.0, np.zeros(0, dtype=np.int64),
                              np.zeros(prob.n), np.zeros((0, 0)), np.zeros(0))
    a0, b0 = _initial_hyper(prob, cfg)
    state = PosteriorState(np.full(prob.n, a0), b0, np.arange(prob.n), np.zeros(prob.n),
                           np.zeros((0, 0)), np.zeros(0), fresh=False)
    return update_posterior(state, prob, None)


def update_posterior(state: PosteriorState, op, r) -> PosteriorState:
    """Recompute ``mu`` and ``sigma`` on the active set for the current ``(a, b)``."""
    prob = _problem(op, r)
    act = state.active_set
    mu_act, sigma, gamma = _posterior(prob, act, state.a[act], state.b)
    mu = np.zeros(prob.n)
    mu[act] = mu_act
    return replace(state, mu=mu, sigma=sigma, gamma=gamma, fresh=True)


def update_hyperparameters(state: PosteriorState, op, r, cfg: BayesConfig = BayesConfig()) -> PosteriorState:
    """One MacKay re-estimate of ``(a, b)`` from a fresh posterior, with pruning.

    ``b`` only moves when ``cfg.noise_update == "mackay"``; it is capped at
    ``cfg.b_max`` and left unchanged if ``M - sum(gamma) <= 0``. A coefficient
    is pruned when its new precision is not a finite positive number at most
    ``cfg.a_prune`` (this covers ``gamma_i <= 0`` and ``mu_i == 0``). The
    returned state keeps the surviving part of the old ``mu``/``sigma`` and is
    marked stale; call :func:`update_posterior` next.
    """
    prob = _problem(op, r)
    act = state.active_set
    a_act, keep, b = _hyper_step(prob, prob.phi[:, act], state.mu[act], state.gamma, state.b, cfg)
    a = state.a.copy()
    a[act[~keep]] = np.inf
    a[act[keep]] = a_act[keep]
    mu = state.mu.copy()
    mu[act[~keep]] = 0.0
    return PosteriorState(a, b, act[keep], mu, state.sigma[np.ix_(keep, keep)], state.gamma[keep],
                          state.iteration + 1, fresh=False)


def eq9_residual(state: PosteriorState, op, r) -> float:
    """Relative residual ``||(b G + A) mu - b Phi.T r|| / ||b Phi.T r||`` on the active set.

    Evaluated from the dense matrix, independently of the cached Gram.
    """
    prob = _problem(op, r)
    act = state.active_set
    p = prob.phi[:, act]
    rhs = state.b * (p.T @ prob.r)
    lhs = state.b * (p.T @ (p @ state.mu[act])) + state.a[act] * state.mu[act]
    denom = np.linalg.norm(rhs)
    return float(np.linalg.norm(lhs - rhs) / denom) if denom > 0 else float(np.linalg.norm(lhs))


def reconstruct_bayes(op, r, cfg: BayesConfig = BayesConfig(), callback=None) -> ReconstructionResult:
    """Alternate hyperparameter and posterior updates until ``a`` settles.

    Stops when an iteration prunes nothing and the largest relative change of
    a surviving ``a_i`` is at most ``cfg.tol``, or after ``cfg.max_iter``
    iterations. ``callback(state)`` receives a full :class:`PosteriorState`
    after every posterior update, which costs an extra K x K product per
    iteration.
    """
    t0 = time.perf_counter()
    prob = _problem(op, r)
    n = prob.n
    if not np.any(prob.r):
        return ReconstructionResult(np.zeros(n), 0.0, 0, 0, 0, True, time.perf_counter() - t0)

    a0, b = _initial_hyper(prob, cfg)
    act = np.arange(n)
    a_act = np.full(n, a0)
    sub = (prob.gram, prob.atr, prob.phi)
    want = callback is not None

    def report(it):
        a = np.full(n, np.inf)
        a[act] = a_act
        full_mu = np.zeros(n)
        full_mu[act] = mu
        callback(PosteriorState(a, b, act.copy(), full_mu, sigma, gamma, it))

    mu, sigma, gamma = _posterior(prob, act, a_act, b, sub, want)
    if want:
        report(0)
    converged = False
    it = 0
    bgram = None
    with np.errstate(divide="ignore", invalid="ignore"):
        while it < cfg.max_iter:
            it += 1
            if cfg.noise_update == "mackay":
                a_new, keep, b = _hyper_step(prob, sub[2], mu, gamma, b, cfg)
                bgram = None
            else:
                # a > 0 also rejects gamma <= 0, and NaN fails both tests
                a_new = gamma / (mu * mu)
                keep = (a_new > 0) & (a_new <= cfg.a_prune)
            pruned = not keep.all()
            if pruned:
                act, a_act, a_new = act[keep], a_act[keep], a_new[keep]
                sub = (sub[0][np.ix_(keep, keep)], sub[1][keep], sub[2][:, keep])
                bgram = None
            change = float(np.max(np.abs(a_new - a_act) / a_act)) if act.size else 0.0
            a_act = a_new
            k = act.size
            if want or k == 0 or k > prob.m:
                mu, sigma, gamma = _posterior(prob, act, a_act, b, sub, want)
            else:
                # same algebra as _posterior's K <= M branch, reusing b * G
                if bgram is None:
                    bgram, batr, diag = b * sub[0], b * sub[1], np.arange(k) * (k + 1)
                h = bgram.copy()
                h.flat[diag] += a_act
                chol, info = lapack.dpotrf(h, lower=1, overwrite_a=1)
                if info != 0:
                    raise IllConditionedError("posterior precision not positive definite",
                                              np.linalg.cond(bgram + np.diag(a_act)))
                mu, _ = lapack.dpotrs(chol, batr, lower=1)
                chol_inv, info = lapack.dtrtri(chol, lower=1, overwrite_c=1)
                if info != 0 or not np.isfinite(mu.sum()):
                    raise IllConditionedError("posterior contains non-finite values")
                gamma = 1.0 - a_act * np.einsum("ij,ij->j", chol_inv, chol_inv)
            if want:
                report(it)
            if not pruned and change <= cfg.tol:
                converged = True
                break

    estimate = np.zeros(n)
    estimate[act] = mu
    support, raw = support_counts(estimate, cfg.support_tol)
    return ReconstructionResult(
        estimate, 1.0 / b, support, raw, it, converged, time.perf_counter() - t0,
        {"b": b, "active_set": act.copy()},
    )
