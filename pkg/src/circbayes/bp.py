"""Basis pursuit denoising baseline.

Minimizes ``F(s) = ||r - Phi s||_2^2 + z ||s||_1`` by accelerated proximal
gradient descent: a gradient step on the quadratic followed by soft
thresholding, taken from an extrapolated point, with a backtracking step size.
With backtracking the iterate is only replaced when ``F`` does not increase
(the monotone variant of Beck and Teboulle), and momentum restarts whenever a
step is rejected. A fixed step accepts every step, so a step that is too large
diverges and is reported.

Once the sign pattern of the iterate stops changing, the solver also tries the
exact stationary point on that support; it is kept only if the signs agree,
``F`` does not increase and the optimality certificate holds. This finishes
the slow tail that plain proximal gradient shows on ill-conditioned supports.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DivergenceError, InvalidDimensionError, InvalidParameterError
from .result import ReconstructionResult, support_counts
from .sensing import SensingOperator, to_dense
from .signals import MeasurementVector

STEP_RULES = ("backtracking", "fixed")

# below this many entries the dense product beats two FFTs
DENSE_SWITCH = 1 << 20
# iterations with a fixed sign pattern before trying to solve for the exact
# stationary point on that support; doubles after every attempt so a run
# makes only logarithmically many
POLISH_AFTER = 25
POLISH_TRIES = 12


@dataclass(frozen=True)
class BpConfig:
    """Solver settings.

    ``z=None`` picks the weight from the data: ``sigma * sqrt(2 ln N)`` when the
    noise level is known and positive, ``1e-6 * ||Phi.T r||_inf`` when it is
    known to be zero, and a median-absolute-deviation estimate of ``sigma``
    otherwise. ``step`` is the fixed step for ``step_rule="fixed"`` and the
    initial trial step for backtracking (``None``: ``1/L`` from a power
    iteration). ``tol`` bounds the relative objective change that counts as a
    stall; the run is only marked converged when the optimality certificate
    holds.
    """

    z: Optional[float] = None
    step_rule: str = "backtracking"
    step: Optional[float] = None
    tol: float = 1e-15
    max_iter: int = 20000
    support_tol: float = 1e-6
    cert_tol: float = 1e-6
    check_descent: bool = False

    def __post_init__(self):
        if self.z is not None and not self.z > 0:
            raise InvalidParameterError(f"z must be > 0, got {self.z}")
        if self.step_rule not in STEP_RULES:
            raise InvalidParameterError(f"unknown step rule {self.step_rule!r}")
        if self.step_rule == "fixed" and not (self.step is not None and self.step > 0):
            raise InvalidParameterError("fixed step rule needs step > 0")
        if not self.tol > 0 or self.max_iter < 1:
            raise InvalidParameterError("need tol > 0 and max_iter >= 1")


def soft_threshold(x, t):
    """Entrywise ``sign(x) * max(|x| - t, 0)``."""
    if not t >= 0:
        raise InvalidParameterError(f"threshold must be >= 0, got {t}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def objective(phi_mv, r, s, z):
    resid = r - phi_mv(s)
    return float(resid @ resid + z * np.sum(np.abs(s)))


def default_z(atr_inf, r, n, noise_sigma):
    if noise_sigma is None:
        noise_sigma = 1.4826 * float(np.median(np.abs(r - np.median(r))))
    if noise_sigma > 0:
        return float(noise_sigma * np.sqrt(2.0 * np.log(n)))
    return 1e-6 * atr_inf


def certificate(grad, s, z):
    """Largest violation of the optimality conditions of ``F``.

    ``grad`` is ``2 Phi.T (r - Phi s)``. On the support it must equal
    ``z * sign(s_i)``; elsewhere its magnitude must not exceed ``z``.
    """
    on = s != 0
    viol = np.maximum(np.abs(grad) - z, 0.0)
    viol[on] = np.abs(grad[on] - z * np.sign(s[on]))
    return float(viol.max()) if viol.size else 0.0


def _linear_maps(op):
    """``(shape, matvec, rmatvec, columns)`` with ``columns(idx)`` the dense sub-matrix."""
    if isinstance(op, SensingOperator) and op.m * op.n > DENSE_SWITCH:
        def columns(idx):
            cols = np.zeros((op.n, idx.size))
            cols[idx, np.arange(idx.size)] = 1.0
            return np.stack([op.matvec(c) for c in cols.T], axis=1)
        return op.shape, op.matvec, op.rmatvec, columns
    mat = to_dense(op) if isinstance(op, SensingOperator) else np.asarray(op, dtype=float)
    return mat.shape, mat.__matmul__, mat.T.__matmul__, lambda idx: mat[:, idx]


def _stationary(columns, r, idx, q, z, n):
    """Solve ``P.T P x = P.T r - z q / 2`` on ``idx``; None if a sign flips or vanishes."""
    p = columns(idx)
    # least squares, so a rank-deficient support is fine
    x = np.linalg.lstsq(p.T @ p, p.T @ r - 0.5 * z * q, rcond=None)[0]
    if not np.all(np.sign(x) == q):
        return None
    out = np.zeros(n)
    out[idx] = x
    return out


def _polish_candidates(s, m):
    """Current support (if it has at most ``m`` entries), then the supports of
    its largest few entries."""
    idx = np.flatnonzero(s)
    if idx.size == 0:
        return
    if idx.size <= m:
        yield idx
    order = idx[np.argsort(-np.abs(s[idx]), kind="stable")]
    top = min(idx.size - 1, m)
    for j in range(top, max(top - POLISH_TRIES, 0), -1):
        yield np.sort(order[:j])


def _lipschitz(mv, rmv, n, rng_seed=0, iters=50):
    """Upper estimate of ``2 ||Phi||_2^2`` via power iteration."""
    x = np.random.default_rng(rng_seed).standard_normal(n)
    lam = 0.0
    for _ in range(iters):
        x = rmv(mv(x))
        nrm = np.linalg.norm(x)
        if nrm == 0:
            return 1.0
        lam_new = nrm
        x /= nrm
        if abs(lam_new - lam) <= 1e-6 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return 2.0 * lam * 1.01


def reconstruct_bp(op, r, cfg: BpConfig = BpConfig(), x0=None) -> ReconstructionResult:
    """Solve the L1-penalized least-squares problem for ``r``."""
    t0 = time.perf_counter()
    noise_sigma = r.noise_sigma if isinstance(r, MeasurementVector) else None
    r = r.values if isinstance(r, MeasurementVector) else np.asarray(r, dtype=float)
    (m, n), mv, rmv, columns = _linear_maps(op)
    if r.shape != (m,):
        raise InvalidDimensionError(f"operator has {m} rows but r has shape {r.shape}")

    atr = 2.0 * rmv(r)
    z = cfg.z if cfg.z is not None else default_z(np.max(np.abs(atr)) / 2.0, r, n, noise_sigma)
    cert_tol = cfg.cert_tol * (1.0 + np.max(np.abs(atr)) / 2.0)
    if not np.any(r):
        return ReconstructionResult(np.zeros(n), None, 0, 0, 0, True, time.perf_counter() - t0,
                                    {"z": z, "objective": 0.0, "certificate": 0.0})

    if cfg.step_rule == "fixed":
        step = cfg.step
    else:
        step = cfg.step if cfg.step is not None else 1.0 / _lipschitz(mv, rmv, n)

    s = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    polished = False
    backtrack = cfg.step_rule == "backtracking"
    resid = r - mv(s)
    f = float(resid @ resid + z * np.abs(s).sum())
    grad = 2.0 * rmv(resid)
    cert = certificate(grad, s, z)
    converged = cert <= cert_tol
    # extrapolated point and momentum
    y, resid_y, grad_y, t = s, resid, grad, 1.0
    it = 0
    # iterations with an unchanged sign pattern, and the count that triggers a polish
    stable, next_polish = 0, POLISH_AFTER
    signs = np.sign(s)
    while not converged and it < cfg.max_iter:
        it += 1
        while True:
            cand = soft_threshold(y + step * grad_y, step * z)
            resid_c = r - mv(cand)
            f_c = float(resid_c @ resid_c + z * np.abs(cand).sum())
            if not np.isfinite(f_c):
                raise DivergenceError("objective became non-finite", it)
            if not backtrack:
                break
            # sufficient decrease of the smooth part at y (Beck-Teboulle)
            d = cand - y
            q = float(resid_y @ resid_y) - float(grad_y @ d) + float(d @ d) / (2.0 * step)
            if float(resid_c @ resid_c) <= q * (1 + 1e-12) + 1e-300:
                break
            step *= 0.5
        # the monotone variant keeps the old point when the step does not improve F
        accept = f_c <= f or not backtrack
        if cfg.check_descent and backtrack:
            assert min(f_c, f) <= f, f"objective increased at iteration {it}"
        stall = accept and abs(f - f_c) <= cfg.tol * max(abs(f), 1e-300)
        s_old, resid_old = s, resid
        if accept:
            s, resid, f = cand, resid_c, f_c
            grad = 2.0 * rmv(resid)
            cert = certificate(grad, s, z)
            converged = cert <= cert_tol
        if not accept:
            # the extrapolation overshot: restart momentum from the kept point
            t, y, resid_y, grad_y = 1.0, s, resid, grad
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            w1, w2 = t / t_new, (t - 1.0) / t_new
            y = s + w1 * (cand - s) + w2 * (s - s_old)
            resid_y = resid + w1 * (resid_c - resid) + w2 * (resid - resid_old)
            grad_y = 2.0 * rmv(resid_y)
            t = t_new
        new_signs = np.sign(s)
        if np.array_equal(new_signs, signs):
            stable += 1
        else:
            signs, stable = new_signs, 0
        if not converged and (stable >= next_polish or stall or it == cfg.max_iter):
            next_polish *= 2
            for idx in _polish_candidates(s, m):
                p = _stationary(columns, r, idx, np.sign(s[idx]), z, n)
                if p is None:
                    continue
                p_resid = r - mv(p)
                p_f = float(p_resid @ p_resid + z * np.abs(p).sum())
                p_grad = 2.0 * rmv(p_resid)
                p_cert = certificate(p_grad, p, z)
                if p_f <= f * (1 + 1e-12) and p_cert <= cert_tol:
                    s, resid, f, grad, cert, converged = p, p_resid, p_f, p_grad, p_cert, True
                    polished = True
                    break
        if stall and not converged:
            break

    support, raw = support_counts(s, cfg.support_tol)
    return ReconstructionResult(
        s, None, support, raw, it, converged, time.perf_counter() - t0,
        {"z": z, "objective": f, "certificate": cert, "certificate_tol": cert_tol, "step": step,
         "polished": polished},
    )
