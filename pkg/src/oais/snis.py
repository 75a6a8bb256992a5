"""Log-domain importance weights, the self-normalized estimator and weight diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from oais import kernels
from oais.errors import ContractError, DegenerateEnsembleError, NonFiniteError


@dataclass(frozen=True)
class WeightedEnsemble:
    """Samples with their unnormalized log-weights and normalized weights."""

    samples: np.ndarray
    log_w_unnorm: np.ndarray
    w_norm: np.ndarray

    @classmethod
    def from_log_weights(cls, samples, log_w):
        log_w = np.asarray(log_w, dtype=np.float64)
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.shape[0] != log_w.shape[0]:
            raise ContractError("one log-weight per sample required")
        return cls(samples, log_w, normalize(log_w))

    @property
    def size(self) -> int:
        return self.log_w_unnorm.shape[0]


@dataclass(frozen=True)
class Diagnostics:
    """Weight-based summaries of an ensemble.

    ``z_hat`` estimates the normalizer, ``r_hat`` the second moment of the
    unnormalized weights (the adaptation objective) and ``rho_hat`` their
    ratio ``r_hat / z_hat**2``. The log-domain fields avoid overflow when
    the weights are extreme.
    """

    ess: float
    r_hat: float
    rho_hat: float
    z_hat: float
    log_z_hat: float
    log_r_hat: float


def log_weights(target, proposal, theta, samples) -> np.ndarray:
    """``log Pi(x_i) - log q_theta(x_i)`` for every sample.

    Samples where the target vanishes get weight ``-inf``; any other
    non-finite value is an error that names the offending sample.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None] if proposal.dim_x == 1 else samples[None, :]
    if samples.shape[0] < 1:
        raise ContractError("need at least one sample")
    log_pi = target.log_pi(samples)
    log_q = proposal.log_density(theta, samples)
    bad = np.isnan(log_pi) | (log_pi == np.inf) | ~np.isfinite(log_q)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteError(
            f"non-finite log-density at sample {i}: log Pi={log_pi[i]!r}, log q={log_q[i]!r}", index=i)
    return log_pi - log_q


def _check_log_w(log_w):
    log_w = np.asarray(log_w, dtype=np.float64)
    if log_w.ndim != 1 or log_w.shape[0] < 1:
        raise ContractError("log-weights must be a non-empty vector")
    if np.isnan(log_w).any() or (log_w == np.inf).any():
        i = int(np.flatnonzero(np.isnan(log_w) | (log_w == np.inf))[0])
        raise NonFiniteError(f"invalid log-weight at index {i}", index=i)
    if not (log_w > -np.inf).any():
        raise DegenerateEnsembleError("all importance weights are zero")
    return log_w


def normalize(log_w) -> np.ndarray:
    """Normalized weights ``softmax(log_w)``; shift invariant, overflow free."""
    return kernels.softmax(_check_log_w(log_w))


def snis_estimate(ensemble: WeightedEnsemble, phi) -> float:
    """``sum_i w_i phi(x_i)`` where ``phi`` maps an ``(N, d_x)`` array to ``(N,)``."""
    values = np.asarray(phi(ensemble.samples), dtype=np.float64).reshape(-1)
    if values.shape[0] != ensemble.size:
        raise ContractError("phi must return one value per sample")
    if not np.isfinite(values).all():
        i = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NonFiniteError(f"test function is non-finite at sample {i}", index=i)
    return kernels.weighted_sum(ensemble.w_norm, values)


def diagnostics(log_w) -> Diagnostics:
    log_w = _check_log_w(log_w)
    n = log_w.shape[0]
    log_n = math.log(n)
    lse1, lse2 = kernels.weight_lse(log_w)
    log_z = lse1 - log_n
    log_r = lse2 - log_n
    # rho_hat >= 1 holds exactly; clamp the last-ulp rounding. ess = n / rho
    rho = max(math.exp(lse2 + log_n - 2.0 * lse1), 1.0)
    ess = n / rho
    return Diagnostics(
        ess=ess,
        r_hat=_safe_exp(log_r),
        rho_hat=rho,
        z_hat=_safe_exp(log_z),
        log_z_hat=log_z,
        log_r_hat=log_r,
    )


def _safe_exp(v):
    return math.exp(v) if v < 709.0 else math.inf
