"""Stochastic estimates of the gradient of ``R(theta) = E_q[W_theta(X)^2]``.

All estimators draw their randomness from a batch of base-noise vectors
``eps`` so that ``x = g_theta(eps)``; the result is a deterministic
function of ``(theta, eps)``.

The squared weight is formed as ``exp(2 log W)``. With double precision
this is finite for ``|log W| < 354``; beyond that an error is raised
instead of returning ``inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from oais.errors import ContractError, NonFiniteError, UnsupportedEstimatorError

ESTIMATORS = ("score", "pathwise", "paper-literal")


@dataclass(frozen=True)
class GradEstimate:
    grad: np.ndarray
    estimator_kind: str
    batch_size: int


def _prepare(target, proposal, theta, eps_batch):
    theta = np.asarray(theta, dtype=np.float64)
    eps = np.asarray(eps_batch, dtype=np.float64)
    if eps.ndim == 1:
        eps = eps[None, :]
    if eps.shape[0] < 1 or eps.shape[1] != proposal.dim_eps:
        raise ContractError(f"eps batch must be (n, {proposal.dim_eps}) with n >= 1")
    x = proposal.push_forward(theta, eps)
    log_w = target.log_pi(x) - proposal.log_density(theta, x)
    w2 = np.exp(2.0 * log_w)
    return theta, eps, x, w2


def _check_finite(h, what):
    bad = ~np.isfinite(h).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteError(f"{what} gradient is non-finite at draw {i}", index=i)
    return h


def score_terms(target, proposal, theta, eps_batch) -> np.ndarray:
    """Per-draw terms ``-W^2(x) grad_theta log q_theta(x)``, shape ``(n, d_theta)``."""
    theta, _, x, w2 = _prepare(target, proposal, theta, eps_batch)
    h = -w2[:, None] * proposal.score_theta(theta, x)
    return _check_finite(h, "score")


def pathwise_terms(target, proposal, theta, eps_batch) -> np.ndarray:
    """Per-draw total derivative of ``W_theta(g_theta(eps))^2`` in ``theta``."""
    if target.grad_log_unnorm is None:
        raise UnsupportedEstimatorError(
            f"pathwise gradient needs the gradient of log Pi; target {target.name!r} has none")
    theta, eps, x, w2 = _prepare(target, proposal, theta, eps_batch)
    dlogw_dx = target.grad_log_pi(x) - proposal.grad_x_log_density(theta, x)
    jac = proposal.pathwise_jacobian(theta, eps)
    chain = np.einsum("ni,nij->nj", dlogw_dx, jac)
    h = 2.0 * w2[:, None] * (chain - proposal.score_theta(theta, x))
    return _check_finite(h, "pathwise")


def paper_literal_terms(target, proposal, theta, eps_batch) -> np.ndarray:
    """Per-draw ``-W^2(x) J_g^T grad_x log q_theta(x)``.

    Reads the printed single-sample formula with the x-gradient of the
    proposal chained through the reparameterization Jacobian. This is not
    an unbiased estimate of the gradient in general; it is kept for
    comparison only.
    """
    theta, eps, x, w2 = _prepare(target, proposal, theta, eps_batch)
    jac = proposal.pathwise_jacobian(theta, eps)
    gx = proposal.grad_x_log_density(theta, x)
    h = -w2[:, None] * np.einsum("ni,nij->nj", gx, jac)
    return _check_finite(h, "paper-literal")


_TERMS = {
    "score": score_terms,
    "pathwise": pathwise_terms,
    "paper-literal": paper_literal_terms,
}


def gradient_terms(kind, target, proposal, theta, eps_batch) -> np.ndarray:
    """Per-draw gradient terms for the estimator named ``kind``."""
    try:
        fn = _TERMS[kind]
    except KeyError:
        raise ContractError(f"unknown gradient estimator {kind!r}; expected one of {ESTIMATORS}") from None
    return fn(target, proposal, theta, eps_batch)


def _estimate(kind, target, proposal, theta, eps_batch):
    h = gradient_terms(kind, target, proposal, theta, eps_batch)
    return GradEstimate(h.mean(axis=0), kind, h.shape[0])


def grad_score(target, proposal, theta, eps_batch) -> GradEstimate:
    return _estimate("score", target, proposal, theta, eps_batch)


def grad_pathwise(target, proposal, theta, eps_batch) -> GradEstimate:
    return _estimate("pathwise", target, proposal, theta, eps_batch)


def grad_paper_literal(target, proposal, theta, eps_batch) -> GradEstimate:
    return _estimate("paper-literal", target, proposal, theta, eps_batch)


def estimate(kind, target, proposal, theta, eps_batch) -> GradEstimate:
    return _estimate(kind, target, proposal, theta, eps_batch)


def clip(grad: GradEstimate, max_norm: Optional[float]) -> GradEstimate:
    """Rescale to Euclidean norm ``max_norm`` if it is exceeded."""
    if max_norm is None:
        return grad
    if not max_norm > 0:
        raise ContractError("max_norm must be positive")
    norm = float(np.linalg.norm(grad.grad))
    if norm <= max_norm:
        return grad
    return replace(grad, grad=grad.grad * (max_norm / norm))
