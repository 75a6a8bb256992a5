"""Parameter update maps: SGLD, SGHMC, plain SGD and exact-gradient Langevin.

Every step is a pure function of ``(state, gradient, noise)``. The noise is
drawn from ``rng`` unless a recorded draw is passed as ``noise``, which
makes trajectories replayable bit for bit. ``inv_temp=math.inf`` disables
the injected noise (no draw is consumed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from oais.errors import ConfigError, ContractError, DivergenceError

SCHEMES = ("sgld", "sghmc", "sgd", "exact-langevin")
MOMENTUM_ORDERS = ("as-paper", "updated")


@dataclass(frozen=True)
class OptimizerState:
    scheme: str
    theta: np.ndarray
    step_size: float
    inv_temp: float = math.inf
    friction: float = 1.0
    momentum: Optional[np.ndarray] = None
    iteration: int = 0
    eta_max: float = math.inf
    momentum_order: str = "as-paper"
    divergence_radius: float = 1e6

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not 0.0 <= self.step_size <= self.eta_max:
            raise ConfigError(f"step size {self.step_size} outside [0, eta_max={self.eta_max}]")
        if not self.inv_temp > 0:
            raise ConfigError("inverse temperature must be positive")
        if self.momentum_order not in MOMENTUM_ORDERS:
            raise ConfigError(f"unknown momentum order {self.momentum_order!r}")
        theta = np.array(self.theta, dtype=np.float64)
        object.__setattr__(self, "theta", theta)
        if self.scheme == "sghmc":
            # friction 0 is the frictionless limit; it also switches the noise off
            if not self.friction >= 0:
                raise ConfigError("friction must be nonnegative")
            v = np.zeros_like(theta) if self.momentum is None else np.array(self.momentum, dtype=np.float64)
            if v.shape != theta.shape:
                raise ContractError("momentum must match theta")
            object.__setattr__(self, "momentum", v)
        elif self.momentum is not None:
            raise ContractError("momentum is only carried by sghmc")

    @property
    def noise_scale(self) -> float:
        """Standard deviation of the injected noise per coordinate."""
        if math.isinf(self.inv_temp) or (self.scheme == "sghmc" and self.friction == 0.0):
            return 0.0
        scale = 2.0 * self.step_size / self.inv_temp
        if self.scheme == "sghmc":
            scale *= self.friction
        return math.sqrt(scale)


def _grad_vector(grad, state):
    g = getattr(grad, "grad", grad)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.theta.shape:
        raise ContractError(f"gradient shape {g.shape} does not match theta {state.theta.shape}")
    return g


def _noise(state, rng, noise):
    if state.noise_scale == 0.0:
        return None
    if noise is None:
        if rng is None:
            raise ContractError("a random generator or a recorded noise draw is required")
        noise = rng.standard_normal(state.theta.shape[0])
    return np.asarray(noise, dtype=np.float64)


def _guard(state, theta, k):
    norm = float(np.linalg.norm(theta))
    if not math.isfinite(norm) or norm > state.divergence_radius:
        raise DivergenceError(
            f"{state.scheme} diverged at iteration {k}: |theta| = {norm:.6g} "
            f"(radius {state.divergence_radius:g})", iteration=k, theta_norm=norm)


def sgld_step(state: OptimizerState, grad, rng=None, noise=None) -> OptimizerState:
    """``theta - eta * H + sqrt(2 eta / beta) * xi``."""
    if state.scheme not in ("sgld", "exact-langevin"):
        raise ContractError(f"sgld_step called with scheme {state.scheme!r}")
    g = _grad_vector(grad, state)
    theta = state.theta - state.step_size * g
    xi = _noise(state, rng, noise)
    if xi is not None:
        theta = theta + state.noise_scale * xi
    k = state.iteration + 1
    _guard(state, theta, k)
    return replace(state, theta=theta, iteration=k)


def sghmc_step(state: OptimizerState, grad, rng=None, noise=None) -> OptimizerState:
    """Momentum update ``V - eta (gamma V + H) + sqrt(2 gamma eta / beta) xi``.

    The position moves by ``eta * V`` using the momentum from before the
    update when ``momentum_order == "as-paper"`` and the new momentum when
    it is ``"updated"``.
    """
    if state.scheme != "sghmc":
        raise ContractError(f"sghmc_step called with scheme {state.scheme!r}")
    g = _grad_vector(grad, state)
    eta = state.step_size
    v_old = state.momentum
    v = v_old - eta * (state.friction * v_old + g)
    xi = _noise(state, rng, noise)
    if xi is not None:
        v = v + state.noise_scale * xi
    theta = state.theta + eta * (v_old if state.momentum_order == "as-paper" else v)
    k = state.iteration + 1
    _guard(state, theta, k)
    if not np.isfinite(v).all():
        raise DivergenceError(f"sghmc momentum non-finite at iteration {k}", iteration=k,
                              theta_norm=float(np.linalg.norm(theta)))
    return replace(state, theta=theta, momentum=v, iteration=k)


def sgd_step(state: OptimizerState, grad) -> OptimizerState:
    if state.scheme != "sgd":
        raise ContractError(f"sgd_step called with scheme {state.scheme!r}")
    theta = state.theta - state.step_size * _grad_vector(grad, state)
    k = state.iteration + 1
    _guard(state, theta, k)
    return replace(state, theta=theta, iteration=k)


def step(state: OptimizerState, grad, rng=None, noise=None) -> OptimizerState:
    """Dispatch on ``state.scheme``."""
    if state.scheme == "sghmc":
        return sghmc_step(state, grad, rng, noise)
    if state.scheme == "sgd":
        return sgd_step(state, grad)
    return sgld_step(state, grad, rng, noise)
