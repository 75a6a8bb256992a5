"""Quadrature ground truth for tests and diagnostics.

Everything here is computed on tensor trapezoid grids in one or two
dimensions, independently of the samplers. ``R(theta)`` is the integral of
``Pi^2 / q_theta``; ``rho(theta) = R(theta) / Z^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from oais import kernels
from oais.errors import ContractError, HeavyTailError, QuadratureWarning, UnsupportedDimensionError

# boundary values above this fraction of the peak count as truncation
BOUNDARY_TOL = 1e-12
_LOG_BOUNDARY_TOL = math.log(BOUNDARY_TOL)
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class QuadratureSpec:
    bounds: tuple
    nodes_per_dim: int = 2001
    rule: str = "trapezoid"

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.bounds, dtype=np.float64))
        if b.shape[1] != 2 or np.any(b[:, 1] <= b[:, 0]):
            raise ContractError("bounds must be (low, high) pairs with low < high")
        if self.nodes_per_dim < 3:
            raise ContractError("need at least 3 nodes per dimension")
        if self.rule != "trapezoid":
            raise ContractError(f"unsupported quadrature rule {self.rule!r}")
        object.__setattr__(self, "bounds", tuple(tuple(map(float, r)) for r in b))

    @classmethod
    def symmetric(cls, half_width, dim=1, nodes_per_dim=2001):
        return cls(((-half_width, half_width),) * dim, nodes_per_dim)

    @property
    def dim(self):
        return len(self.bounds)

    def refined(self):
        return QuadratureSpec(self.bounds, 2 * self.nodes_per_dim - 1, self.rule)


@dataclass
class _Grid:
    points: np.ndarray      # (G, d)
    log_nodes: np.ndarray   # (G,) log trapezoid weights
    boundary: np.ndarray    # (G,) bool, outermost layer
    inner: np.ndarray       # (G,) bool, second layer


def _grid(spec: QuadratureSpec, dim_x: int) -> _Grid:
    if dim_x > 2:
        raise UnsupportedDimensionError(f"quadrature supports dim_x <= 2, got {dim_x}")
    if spec.dim != dim_x:
        raise ContractError(f"quadrature spec has {spec.dim} dims, problem has {dim_x}")
    n = spec.nodes_per_dim
    axes, logw, depth = [], [], []
    for lo, hi in spec.bounds:
        nodes = np.linspace(lo, hi, n)
        w = np.full(n, (hi - lo) / (n - 1))
        w[[0, -1]] *= 0.5
        axes.append(nodes)
        logw.append(np.log(w))
        i = np.arange(n)
        depth.append(np.minimum(i, n - 1 - i))
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    log_nodes = sum(np.meshgrid(*logw, indexing="ij")).ravel()
    dmin = np.minimum.reduce(np.meshgrid(*depth, indexing="ij")).ravel()
    return _Grid(points, log_nodes, dmin == 0, dmin == 1)


def _log_integrals(log_f: np.ndarray, grid: _Grid, *, heavy_tail: bool, what: str,
                   on_heavy_tail: str = "raise") -> np.ndarray:
    """Row-wise log trapezoid integrals with a truncation check.

    With ``heavy_tail`` set, rows whose integrand does not decay towards the
    boundary are divergent: they raise, or become ``inf`` when
    ``on_heavy_tail == "inf"``.
    """
    log_f = np.atleast_2d(log_f)
    if np.isnan(log_f).any():
        raise ContractError(f"{what} integrand is NaN on the grid")
    out = kernels.log_trapz_rows(log_f, grid.log_nodes)
    peak = log_f.max(axis=1)
    edge = log_f[:, grid.boundary].max(axis=1)
    inner = log_f[:, grid.inner].max(axis=1)
    loose = edge - peak > _LOG_BOUNDARY_TOL
    if heavy_tail:
        rising = loose & (edge >= inner)
        if rising.any():
            if on_heavy_tail != "inf":
                raise HeavyTailError(
                    f"{what} integrand does not decay towards the quadrature boundary; "
                    "the integral is likely infinite")
            out[rising] = np.inf
            loose = loose & ~rising
    if loose.any():
        warnings.warn(
            f"{what} integrand at the quadrature boundary exceeds {BOUNDARY_TOL:g} of its peak; "
            "widen the bounds", QuadratureWarning, stacklevel=3)
    return out


def log_quad_Z(target, spec: QuadratureSpec) -> float:
    grid = _grid(spec, target.dim_x)
    return float(_log_integrals(target.log_pi(grid.points), grid, heavy_tail=False, what="Pi")[0])


def quad_Z(target, spec: QuadratureSpec) -> float:
    """Normalizing constant ``Z = int Pi(x) dx``."""
    return math.exp(log_quad_Z(target, spec))


def log_quad_R_many(target, proposal, thetas, spec: QuadratureSpec,
                    on_heavy_tail: str = "raise") -> np.ndarray:
    """``log R(theta)`` for each row of ``thetas``; vectorized over the stack."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    grid = _grid(spec, target.dim_x)
    two_log_pi = 2.0 * target.log_pi(grid.points)
    rows = max(1, _CHUNK_ELEMS // grid.points.shape[0])
    out = np.empty(thetas.shape[0])
    for s in range(0, thetas.shape[0], rows):
        log_q = proposal.log_density_many(thetas[s:s + rows], grid.points)
        out[s:s + rows] = _log_integrals(two_log_pi - log_q, grid, heavy_tail=True, what="Pi^2/q",
                                            on_heavy_tail=on_heavy_tail)
    return out


def quad_R_many(target, proposal, thetas, spec: QuadratureSpec, on_heavy_tail="raise") -> np.ndarray:
    return np.exp(log_quad_R_many(target, proposal, thetas, spec, on_heavy_tail))


def quad_R(target, proposal, theta, spec: QuadratureSpec) -> float:
    """``R(theta) = int Pi(x)^2 / q_theta(x) dx``."""
    return float(quad_R_many(target, proposal, np.asarray(theta)[None, :], spec)[0])


def quad_rho(target, proposal, theta, spec: QuadratureSpec) -> float:
    log_r = log_quad_R_many(target, proposal, np.asarray(theta)[None, :], spec)[0]
    return math.exp(log_r - 2.0 * log_quad_Z(target, spec))


def quad_expectation(target, phi, spec: QuadratureSpec) -> float:
    """``(phi, pi)`` by quadrature, ``phi`` vectorized over ``(G, d_x)``."""
    grid = _grid(spec, target.dim_x)
    log_pi = target.log_pi(grid.points)
    w = np.exp(log_pi + grid.log_nodes - np.max(log_pi + grid.log_nodes))
    vals = np.asarray(phi(grid.points), dtype=np.float64)
    return float(np.dot(w, vals) / w.sum())


def _fd_steps(theta, h):
    theta = np.asarray(theta, dtype=np.float64)
    if h is None:
        return 1e-4 * (1.0 + np.abs(theta))
    return np.broadcast_to(np.asarray(h, dtype=np.float64), theta.shape).copy()


def quad_grad_R(target, proposal, theta, spec: QuadratureSpec, h=None) -> np.ndarray:
    """Central differences of :func:`quad_R` in each coordinate of ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    steps = _fd_steps(theta, h)
    d = theta.shape[0]
    stencil = np.concatenate([theta + np.diag(steps), theta - np.diag(steps)])
    r = quad_R_many(target, proposal, stencil, spec)
    return (r[:d] - r[d:]) / (2.0 * steps)


def finite_difference_gradient(f: Callable[[np.ndarray], float], theta, h=None) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    theta = np.asarray(theta, dtype=np.float64)
    steps = _fd_steps(theta, h)
    g = np.empty_like(theta)
    for j in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[j] = steps[j]
        g[j] = (f(theta + e) - f(theta - e)) / (2.0 * steps[j])
    return g


def midpoint_convexity_check(target, proposal, theta1, theta2, spec: QuadratureSpec,
                             objective: Optional[Callable] = None) -> float:
    """``R(mid) - (R(theta1) + R(theta2)) / 2``; positive values contradict convexity.

    ``objective`` replaces quadrature with an arbitrary function of theta.
    """
    t1 = np.asarray(theta1, dtype=np.float64)
    t2 = np.asarray(theta2, dtype=np.float64)
    stack = np.stack([t1, t2, 0.5 * (t1 + t2)])
    if objective is None:
        r = quad_R_many(target, proposal, stack, spec)
    else:
        r = np.array([objective(t) for t in stack])
    return float(r[2] - 0.5 * (r[0] + r[1]))


def convexity_scale(values: Sequence[float]) -> float:
    """Magnitude used to make convexity violations relative."""
    return float(np.max(np.abs(values)))


@dataclass
class ProbeReport:
    lipschitz_hat: float
    dissip_m_hat: float
    dissip_b_hat: float
    probe_points: int
    violation_fraction: float
    dim_theta: int = field(default=1)

    def c3_hat(self, beta: float) -> float:
        """Plug-in value of the stationary-gap constant ``d/(2 beta) log(e L (b beta/d + 1)/m)``.

        Returns NaN when the fitted constants leave the logarithm undefined.
        """
        d = self.dim_theta
        arg = math.e * self.lipschitz_hat * (self.dissip_b_hat * beta / d + 1.0) / self.dissip_m_hat \
            if self.dissip_m_hat > 0 else float("nan")
        if not arg > 0:
            return float("nan")
        return d / (2.0 * beta) * math.log(arg)


def theta_grid(center, radius, points_per_dim):
    """Regular grid in the cube ``center + [-radius, radius]^d``."""
    center = np.asarray(center, dtype=np.float64)
    axes = [np.linspace(c - radius, c + radius, points_per_dim) for c in center]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def assumption_probe(target, proposal, thetas, spec: Optional[QuadratureSpec] = None,
                     estimator: Optional[Callable] = None, min_points: int = 100) -> ProbeReport:
    """Empirical Lipschitz and dissipativity constants of ``grad R`` on a grid.

    ``estimator`` maps theta to a gradient; the default is :func:`quad_grad_R`.
    ``lipschitz_hat`` is the largest difference quotient over all pairs, a
    lower bound on the true constant. ``(m, b)`` come from a least-squares fit
    of ``<grad R(theta), theta>`` against ``|theta|^2`` with intercept ``-b``.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    if thetas.shape[0] < min_points:
        raise ContractError(f"probe needs at least {min_points} grid points, got {thetas.shape[0]}")
    if estimator is None:
        if spec is None:
            raise ContractError("a quadrature spec is required for the default estimator")
        estimator = lambda t: quad_grad_R(target, proposal, t, spec)  # noqa: E731
    grads = np.stack([np.asarray(estimator(t), dtype=np.float64) for t in thetas])
    dt = np.linalg.norm(thetas[:, None, :] - thetas[None, :, :], axis=2)
    dg = np.linalg.norm(grads[:, None, :] - grads[None, :, :], axis=2)
    off = dt > 0
    lip = float(np.max(dg[off] / dt[off])) if off.any() else 0.0
    sq = np.einsum("ni,ni->n", thetas, thetas)
    inner = np.einsum("ni,ni->n", grads, thetas)
    design = np.stack([sq, np.ones_like(sq)], axis=1)
    (m_hat, c_hat), *_ = np.linalg.lstsq(design, inner, rcond=None)
    b_hat = -c_hat
    slack = inner - (m_hat * sq - b_hat)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(inner))))
    return ProbeReport(
        lipschitz_hat=lip,
        dissip_m_hat=float(m_hat),
        dissip_b_hat=float(b_hat),
        probe_points=int(thetas.shape[0]),
        violation_fraction=float(np.mean(slack < -tol)),
        dim_theta=int(thetas.shape[1]),
    )
