"""Target densities and reparameterizable proposal families.

Array conventions: a batch of states is an ``(n, d_x)`` array, a batch of
base-noise draws is ``(n, d_eps)`` and a parameter vector is ``(d_theta,)``.
Single points may be passed as 1-D arrays; results then drop the batch axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from oais.errors import ContractError

LOG_2PI = math.log(2.0 * math.pi)

FAMILY_KINDS = ("gaussian-mean", "gaussian-meanchol", "student-t-locscale")


def _as_batch(a, dim, what):
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise ContractError(f"{what} must have trailing dimension {dim}, got shape {np.shape(a)}")
    return a, single


# ---------------------------------------------------------------- targets


@dataclass(frozen=True)
class TargetModel:
    """Unnormalized target density ``Pi`` on R^dim_x.

    ``log_unnorm`` and ``grad_log_unnorm`` take an ``(n, dim_x)`` array and
    return ``(n,)`` and ``(n, dim_x)`` arrays respectively.
    """

    dim_x: int
    log_unnorm: Callable[[np.ndarray], np.ndarray]
    grad_log_unnorm: Optional[Callable[[np.ndarray], np.ndarray]] = None
    log_normalizer: Optional[float] = None
    name: str = "target"

    def __post_init__(self):
        if int(self.dim_x) < 1:
            raise ContractError("dim_x must be a positive integer")

    def log_pi(self, x):
        """Evaluate ``log Pi`` on a point or a batch."""
        xb, single = _as_batch(x, self.dim_x, "x")
        out = np.asarray(self.log_unnorm(xb), dtype=np.float64)
        return out[0] if single else out

    def grad_log_pi(self, x):
        if self.grad_log_unnorm is None:
            raise ContractError(f"target {self.name!r} has no gradient")
        xb, single = _as_batch(x, self.dim_x, "x")
        out = np.asarray(self.grad_log_unnorm(xb), dtype=np.float64)
        return out[0] if single else out


def gaussian_target(mean, cov=None, *, std=None, normalized=False, name="gaussian"):
    """Gaussian target ``exp(-(x-m)' S^-1 (x-m) / 2)``, unnormalized by default.

    Give either a covariance matrix ``cov`` or per-coordinate ``std``
    (diagonal covariance); the default is the identity.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    d = mean.shape[0]
    if cov is not None and std is not None:
        raise ContractError("give either cov or std, not both")
    if std is not None:
        cov = np.diag(np.broadcast_to(np.asarray(std, dtype=np.float64), (d,)) ** 2)
    elif cov is None:
        cov = np.eye(d)
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    if cov.shape != (d, d):
        raise ContractError("covariance shape does not match mean")
    prec = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    log_z = 0.5 * d * LOG_2PI + 0.5 * logdet
    shift = -log_z if normalized else 0.0

    def log_unnorm(x):
        r = x - mean
        return shift - 0.5 * np.einsum("ni,ij,nj->n", r, prec, r)

    def grad(x):
        return -(x - mean) @ prec

    return TargetModel(d, log_unnorm, grad, 0.0 if normalized else log_z, name)


def mixture_target(means, stds, weights=None, name="mixture"):
    """Unnormalized isotropic Gaussian mixture ``sum_k w_k exp(-|x-m_k|^2 / 2 s_k^2)``."""
    means = np.asarray(means, dtype=np.float64)
    if means.ndim == 1:
        means = means[:, None]
    k, d = means.shape
    stds = np.broadcast_to(np.asarray(stds, dtype=np.float64), (k,)).copy()
    weights = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.any(stds <= 0) or np.any(weights <= 0) or weights.shape != (k,):
        raise ContractError("mixture stds and weights must be positive, one per component")
    log_w = np.log(weights)
    inv_var = 1.0 / stds**2
    log_z = float(np.logaddexp.reduce(log_w + 0.5 * d * (LOG_2PI + 2 * np.log(stds))))

    def _comp(x):
        r = x[:, None, :] - means[None, :, :]
        return r, log_w - 0.5 * inv_var * np.einsum("nki,nki->nk", r, r)

    def log_unnorm(x):
        _, lc = _comp(x)
        m = lc.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(lc - m).sum(axis=1, keepdims=True)))[:, 0]

    def grad(x):
        r, lc = _comp(x)
        resp = np.exp(lc - lc.max(axis=1, keepdims=True))
        resp /= resp.sum(axis=1, keepdims=True)
        return -np.einsum("nk,nki->ni", resp * inv_var, r)

    return TargetModel(d, log_unnorm, grad, log_z, name)


def box_target(low, high, name="box"):
    """Indicator of the box ``[low, high]`` (closed); no gradient."""
    low = np.atleast_1d(np.asarray(low, dtype=np.float64))
    high = np.atleast_1d(np.asarray(high, dtype=np.float64))
    if low.shape != high.shape or np.any(high <= low):
        raise ContractError("box needs low < high componentwise")

    def log_unnorm(x):
        inside = np.all((x >= low) & (x <= high), axis=1)
        return np.where(inside, 0.0, -np.inf)

    return TargetModel(low.shape[0], log_unnorm, None, float(np.sum(np.log(high - low))), name)


def target_from_proposal(proposal, theta, log_scale=0.0, name=None):
    """Target equal to ``exp(log_scale) * q_theta`` (useful as a test fixture)."""
    theta = np.array(theta, dtype=np.float64)

    def log_unnorm(x):
        return log_scale + proposal.log_density(theta, x)

    def grad(x):
        return proposal.grad_x_log_density(theta, x)

    return TargetModel(proposal.dim_x, log_unnorm, grad, float(log_scale),
                       name or f"{proposal.family_kind}-member")


# -------------------------------------------------------------- proposals


@dataclass(frozen=True)
class ProposalFamily:
    """Reparameterizable family ``x = g_theta(eps)``, ``eps ~ r_eps``.

    Concrete families are :class:`GaussianMean`, :class:`GaussianMeanChol`
    and :class:`StudentTLocScale`; use :func:`make_proposal` to build one
    from its string identifier.
    """

    dim_x: int
    family_kind: str = field(init=False, default="")

    @property
    def dim_theta(self) -> int:
        raise NotImplementedError

    @property
    def dim_eps(self) -> int:
        return self.dim_x

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim_theta,):
            raise ContractError(f"theta must have shape ({self.dim_theta},), got {theta.shape}")
        return theta

    def sample_eps(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n < 1:
            raise ContractError("n must be >= 1")
        return rng.standard_normal((n, self.dim_x))

    def sample(self, theta, rng, n):
        """Draw ``n`` points from ``q_theta``."""
        return self.push_forward(theta, self.sample_eps(rng, n))

    def log_density_many(self, thetas, x):
        """``log q_theta(x)`` for a stack of parameters: ``(B, d_theta)`` x ``(G, d_x)`` -> ``(B, G)``."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        xb, _ = _as_batch(x, self.dim_x, "x")
        return np.stack([self.log_density(t, xb) for t in thetas])


@dataclass(frozen=True)
class GaussianMean(ProposalFamily):
    """``N(theta, I)``; an exponential family in ``theta``."""

    def __post_init__(self):
        object.__setattr__(self, "family_kind", "gaussian-mean")

    @property
    def dim_theta(self):
        return self.dim_x

    def push_forward(self, theta, eps):
        theta = self._check_theta(theta)
        eb, single = _as_batch(eps, self.dim_eps, "eps")
        x = eb + theta
        return x[0] if single else x

    def log_density(self, theta, x):
        theta = self._check_theta(theta)
        xb, single = _as_batch(x, self.dim_x, "x")
        r = xb - theta
        out = -0.5 * self.dim_x * LOG_2PI - 0.5 * np.einsum("ni,ni->n", r, r)
        return out[0] if single else out

    def log_density_many(self, thetas, x):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        xb, _ = _as_batch(x, self.dim_x, "x")
        sq = np.zeros((thetas.shape[0], xb.shape[0]))
        for i in range(self.dim_x):
            sq += (xb[None, :, i] - thetas[:, i, None]) ** 2
        return -0.5 * self.dim_x * LOG_2PI - 0.5 * sq

    def score_theta(self, theta, x):
        theta = self._check_theta(theta)
        xb, single = _as_batch(x, self.dim_x, "x")
        out = xb - theta
        return out[0] if single else out

    def grad_x_log_density(self, theta, x):
        theta = self._check_theta(theta)
        xb, single = _as_batch(x, self.dim_x, "x")
        out = theta - xb
        return out[0] if single else out

    def pathwise_jacobian(self, theta, eps):
        self._check_theta(theta)
        eb, single = _as_batch(eps, self.dim_eps, "eps")
        out = np.broadcast_to(np.eye(self.dim_x), (eb.shape[0], self.dim_x, self.dim_x)).copy()
        return out[0] if single else out


@dataclass(frozen=True)
class _LocScale(ProposalFamily):
    """Shared machinery for ``x = mu + L s`` with ``L`` lower triangular.

    ``theta = (mu, tril(L))`` where the lower triangle is stored row by row
    and the diagonal entries are stored as logarithms.
    """

    def __post_init__(self):
        d = self.dim_x
        rows, cols = np.tril_indices(d)
        object.__setattr__(self, "_rows", rows)
        object.__setattr__(self, "_cols", cols)
        object.__setattr__(self, "_is_diag", rows == cols)

    @property
    def dim_theta(self):
        d = self.dim_x
        return d + d * (d + 1) // 2

    def pack(self, mu, chol):
        """Inverse of :meth:`unpack`: build ``theta`` from ``mu`` and a lower factor."""
        mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
        chol = np.atleast_2d(np.asarray(chol, dtype=np.float64))
        vals = chol[self._rows, self._cols].copy()
        if np.any(vals[self._is_diag] <= 0):
            raise ContractError("scale factor needs a positive diagonal")
        vals[self._is_diag] = np.log(vals[self._is_diag])
        return np.concatenate([mu, vals])

    def unpack(self, theta):
        """Return ``(mu, L)``; the last result is memoized per parameter vector."""
        theta = self._check_theta(theta)
        key = theta.tobytes()
        cached = self.__dict__.get("_last_unpack")
        if cached is not None and cached[0] == key:
            return cached[1], cached[2]
        d = self.dim_x
        vals = theta[d:].copy()
        vals[self._is_diag] = np.exp(vals[self._is_diag])
        chol = np.zeros((d, d))
        chol[self._rows, self._cols] = vals
        mu = theta[:d].copy()
        # one tuple store keeps the memo consistent across threads
        object.__setattr__(self, "_last_unpack", (key, mu, chol))
        return mu, chol

    # standardized residual y = L^-1 (x - mu) and a = L^-T y
    def _solve_lower(self, chol, r):
        d = self.dim_x
        if d == 1:
            return r / chol[0, 0]
        y = np.empty_like(r)
        for i in range(d):
            y[:, i] = (r[:, i] - y[:, :i] @ chol[i, :i]) / chol[i, i]
        return y

    def _solve_upper_t(self, chol, y):
        d = self.dim_x
        if d == 1:
            return y / chol[0, 0]
        a = np.empty_like(y)
        for i in reversed(range(d)):
            a[:, i] = (y[:, i] - a[:, i + 1:] @ chol[i + 1:, i]) / chol[i, i]
        return a

    def _standardize(self, theta, x):
        mu, chol = self.unpack(theta)
        xb, single = _as_batch(x, self.dim_x, "x")
        y = self._solve_lower(chol, xb - mu)
        return chol, xb, y, single

    # family-specific pieces
    def _log_kernel(self, delta):
        raise NotImplementedError

    def _kernel_weight(self, delta):
        raise NotImplementedError

    def _standard_draws(self, eb):
        return eb

    def push_forward(self, theta, eps):
        mu, chol = self.unpack(theta)
        eb, single = _as_batch(eps, self.dim_eps, "eps")
        s = self._standard_draws(eb)
        x = mu + s @ chol.T
        return x[0] if single else x

    def log_density(self, theta, x):
        chol, _, y, single = self._standardize(theta, x)
        delta = np.einsum("ni,ni->n", y, y)
        out = self._log_kernel(delta) - np.log(np.diag(chol)).sum()
        return out[0] if single else out

    def log_density_many(self, thetas, x):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        xb, _ = _as_batch(x, self.dim_x, "x")
        d = self.dim_x
        if d != 1:
            return super().log_density_many(thetas, xb)
        mu = thetas[:, 0:1]
        log_sd = thetas[:, 1:2]
        y = (xb[None, :, 0] - mu) * np.exp(-log_sd)
        return self._log_kernel(y * y) - log_sd

    def score_theta(self, theta, x):
        chol, _, y, single = self._standardize(theta, x)
        delta = np.einsum("ni,ni->n", y, y)
        c = self._kernel_weight(delta)[:, None]
        a = self._solve_upper_t(chol, y)
        ca = c * a
        rows, cols = self._rows, self._cols
        g_l = ca[:, rows] * y[:, cols]
        diag = self._is_diag
        # log-diagonal chain rule: dL_ii/dlog L_ii = L_ii; the -L^-T term is -1/L_ii
        g_l[:, diag] = g_l[:, diag] * np.diag(chol)[rows[diag]] - 1.0
        out = np.concatenate([ca, g_l], axis=1)
        return out[0] if single else out

    def grad_x_log_density(self, theta, x):
        chol, _, y, single = self._standardize(theta, x)
        delta = np.einsum("ni,ni->n", y, y)
        c = self._kernel_weight(delta)[:, None]
        out = -c * self._solve_upper_t(chol, y)
        return out[0] if single else out

    def pathwise_jacobian(self, theta, eps):
        _, chol = self.unpack(theta)
        eb, single = _as_batch(eps, self.dim_eps, "eps")
        s = self._standard_draws(eb)
        n, d = s.shape[0], self.dim_x
        jac = np.zeros((n, d, self.dim_theta))
        jac[:, np.arange(d), np.arange(d)] = 1.0
        for k, (i, j) in enumerate(zip(self._rows, self._cols)):
            col = d + k
            jac[:, i, col] = s[:, j] * (chol[i, i] if i == j else 1.0)
        return jac[0] if single else jac


@dataclass(frozen=True)
class GaussianMeanChol(_LocScale):
    """``N(mu, L L')`` with ``L`` stored via its log-diagonal Cholesky factor."""

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "family_kind", "gaussian-meanchol")
        object.__setattr__(self, "_const", -0.5 * self.dim_x * LOG_2PI)

    def _log_kernel(self, delta):
        return self._const - 0.5 * delta

    def _kernel_weight(self, delta):
        return np.ones_like(delta)


@dataclass(frozen=True)
class StudentTLocScale(_LocScale):
    """Multivariate Student-t with location ``mu``, scale ``L`` and fixed ``nu``.

    The base noise is ``(z, u)`` with ``z ~ N(0, I)`` and ``u ~ chi2(nu)``
    stored as the last coordinate, so ``x = mu + L z / sqrt(u / nu)``.
    """

    nu: float = 5.0

    def __post_init__(self):
        super().__post_init__()
        if not self.nu > 0:
            raise ContractError("degrees of freedom must be positive")
        d, nu = self.dim_x, self.nu
        const = gammaln(0.5 * (nu + d)) - gammaln(0.5 * nu) - 0.5 * d * math.log(nu * math.pi)
        object.__setattr__(self, "family_kind", "student-t-locscale")
        object.__setattr__(self, "_const", float(const))

    @property
    def dim_eps(self):
        return self.dim_x + 1

    def sample_eps(self, rng, n):
        if n < 1:
            raise ContractError("n must be >= 1")
        z = rng.standard_normal((n, self.dim_x))
        u = rng.chisquare(self.nu, size=(n, 1))
        return np.concatenate([z, u], axis=1)

    def _standard_draws(self, eb):
        u = eb[:, -1:]
        if np.any(u <= 0):
            raise ContractError("chi-square coordinate of eps must be positive")
        return eb[:, :-1] / np.sqrt(u / self.nu)

    def _log_kernel(self, delta):
        return self._const - 0.5 * (self.nu + self.dim_x) * np.log1p(delta / self.nu)

    def _kernel_weight(self, delta):
        return (self.nu + self.dim_x) / (self.nu + delta)


def make_proposal(kind: str, dim_x: int = 1, **params) -> ProposalFamily:
    """Build a proposal family from its string identifier."""
    if kind == "gaussian-mean":
        return GaussianMean(dim_x, **params)
    if kind == "gaussian-meanchol":
        return GaussianMeanChol(dim_x, **params)
    if kind == "student-t-locscale":
        return StudentTLocScale(dim_x, **params)
    raise ContractError(f"unknown proposal family {kind!r}; expected one of {FAMILY_KINDS}")
