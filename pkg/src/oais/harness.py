"""Adaptive importance sampling runs, replication, rate fits and calibration sweeps.

One iteration of :func:`run_ais` adapts the proposal with a fresh batch of
base noise, then draws ``N`` integration samples from the updated proposal
and records the weight diagnostics and the self-normalized estimates. The
two phases use separate random streams derived from the run seed.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from oais import adapt, grad, kernels, oracle
from oais.config import RunConfig, make_test_function
from oais.errors import DegenerateEnsembleError, DivergenceError, HeavyTailError, NonFiniteError, OAISError
from oais.snis import diagnostics, log_weights

log = logging.getLogger(__name__)

_ABORTS = (DivergenceError, DegenerateEnsembleError, NonFiniteError, HeavyTailError)


@dataclass
class RunRecord:
    """Per-iteration trace of one run; arrays have one row per completed iteration."""

    run_id: int
    seed: int
    config_hash: str
    k: np.ndarray
    theta: np.ndarray
    rho_hat: np.ndarray
    r_hat: np.ndarray
    z_hat: np.ndarray
    ess: np.ndarray
    estimates: dict
    wall_ms: np.ndarray
    abort_reason: Optional[str] = None

    @property
    def completed(self) -> int:
        return int(self.k.shape[0])


def _estimator_name(phi_name):
    return f"est_{phi_name}"


def run_seed(master_seed: int, replicate: int) -> int:
    """64-bit seed of replicate ``replicate`` under ``master_seed``."""
    ss = np.random.SeedSequence([master_seed, replicate])
    return int(ss.generate_state(1, np.uint64)[0])


def _streams(seed):
    adapt_ss, sample_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(adapt_ss)), np.random.Generator(np.random.PCG64(sample_ss))


def initial_state(config: RunConfig, theta0) -> adapt.OptimizerState:
    o = config.optimizer
    return adapt.OptimizerState(
        scheme=o["scheme"],
        theta=theta0,
        step_size=o["eta"],
        inv_temp=o["beta"],
        friction=o["gamma"],
        eta_max=o["eta_max"],
        momentum_order=o["sghmc_momentum_order"],
        divergence_radius=o["divergence_radius"],
    )


def run_ais(config: RunConfig, seed: int, run_id: int = 0, *, target=None, proposal=None) -> RunRecord:
    """Run ``K`` iterations of adapt-sample-weight and return the trace.

    Divergence and degenerate ensembles stop the run early; the partial
    trace is returned with ``abort_reason`` set.
    """
    target = target or config.build_target()
    proposal = proposal or config.build_proposal(target.dim_x)
    o, r = config.optimizer, config.run
    n, K = r["N"], r["K"]
    kind, batch, clip_norm = o["grad_estimator"], int(o["grad_batch"]), o["clip_norm"]
    phis = [(name, make_test_function(name, r["indicator_threshold"])) for name in r["test_functions"]]
    adapt_rng, sample_rng = _streams(seed)
    state = initial_state(config, config.theta0(proposal))
    frozen = state.step_size == 0.0
    exact = o["scheme"] == "exact-langevin"
    quad = config.quadrature(target.dim_x) if exact else None

    d_theta = proposal.dim_theta
    theta_tr = np.empty((K, d_theta))
    stats = np.empty((K, 4))
    est = np.empty((K, len(phis)))
    wall = np.empty(K)
    done, reason = 0, None
    for i in range(K):
        t0 = time.perf_counter()
        try:
            if not frozen:
                if exact:
                    g = oracle.quad_grad_R(target, proposal, state.theta, quad)
                else:
                    eps = proposal.sample_eps(adapt_rng, batch)
                    g = grad.clip(grad.estimate(kind, target, proposal, state.theta, eps), clip_norm)
                state = adapt.step(state, g, adapt_rng)
            theta = state.theta
            x = proposal.sample(theta, sample_rng, n)
            lw = log_weights(target, proposal, theta, x)
            dg = diagnostics(lw)
            w = kernels.softmax(lw)
            for j, (_, phi) in enumerate(phis):
                est[i, j] = kernels.weighted_sum(w, phi(x))
        except _ABORTS as e:
            reason = f"{type(e).__name__} at k={i + 1}: {e}"
            log.warning("run %d aborted: %s", run_id, reason)
            break
        theta_tr[i] = theta
        stats[i] = (dg.rho_hat, dg.r_hat, dg.z_hat, dg.ess)
        wall[i] = (time.perf_counter() - t0) * 1e3
        done = i + 1

    return RunRecord(
        run_id=run_id,
        seed=int(seed),
        config_hash=config.config_hash,
        k=np.arange(1, done + 1),
        theta=theta_tr[:done],
        rho_hat=stats[:done, 0],
        r_hat=stats[:done, 1],
        z_hat=stats[:done, 2],
        ess=stats[:done, 3],
        estimates={_estimator_name(name): est[:done, j] for j, (name, _) in enumerate(phis)},
        wall_ms=wall[:done],
        abort_reason=reason,
    )


# ------------------------------------------------------------ replicates


@dataclass
class ReplicateResult:
    records: list
    truth: dict           # phi name -> (phi, pi) by quadrature
    summary: dict         # column -> array over k
    per_run_R: list       # quad R(theta_k) for each record, or None
    log_Z: float

    @property
    def failures(self):
        return [rec for rec in self.records if rec.abort_reason is not None]


def _run_one(args):
    config, seed, run_id = args
    return run_ais(config, seed, run_id)


def ground_truth(config: RunConfig, target=None) -> dict:
    target = target or config.build_target()
    spec = config.quadrature(target.dim_x)
    r = config.run
    return {
        name: oracle.quad_expectation(target, make_test_function(name, r["indicator_threshold"]), spec)
        for name in r["test_functions"]
    }


def run_replicates(config: RunConfig, seeds: Optional[Sequence[int]] = None, jobs: int = 1) -> ReplicateResult:
    """Independent runs with seeds derived from ``master_seed``.

    Aggregates per-iteration MSE and bias against quadrature ground truth,
    the mean ``rho_hat`` and the mean quadrature ``R(theta_k)``. Results do
    not depend on ``jobs``.
    """
    r = config.run
    if seeds is None:
        seeds = [run_seed(r["master_seed"], i) for i in range(r["replicates"])]
    target = config.build_target()
    truth = ground_truth(config, target)
    tasks = [(config, int(s), i) for i, s in enumerate(seeds)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one, tasks))
    else:
        records = [_run_one(t) for t in tasks]

    proposal = config.build_proposal(target.dim_x)
    per_run_R, log_Z = None, math.nan
    if r["quad_track"] and target.dim_x <= 2:
        spec = config.quadrature(target.dim_x)
        log_Z = oracle.log_quad_Z(target, spec)
        per_run_R = [
            oracle.quad_R_many(target, proposal, rec.theta, spec, on_heavy_tail="inf")
            if rec.completed else np.empty(0)
            for rec in records
        ]
    summary = summarize(records, truth, r["K"], per_run_R)
    return ReplicateResult(records, truth, summary, per_run_R, log_Z)


def summary_columns(test_functions) -> list:
    cols = ["k", "n_runs"]
    cols += [f"mse_{n}" for n in test_functions]
    cols += [f"bias_{n}" for n in test_functions]
    return cols + ["mean_rho_hat", "mean_R_quad"]


def summarize(records, truth: dict, K: int, per_run_R=None) -> dict:
    """Per-iteration aggregates over the runs that reached each iteration."""
    names = list(truth)
    count = np.zeros(K)
    sq = {n: np.zeros(K) for n in names}
    err = {n: np.zeros(K) for n in names}
    rho = np.zeros(K)
    rq = np.zeros(K)
    for j, rec in enumerate(records):
        m = rec.completed
        count[:m] += 1
        for n in names:
            e = rec.estimates[_estimator_name(n)] - truth[n]
            sq[n][:m] += e * e
            err[n][:m] += e
        rho[:m] += rec.rho_hat
        if per_run_R is not None:
            rq[:m] += per_run_R[j]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = {"k": np.arange(1, K + 1), "n_runs": count.astype(int)}
        out.update({f"mse_{n}": sq[n] / count for n in names})
        out.update({f"bias_{n}": err[n] / count for n in names})
        out["mean_rho_hat"] = rho / count
        out["mean_R_quad"] = rq / count if per_run_R is not None else np.full(K, np.nan)
    return out


def plateau_mse(result: ReplicateResult, phi_name: str, start: int) -> tuple:
    """Plateau MSE over iterations ``k > start`` and its standard error.

    Each run contributes its time-averaged squared error over the window;
    the spread of those per-run means gives the standard error.
    """
    per_run = []
    truth = result.truth[phi_name]
    for rec in result.records:
        if rec.abort_reason is None and rec.completed > start:
            e = rec.estimates[_estimator_name(phi_name)][start:] - truth
            per_run.append(np.mean(e * e))
    per_run = np.asarray(per_run)
    if per_run.size == 0:
        return math.nan, math.nan
    se = per_run.std(ddof=1) / math.sqrt(per_run.size) if per_run.size > 1 else math.nan
    return float(per_run.mean()), float(se)


# ------------------------------------------------------------ rate fit


@dataclass
class RateFit:
    """Fit of ``c1 * exp(-c0 * eta * k) + offset``; ``rate = c0 * eta``."""

    c0_hat: float
    c1_hat: float
    offset_hat: float
    residual: float
    eta: float
    ok: bool = True
    message: str = ""

    @property
    def rate(self):
        return self.c0_hat * self.eta


def _lm(f, jac, p0, y, iters=200, lam=1e-3):
    """Levenberg-Marquardt on ``sum (f(p) - y)^2``."""
    p = np.asarray(p0, dtype=np.float64)
    r = f(p) - y
    cost = float(r @ r)
    for _ in range(iters):
        J = jac(p)
        A = J.T @ J
        g = J.T @ r
        improved = False
        while lam < 1e12:
            step = np.linalg.solve(A + lam * np.diag(np.diag(A) + 1e-12), -g)
            p_new = p + step
            r_new = f(p_new) - y
            c_new = float(r_new @ r_new)
            if np.isfinite(c_new) and c_new < cost:
                improved = True
                break
            lam *= 10.0
        if not improved:
            break
        rel = (cost - c_new) / max(cost, 1e-300)
        p, r, cost = p_new, r_new, c_new
        lam = max(lam / 10.0, 1e-12)
        if rel < 1e-15 or np.linalg.norm(step) < 1e-14 * (1 + np.linalg.norm(p)):
            break
    return p, cost


def fit_rate(k, values, eta: float, min_points: int = 20) -> RateFit:
    """Fit ``c1 exp(-c0 eta k) + offset`` by damped Gauss-Newton with multi-start.

    ``c0`` is parameterized as ``exp(s)`` so the fitted decay constant is
    nonnegative. The residual is the RMSE of the fit in log space.
    Non-finite values are dropped (and noted in ``message``). ``ok`` is
    false when the amplitude or offset is negative or the fitted decay
    time lies outside the observed window.
    """
    k = np.asarray(k, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    ok = np.isfinite(y)
    n_dropped = int(y.size - ok.sum())
    k, y = k[ok], y[ok]
    if k.size < min_points:
        raise ValueError(f"fit_rate needs at least {min_points} finite points, got {k.size}")
    if not eta > 0:
        raise ValueError("eta must be positive")
    t = eta * k
    span = t.max() - t.min()

    def model(p):
        return p[1] * np.exp(-np.exp(p[0]) * t) + p[2]

    def jac(p):
        e = np.exp(-np.exp(p[0]) * t)
        return np.stack([-p[1] * np.exp(p[0]) * t * e, e, np.ones_like(t)], axis=1)

    best = None
    scale = max(np.abs(y).max(), 1e-300)
    for c0 in 10.0 ** np.arange(-3, 4, dtype=float) / max(span, 1e-300):
        e = np.exp(-c0 * t)
        design = np.stack([e, np.ones_like(t)], axis=1)
        (c1, off), *_ = np.linalg.lstsq(design, y, rcond=None)
        p, cost = _lm(model, jac, [math.log(c0), c1, off], y)
        if best is None or cost < best[1]:
            best = (p, cost)
    p, _ = best
    c0, c1, off = float(np.exp(p[0])), float(p[1]), float(p[2])
    fitted = model(p)
    with np.errstate(invalid="ignore", divide="ignore"):
        logres = np.log(np.where(fitted > 0, fitted, np.nan)) - np.log(np.where(y > 0, y, np.nan))
    residual = float(np.sqrt(np.nanmean(logres**2))) if np.isfinite(logres).any() else math.nan
    fit = RateFit(c0, c1, off, residual, float(eta))
    problems = []
    if c1 < -1e-9 * scale:
        problems.append("curve is not decaying (fitted amplitude is negative)")
    if c0 * span < 1e-2 or c0 * span > 1e4:
        problems.append("decay time is not resolved by the observed window")
    if np.all(y > 0) and off < 0:
        problems.append("fitted offset is negative for positive data")
    if n_dropped:
        problems.append(f"{n_dropped} non-finite points were dropped")
    if problems[: len(problems) - (1 if n_dropped else 0)]:
        fit.ok = False
    fit.message = "; ".join(problems)
    return fit


# ------------------------------------------------------------ sweep


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)      # one dict per (alpha, eta)
    slopes: dict = field(default_factory=dict)    # (alpha, phi) -> (slope, se, lo, hi)


def sweep_n(alpha: float, eta: float) -> int:
    """Particles for a cell: ``ceil(eta ** -alpha)``, at least one."""
    return max(1, math.ceil(eta ** (-alpha) - 1e-9))


def slope_fit(log_eta, log_mse, se_log):
    """Weighted least-squares slope of ``log_mse`` on ``log_eta`` with a 95% interval.

    The per-point standard errors are taken as known, so the interval uses
    the normal quantile.
    """
    x = np.asarray(log_eta, dtype=np.float64)
    y = np.asarray(log_mse, dtype=np.float64)
    s = np.asarray(se_log, dtype=np.float64)
    if x.size < 2:
        return math.nan, math.nan, math.nan, math.nan
    w = 1.0 / np.where(s > 0, s, np.nan) ** 2
    if not np.isfinite(w).all():
        w = np.ones_like(x)
    xm = np.sum(w * x) / w.sum()
    ym = np.sum(w * y) / w.sum()
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    se = float(math.sqrt(1.0 / sxx))
    return slope, se, slope - 1.96 * se, slope + 1.96 * se


def calibration_sweep(base: RunConfig, alphas, etas, jobs: int = 1) -> SweepResult:
    """Run replicate sets with ``N = ceil(eta^-alpha)`` for every ``(alpha, eta)``."""
    if not len(alphas) or not len(etas):
        raise ValueError("alphas and etas must be non-empty")
    names = base.run["test_functions"]
    out = SweepResult()
    frac = base.run["plateau_fraction"]
    K = base.run["K"]
    start = K - max(1, int(round(frac * K)))
    for alpha in alphas:
        cells = []
        for eta in etas:
            n = sweep_n(alpha, eta)
            eta_max = max(base.optimizer["eta_max"], eta)
            cfg = base.with_overrides(optimizer={"eta": float(eta), "eta_max": eta_max}, run={"N": n})
            res = run_replicates(cfg, jobs=jobs)
            row = {"alpha": float(alpha), "eta": float(eta), "N": n, "failures": len(res.failures)}
            for name in names:
                m, se = plateau_mse(res, name, start)
                row[f"plateau_mse_{name}"] = m
                row[f"plateau_se_{name}"] = se
            cells.append(row)
        for name in names:
            mse = np.array([c[f"plateau_mse_{name}"] for c in cells])
            se = np.array([c[f"plateau_se_{name}"] for c in cells])
            with np.errstate(divide="ignore", invalid="ignore"):
                fit = slope_fit(np.log(etas), np.log(mse), se / mse)
            out.slopes[(float(alpha), name)] = fit
            for c in cells:
                c[f"slope_{name}"], c[f"slope_se_{name}"], c[f"slope_lo_{name}"], c[f"slope_hi_{name}"] = fit
        out.rows.extend(cells)
    return out


def sweep_columns(test_functions) -> list:
    cols = ["alpha", "eta", "N", "failures"]
    for n in test_functions:
        cols += [f"plateau_mse_{n}", f"plateau_se_{n}"]
    for n in test_functions:
        cols += [f"slope_{n}", f"slope_se_{n}", f"slope_lo_{n}", f"slope_hi_{n}"]
    return cols


def run_columns(d_theta, test_functions) -> list:
    return (["run_id", "seed", "k"] + [f"theta_{i}" for i in range(d_theta)]
            + ["rho_hat", "r_hat", "z_hat", "ess"]
            + [_estimator_name(n) for n in test_functions] + ["wall_ms"])


def record_rows(rec: RunRecord, timing: bool = True):
    """Rows of a run record in the run CSV column order."""
    for i in range(rec.completed):
        row = [rec.run_id, rec.seed, int(rec.k[i]), *rec.theta[i].tolist(),
               rec.rho_hat[i], rec.r_hat[i], rec.z_hat[i], rec.ess[i]]
        row += [rec.estimates[key][i] for key in rec.estimates]
        row.append(rec.wall_ms[i] if timing else 0.0)
        yield row


def summary_rows(summary: dict, columns):
    n = len(summary["k"])
    for i in range(n):
        yield [summary[c][i] for c in columns]


def burn_in(fit: RateFit, k_max: int, factor: float = 5.0) -> int:
    """Iteration after which the fitted transient is below ``exp(-factor)`` of its size."""
    if not fit.ok or fit.rate <= 0:
        return 0
    return min(int(math.ceil(factor / fit.rate)), k_max)


__all__ = [
    "RunRecord",
    "ReplicateResult",
    "RateFit",
    "SweepResult",
    "run_ais",
    "run_replicates",
    "run_seed",
    "summarize",
    "plateau_mse",
    "fit_rate",
    "calibration_sweep",
    "sweep_n",
    "slope_fit",
    "burn_in",
    "OAISError",
]
