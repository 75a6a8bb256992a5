import math

import numpy as np
import pytest

from oais import harness
from oais.config import make_test_function, validate
from oais.harness import (
    burn_in,
    calibration_sweep,
    fit_rate,
    plateau_mse,
    run_ais,
    run_replicates,
    run_seed,
    slope_fit,
    sweep_n,
)
from oais.io import read_csv, write_csv
from oais.model import gaussian_target, make_proposal
from oais.snis import diagnostics, log_weights


def _cfg(proposal=None, optimizer=None, run=None, target=None):
    raw = {
        "target": target or {"kind": "gaussian", "mean": [0.0]},
        "proposal": proposal or {"family": "gaussian-mean", "theta0": [0.5]},
        "optimizer": {"scheme": "sgld", "eta": 1e-3, "beta": 1e4, **(optimizer or {})},
        "run": {"N": 50, "K": 20, "replicates": 3, "test_functions": ["tanh", "const"], **(run or {})},
    }
    return validate(raw)


# ------------------------------------------------------------------ run_ais

def test_run_record_shape_and_invariants():
    rec = run_ais(_cfg(), seed=3)
    assert rec.abort_reason is None and rec.completed == 20
    np.testing.assert_array_equal(rec.k, np.arange(1, 21))
    assert rec.theta.shape == (20, 1)
    assert set(rec.estimates) == {"est_tanh", "est_const"}
    assert np.all(rec.rho_hat >= 1.0) and np.all(rec.ess <= 50.0)
    assert np.all(rec.wall_ms > 0)
    assert len(rec.config_hash) == 16


def test_frozen_adaptation_equals_fixed_proposal_is():
    cfg = _cfg(optimizer={"eta": 0.0}, run={"K": 5})
    rec = run_ais(cfg, seed=11)
    np.testing.assert_array_equal(rec.theta, np.full((5, 1), 0.5))
    # replay the sampling substream by hand
    _, sample_rng = harness._streams(11)
    q, t = make_proposal("gaussian-mean", 1), gaussian_target([0.0])
    for i in range(5):
        x = q.sample(np.array([0.5]), sample_rng, 50)
        lw = log_weights(t, q, np.array([0.5]), x)
        w = np.exp(lw - lw.max())
        w /= w.sum()
        assert rec.estimates["est_tanh"][i] == pytest.approx(float(w @ np.tanh(x[:, 0])), rel=1e-12)
        assert rec.rho_hat[i] == pytest.approx(diagnostics(lw).rho_hat, rel=1e-12)


def test_single_sample_single_iteration():
    rec = run_ais(_cfg(run={"K": 1, "N": 1}), seed=5)
    adapt_rng, sample_rng = harness._streams(5)
    q = make_proposal("gaussian-mean", 1)
    x = q.sample(rec.theta[0], sample_rng, 1)
    assert rec.completed == 1
    assert rec.estimates["est_tanh"][0] == math.tanh(x[0, 0])
    assert rec.estimates["est_const"][0] == 1.0


def test_run_is_deterministic():
    a, b = run_ais(_cfg(), 99), run_ais(_cfg(), 99)
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.estimates["est_tanh"], b.estimates["est_tanh"])
    c = run_ais(_cfg(), 100)
    assert not np.array_equal(a.theta, c.theta)


def test_adaptation_and_sampling_streams_are_separate():
    # changing the gradient batch consumes more adapt draws but leaves the sampling stream alone
    a = run_ais(_cfg(optimizer={"eta": 0.0}, run={"K": 3}), 7)
    b = run_ais(_cfg(optimizer={"eta": 0.0, "grad_batch": 9}, run={"K": 3}), 7)
    np.testing.assert_array_equal(a.estimates["est_tanh"], b.estimates["est_tanh"])


def test_divergence_aborts_with_partial_record():
    cfg = _cfg(optimizer={"eta": 0.9, "divergence_radius": 5.0, "grad_estimator": "score"},
               proposal={"family": "gaussian-mean", "theta0": [3.0]}, run={"K": 50})
    rec = run_ais(cfg, 1)
    assert rec.abort_reason.startswith("DivergenceError")
    assert rec.completed < 50 and rec.theta.shape[0] == rec.completed


def test_exact_langevin_descends():
    cfg = _cfg(optimizer={"scheme": "exact-langevin", "eta": 0.01, "beta": "inf"},
               proposal={"family": "gaussian-meanchol", "theta0": [1.0, 0.3]}, run={"K": 200})
    rec = run_ais(cfg, 0)
    assert abs(rec.theta[-1, 0]) < 0.2 and abs(rec.theta[-1, 1]) < 0.2


def test_sgld_reaches_optimum_rho_hat():
    cfg = _cfg(run={"K": 5000, "N": 100, "test_functions": ["tanh"]}, optimizer={"grad_estimator": "pathwise"})
    rec = run_ais(cfg, 0)
    assert rec.abort_reason is None
    assert rec.rho_hat[-500:].mean() <= 1.05


# --------------------------------------------------------------- replicates

def test_run_seeds_are_distinct_and_stable():
    seeds = [run_seed(0, i) for i in range(50)]
    assert len(set(seeds)) == 50 and seeds == [run_seed(0, i) for i in range(50)]
    assert run_seed(1, 0) != run_seed(0, 0)


def test_replicates_with_identical_seeds_are_identical():
    res = run_replicates(_cfg(), seeds=[17, 17])
    a, b = res.records
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.estimates["est_tanh"], b.estimates["est_tanh"])


def test_constant_function_has_zero_mse():
    res = run_replicates(_cfg())
    assert np.all(res.summary["mse_const"] < 1e-28)
    assert np.all(res.summary["n_runs"] == 3)


def test_replicates_independent_of_jobs():
    cfg = _cfg()
    a, b = run_replicates(cfg, jobs=1), run_replicates(cfg, jobs=2)
    for key in a.summary:
        np.testing.assert_array_equal(a.summary[key], b.summary[key])


def test_summary_tracks_quadrature_R():
    res = run_replicates(_cfg(optimizer={"eta": 0.0}))
    # R(mu) = 2 pi exp(mu^2) for the unit-variance location family
    np.testing.assert_allclose(res.summary["mean_R_quad"], 2 * math.pi * math.exp(0.25), rtol=1e-9)
    assert res.log_Z == pytest.approx(0.5 * math.log(2 * math.pi), rel=1e-12)
    assert res.truth["tanh"] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.slow
def test_plateau_mse_below_bound():
    cfg = _cfg(run={"N": 100, "K": 400, "replicates": 1000, "test_functions": ["tanh"], "quad_track": False},
               optimizer={"grad_estimator": "pathwise"})
    res = run_replicates(cfg)
    assert not res.failures
    mse = res.summary["mse_tanh"][-100:]
    assert mse.max() <= 4.0 * (1.0 + 0.05) / 100


def test_plateau_mse_window():
    res = run_replicates(_cfg(run={"K": 30, "replicates": 4}))
    m, se = plateau_mse(res, "tanh", 10)
    manual = np.mean([np.mean((r.estimates["est_tanh"][10:] - res.truth["tanh"]) ** 2) for r in res.records])
    assert m == pytest.approx(manual, rel=1e-12)
    assert se > 0


# ----------------------------------------------------------------- fit_rate

def test_fit_rate_recovers_synthetic_curve():
    k = np.arange(1, 501)
    y = 3.0 * np.exp(-0.02 * k) + 1.2
    fit = fit_rate(k, y, eta=0.01)
    assert fit.ok
    assert fit.rate == pytest.approx(0.02, rel=0.01)
    assert fit.c0_hat == pytest.approx(2.0, rel=0.01)
    assert fit.c1_hat == pytest.approx(3.0, rel=0.01)
    assert fit.offset_hat == pytest.approx(1.2, rel=0.01)
    assert fit.residual < 1e-6


def test_fit_rate_constant_curve():
    k = np.arange(1, 101)
    fit = fit_rate(k, np.full(100, 4.0), eta=0.1)
    assert fit.c0_hat >= 0
    assert abs(fit.c1_hat) < 1e-6
    assert fit.offset_hat == pytest.approx(4.0, rel=1e-6)


def test_fit_rate_rejects_growth():
    k = np.arange(1, 201)
    fit = fit_rate(k, 5.0 - 3.0 * np.exp(-0.03 * k), eta=1.0)
    assert not fit.ok and "not decaying" in fit.message
    assert burn_in(fit, 200) == 0


def test_fit_rate_input_checks():
    with pytest.raises(ValueError):
        fit_rate(np.arange(10), np.ones(10), 0.1)
    with pytest.raises(ValueError):
        fit_rate(np.arange(30), np.ones(30), 0.0)
    y = 2.0 * np.exp(-0.05 * np.arange(100)) + 1.0
    y[5] = np.inf
    fit = fit_rate(np.arange(100), y, 1.0)
    assert fit.ok and "dropped" in fit.message


def test_fit_rate_on_measured_curve():
    cfg = _cfg(proposal={"family": "gaussian-meanchol", "theta0": [1.5, 0.5]},
               optimizer={"eta": 2e-3, "grad_estimator": "score"},
               run={"N": 20, "K": 1500, "replicates": 8, "test_functions": ["tanh"]})
    res = run_replicates(cfg)
    fit = fit_rate(res.summary["k"], res.summary["mean_R_quad"], 2e-3)
    r_star = 2 * math.pi
    assert math.isfinite(fit.residual)
    assert fit.c0_hat > 0
    assert fit.offset_hat >= r_star * (1 - 0.02)


def test_burn_in():
    fit = harness.RateFit(2.0, 1.0, 0.0, 0.0, 0.01)
    assert burn_in(fit, 10_000) == 250
    assert burn_in(fit, 100) == 100


# -------------------------------------------------------------------- sweep

def test_sweep_n():
    assert sweep_n(1.0, 1e-2) == 100
    assert sweep_n(1.0, 3e-3) == 334
    assert sweep_n(0.0, 0.5) == 1
    assert sweep_n(0.5, 0.01) == 10


def test_sweep_single_cell_matches_direct_call():
    base = _cfg(run={"K": 20, "replicates": 3, "test_functions": ["tanh"]})
    sw = calibration_sweep(base, [0.5], [1e-2])
    direct = run_replicates(base.with_overrides(optimizer={"eta": 1e-2}, run={"N": 10}))
    start = 20 - round(0.4 * 20)
    m, se = plateau_mse(direct, "tanh", start)
    row = sw.rows[0]
    assert row["N"] == 10 and row["plateau_mse_tanh"] == m and row["plateau_se_tanh"] == se


def test_sweep_alpha_zero_uses_one_particle():
    sw = calibration_sweep(_cfg(run={"K": 5, "replicates": 2, "test_functions": ["tanh"]}), [0.0], [1e-2, 1e-3])
    assert [r["N"] for r in sw.rows] == [1, 1]


def test_slope_fit_known_line():
    x = np.log([1e-3, 3e-3, 1e-2])
    y = 2.0 * x + 1.0
    slope, se, lo, hi = slope_fit(x, y, np.full(3, 0.1))
    assert slope == pytest.approx(2.0)
    assert lo < 2.0 < hi and hi - lo == pytest.approx(2 * 1.96 * se)


# ---------------------------------------------------------------------- csv

def test_csv_header_only(tmp_path):
    p = tmp_path / "e.csv"
    assert write_csv(p, ["a", "b"], []) == 0
    assert p.read_text() == "a,b\n"


def test_csv_roundtrip_exact(tmp_path, rng):
    vals = np.concatenate([rng.normal(size=20) * 1e-300, rng.normal(size=20) * 1e300, [math.pi, -0.0, math.inf]])
    p = tmp_path / "r.csv"
    write_csv(p, ["v"], ([v] for v in vals))
    back = read_csv(p)["v"]
    assert np.array_equal(back, vals)


def test_csv_rejects_ragged(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", ["a", "b"], [[1]])


def test_record_rows_match_columns():
    cfg = _cfg(proposal={"family": "gaussian-meanchol", "theta0": [0.5, 0.1]})
    rec = run_ais(cfg, 0)
    cols = harness.run_columns(2, cfg.run["test_functions"])
    rows = list(harness.record_rows(rec))
    assert len(rows) == 20 and all(len(r) == len(cols) for r in rows)
    assert cols[:5] == ["run_id", "seed", "k", "theta_0", "theta_1"]
    assert cols[-1] == "wall_ms"
    assert all(r[-1] == 0.0 for r in harness.record_rows(rec, timing=False))


def test_test_functions_are_bounded(rng):
    x = rng.normal(size=(1000, 1)) * 100
    for name in ("tanh", "indicator", "const"):
        assert np.max(np.abs(make_test_function(name)(x))) <= 1.0
