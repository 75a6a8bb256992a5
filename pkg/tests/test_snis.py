import math

import numpy as np
import pytest

from conftest import closed_form_rho
from oais.errors import ContractError, DegenerateEnsembleError, NonFiniteError
from oais.model import box_target, gaussian_target, make_proposal, target_from_proposal
from oais.snis import WeightedEnsemble, diagnostics, log_weights, normalize, snis_estimate


def test_log_weights_zero_when_target_is_proposal(rng):
    q = make_proposal("gaussian-meanchol", 1)
    theta = np.array([0.3, -0.2])
    x = q.sample(theta, rng, 50)
    assert np.all(log_weights(target_from_proposal(q, theta), q, theta, x) == 0.0)


def test_log_weights_constant_offset(rng):
    q = make_proposal("gaussian-meanchol", 2)
    theta = np.array([0.3, -0.2, 0.1, 0.4, 0.0])
    x = q.sample(theta, rng, 50)
    lw = log_weights(target_from_proposal(q, theta, log_scale=2.5), q, theta, x)
    np.testing.assert_allclose(lw, 2.5, rtol=1e-13)


def test_log_weights_direct_evaluation():
    q = make_proposal("gaussian-meanchol", 1)
    theta = np.array([0.0, 0.5 * math.log(2.0)])
    lw = log_weights(gaussian_target([0.0]), q, theta, np.array([[0.0]]))
    assert lw[0] == pytest.approx(0.5 * math.log(4 * math.pi), rel=1e-14)


def test_log_weights_outside_support_is_minus_inf():
    q = make_proposal("gaussian-mean", 1)
    lw = log_weights(box_target([0.0], [1.0]), q, np.array([0.0]), np.array([[0.5], [2.0]]))
    assert np.isfinite(lw[0]) and lw[1] == -np.inf


def test_log_weights_nan_reports_index():
    q = make_proposal("gaussian-mean", 1)
    x = np.array([[0.0], [np.nan], [1.0]])
    with pytest.raises(NonFiniteError) as info:
        log_weights(gaussian_target([0.0]), q, np.array([0.0]), x)
    assert info.value.index == 1


def test_normalize_examples():
    np.testing.assert_allclose(normalize([0, 0, 0, 0]), [0.25] * 4, rtol=1e-15)
    l2 = math.log(2)
    np.testing.assert_allclose(normalize([l2, l2, -np.inf, -np.inf]), [0.5, 0.5, 0, 0], rtol=1e-15)
    # 1000 + log 3 is itself only represented to about 1e-13
    np.testing.assert_allclose(normalize([1000.0, 1000.0 + math.log(3)]), [0.25, 0.75], rtol=1e-12)


def test_normalize_shift_invariant(rng):
    lw = rng.normal(size=20) * 5
    np.testing.assert_allclose(normalize(lw), normalize(lw + 700.0), rtol=1e-12)


def test_normalize_rejects_degenerate_and_invalid():
    with pytest.raises(DegenerateEnsembleError):
        normalize([-np.inf, -np.inf])
    with pytest.raises(NonFiniteError):
        normalize([0.0, np.nan])
    with pytest.raises(NonFiniteError):
        normalize([0.0, np.inf])
    with pytest.raises(ContractError):
        normalize([])


def test_snis_constant_function(rng):
    ens = WeightedEnsemble.from_log_weights(rng.normal(size=(30, 1)), rng.normal(size=30) * 4)
    assert snis_estimate(ens, lambda x: np.full(x.shape[0], 3.5)) == pytest.approx(3.5, rel=1e-14)


def test_snis_single_sample():
    ens = WeightedEnsemble.from_log_weights(np.array([[0.8]]), np.array([-3.0]))
    assert snis_estimate(ens, lambda x: np.tanh(x[:, 0])) == pytest.approx(math.tanh(0.8), rel=1e-15)


def test_snis_gaussian_mean_by_symmetry(rng):
    q = make_proposal("gaussian-meanchol", 1)
    theta = np.array([1.0, 0.5 * math.log(2.0)])
    x = q.sample(theta, rng, 10**6)
    ens = WeightedEnsemble.from_log_weights(x, log_weights(gaussian_target([0.0]), q, theta, x))
    assert abs(snis_estimate(ens, lambda y: y[:, 0])) < 0.01


def test_snis_rejects_bad_phi(rng):
    ens = WeightedEnsemble.from_log_weights(np.zeros((3, 1)), np.zeros(3))
    with pytest.raises(ContractError):
        snis_estimate(ens, lambda x: np.zeros(2))
    with pytest.raises(NonFiniteError):
        snis_estimate(ens, lambda x: np.array([0.0, np.inf, 1.0]))


def test_diagnostics_uniform_weights():
    d = diagnostics(np.zeros(7))
    assert d.rho_hat == 1.0 and d.ess == 7.0
    assert d.z_hat == pytest.approx(1.0) and d.r_hat == pytest.approx(1.0)


def test_diagnostics_arithmetic_example():
    d = diagnostics(np.array([math.log(2.0)] * 2 + [-np.inf] * 2))
    assert d.rho_hat == pytest.approx(2.0, rel=1e-14)
    assert d.ess == pytest.approx(2.0, rel=1e-14)
    assert d.z_hat == pytest.approx(1.0) and d.r_hat == pytest.approx(2.0)


def test_diagnostics_survive_huge_log_weights():
    d = diagnostics(np.array([800.0, 800.0, 700.0]))
    assert math.isinf(d.r_hat) and math.isfinite(d.log_r_hat)
    assert 1.0 <= d.rho_hat < 2.0 and 1.0 <= d.ess <= 3.0


def test_rho_hat_large_sample_matches_closed_form(rng):
    q = make_proposal("gaussian-meanchol", 1)
    theta = np.array([0.0, 0.5 * math.log(2.0)])
    x = q.sample(theta, rng, 10**6)
    d = diagnostics(log_weights(gaussian_target([0.0]), q, theta, x))
    ref = closed_form_rho(0.0, 2.0)
    assert ref == pytest.approx(2 / math.sqrt(3), rel=1e-15)
    assert d.rho_hat == pytest.approx(ref, rel=0.02)
    assert d.z_hat == pytest.approx(math.sqrt(2 * math.pi), rel=0.01)
