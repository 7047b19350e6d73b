import itertools

import numpy as np
import pytest

from evd import zratio
from evd.core import SimConfig, log_mean_exp, log_sum_exp, make_rng
from evd.models import GaussianBlock, GaussianPrecisionModel, IsingModel, PoissonModel, SpinBlockUniform
from tests.conftest import within_se
from tests.test_models import _raster_sweep_matrix


def _ising_pmf(model, theta, n_units=None):
    data = model.enumerate_data(n_units)
    log_p = model.stats(data, n_units) @ np.atleast_1d(theta) - model.exact_log_z(np.atleast_1d(theta), n_units)
    return data, log_p


@pytest.mark.parametrize("theta,theta_hat", [(0.3, 0.5), (1.2, 0.1), (0.0, 0.9)])
def test_sav_expectation_is_inverse_z(theta, theta_hat):
    model = IsingModel(2, 2)
    q_u = zratio.ModelAuxiliary(model, [theta_hat], model.exact_log_z(np.array([theta_hat])))
    data, log_p = _ising_pmf(model, theta)
    terms = zratio.sav_log_terms(model, np.full((len(data), 1), theta), data, q_u)
    assert log_sum_exp(log_p + terms) == pytest.approx(-model.exact_log_z(np.array([theta])), abs=1e-12)


def test_mav_single_point_expectation():
    model = IsingModel(2, 2)
    theta, theta_hat = np.array([0.4]), np.array([1.1])
    data, log_p = _ising_pmf(model, theta)
    s = model.stats(data)[:, None, :]
    terms = zratio.mav_log_terms(model, theta, theta_hat, s)
    ref = model.exact_log_z(theta_hat) - model.exact_log_z(theta)
    assert log_sum_exp(log_p + terms) == pytest.approx(ref, abs=1e-12)


def test_mav_expectation_with_gibbs_path():
    """Exhaustive AIS expectation with K = 2 exact raster-sweep kernels."""
    model = IsingModel(2, 2)
    theta, theta_hat, K = 0.2, 1.0, 2
    betas = np.arange(K + 1) / (K + 1)
    data, log_p = _ising_pmf(model, [theta])
    s = model.stats(data)
    kern = [_raster_sweep_matrix(theta + b * (theta_hat - theta))[1] for b in betas[1:]]
    total = 0.0
    for path in itertools.product(range(len(data)), repeat=K + 1):
        prob = np.exp(log_p[path[0]])
        for k in range(K):
            prob *= kern[k][path[k], path[k + 1]]
        if prob == 0.0:
            continue
        w = zratio.mav_log_terms(model, np.array([theta]), np.array([theta_hat]), s[list(path)])
        total += prob * np.exp(w)
    ref = model.exact_log_z(np.array([theta_hat])) - model.exact_log_z(np.array([theta]))
    assert np.log(total) == pytest.approx(ref, abs=1e-12)


def test_mav_ratio_monte_carlo_poisson(rng):
    model = PoissonModel(10)
    theta = np.array([[1.5], [0.7]])
    theta_hat = np.array([1.0])
    est = zratio.mav_ratio(theta, theta_hat, model, 5, 4000, SimConfig("exact"), rng)
    ref = model.exact_log_z(theta_hat) - model.exact_log_z(theta)
    assert np.allclose(est.value, ref, atol=0.05)
    assert est.cost == 2 * 4000 * (1 + 5)


def test_sav_inv_z_monte_carlo_and_cost(rng):
    model = IsingModel(3, 3)
    theta = np.array([[0.2], [0.35]])
    q_u = zratio.ModelAuxiliary(model, [0.3], model.exact_log_z(np.array([0.3])))
    est = zratio.sav_inv_z(theta, model, q_u, 4000, SimConfig("exact"), rng)
    assert np.allclose(est.value, -model.exact_log_z(theta), atol=0.05)
    gibbs = zratio.sav_inv_z(theta, model, q_u, 10, SimConfig("gibbs", 7), rng)
    assert gibbs.cost == 2 * 10 * 8
    assert str(gibbs.bias) == "biased"


def test_mav_ratio_gibbs_cost(rng):
    model = IsingModel(3, 3)
    est = zratio.mav_ratio(np.array([[0.2]] * 3), np.array([0.3]), model, 6, 5, SimConfig("gibbs", 4), rng)
    assert est.value.shape == (3,)
    assert est.cost == 3 * 5 * (4 + 1 + 6)


def test_mav_k_zero_is_single_point_ratio():
    model = PoissonModel(4)
    est = zratio.mav_ratio(np.array([[2.0]]), np.array([2.0]), model, 0, 3, SimConfig("exact"), make_rng(0))
    assert est.value[0] == 0.0


def test_smc_log_z_close_to_exact():
    model = IsingModel(4, 4)
    lz, diag = zratio.smc_log_z([0.4], model, 200, 100, make_rng(8))
    assert lz == pytest.approx(model.exact_log_z(np.array([0.4])), abs=0.1)
    assert diag["min_ess"] >= 100 * 0.5


def test_log_z_cache_memoises():
    model = IsingModel(3, 3)
    cache = zratio.LogZCache()
    a = cache.get(model, [0.3], seed=1, P=50, T=10)
    b = cache.get(model, [0.3], seed=1, P=50, T=10)
    assert a == b and len(cache) == 1
    cache.get(model, [0.3], seed=2, P=50, T=10)
    assert len(cache) == 2


@pytest.mark.parametrize("n_prev,n_new", [(0, 1), (1, 2), (2, 4)])
def test_tempering_term_expectation_exhaustive(n_prev, n_new):
    model = IsingModel(2, 2)
    theta = np.array([0.8])
    q_w = SpinBlockUniform(n_new - n_prev)
    data, log_p = _ising_pmf(model, theta, n_new)
    terms = zratio.tempering_log_terms(model, np.tile(theta, (len(data), 1)), data, n_prev, n_new, q_w)
    log_prev = model.exact_log_z(theta, n_prev) if n_prev else 0.0
    assert log_sum_exp(log_p + terms) == pytest.approx(log_prev - model.exact_log_z(theta, n_new), abs=1e-12)


def test_tempering_ratio_structure_matches_extended_space_formula():
    """The estimate is (1/M) sum_m f_{t-1}-style ratios over the same draws."""
    model = IsingModel(3, 3)
    theta = np.array([[0.3], [0.6]])
    sim, M = SimConfig("gibbs", 3), 5
    q_w = SpinBlockUniform(1)
    est = zratio.tempering_is_ratio(theta, model, 4, 5, q_w, M, sim, make_rng(2))
    u = model.simulate_repeated(theta, M, sim, make_rng(2), 5)
    manual = []
    for c in range(2):
        r = [
            model.log_gamma(u[c, m], theta[c], 4) + q_w.logpdf(model.block(u[c, m], 4, 5)) - model.log_gamma(u[c, m], theta[c], 5)
            for m in range(M)
        ]
        manual.append(log_mean_exp(np.array(r)))
    assert np.allclose(est.value, manual, atol=1e-12)


def test_tempering_ratio_iid_precision(rng):
    model = GaussianPrecisionModel(2, n=10)
    theta = model.sample_prior(rng, 3)
    q_w = GaussianBlock(np.eye(2) * 0.2)
    est = zratio.tempering_is_ratio(theta, model, 4, 5, q_w, 20000, SimConfig("exact"), rng)
    ref = model.exact_log_z(theta, 4) - model.exact_log_z(theta, 5)
    assert np.allclose(est.value, ref, atol=0.1)
    assert est.cost == 3 * 20000


def test_bridge_ratio_consistent(rng):
    model = GaussianPrecisionModel(1, n=10)
    theta = np.array([[2.0], [3.5]])
    q_w = GaussianBlock(np.eye(1) * 0.2)
    est = zratio.bridge_ratio(theta, model, 3, 4, q_w, 20000, SimConfig("exact"), rng)
    ref = model.exact_log_z(theta, 3) - model.exact_log_z(theta, 4)
    assert np.allclose(est.value, ref, atol=0.02)
    with pytest.raises(ValueError):
        zratio.bridge_ratio(theta, model, 3, 4, q_w, 3, SimConfig("exact"), rng)


def test_bridge_ratio_lattice_consistent(rng):
    model = IsingModel(2, 3)
    theta = np.array([[0.5]])
    est = zratio.bridge_ratio(theta, model, 3, 4, SpinBlockUniform(1), 20000, SimConfig("exact"), rng)
    ref = model.exact_log_z(theta, 3) - model.exact_log_z(theta, 4)
    assert est.value[0] == pytest.approx(ref[0], abs=0.02)


def test_exact_tempering_ratio_telescopes():
    model = GaussianPrecisionModel(1, n=6)
    theta = np.array([[1.3]])
    total = sum(zratio.exact_tempering_ratio(theta, model, a, a + 1).value[0] for a in range(6))
    assert total == pytest.approx(-model.exact_log_z(theta, 6)[0])
