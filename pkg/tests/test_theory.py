import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evd import theory
from evd.core import make_rng
from tests.conftest import within_se

positive = arrays(float, 5, elements=st.floats(1e-3, 1e3))


def _flow(rng, n=4, T=5, **kw):
    return theory.random_flow(rng, n, T, **kw)


# -- flows ---------------------------------------------------------------------------


def test_unperturbed_flow_is_identical(rng):
    f = _flow(rng)
    f.approx_potentials = f.potentials.copy()
    exact, approx = theory.flow_evolve(f)
    assert np.array_equal(exact, approx)


def test_single_state_is_a_point_mass():
    f = theory.FiniteFlow([1.0], np.ones((3, 1, 1)), [[2.0], [0.5], [1.0]], [[1.0], [3.0], [1.0]])
    exact, approx = theory.flow_evolve(f)
    assert np.all(exact == 1.0) and np.all(approx == 1.0)


def test_hand_computed_three_state_flow():
    eta0 = np.array([0.5, 0.3, 0.2])
    M1 = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.1, 0.1, 0.8]])
    M2 = np.array([[1 / 3, 1 / 3, 1 / 3], [0.0, 0.5, 0.5], [0.9, 0.0, 0.1]])
    G = np.array([[1.0, 2.0, 4.0], [3.0, 1.0, 1.0]])
    f = theory.FiniteFlow(eta0, np.stack([M1, M2]), G, G)
    # eta0*G0 = (.5, .6, .8)/1.9
    eta1 = np.array([0.5, 0.6, 0.8]) / 1.9 @ M1
    a = eta1 * G[1]
    eta2 = a / a.sum() @ M2
    exact, _ = theory.flow_evolve(f)
    np.testing.assert_allclose(exact[1], eta1, rtol=0, atol=1e-14)
    np.testing.assert_allclose(exact[2], eta2, rtol=0, atol=1e-14)
    # by hand: (.5, .6, .8) @ M1 = (.5, .53, .87)
    np.testing.assert_allclose(exact[1], [0.5 / 1.9, 0.53 / 1.9, 0.87 / 1.9], atol=1e-14)


def test_invalid_flows_rejected():
    with pytest.raises(ValueError):
        theory.FiniteFlow([1.0, 0.0], np.full((1, 2, 2), 0.6), [[1.0, 1.0]], [[1.0, 1.0]])
    with pytest.raises(ValueError):
        theory.FiniteFlow([1.0, 0.0], np.full((1, 2, 2), 0.5), [[1.0, 0.0]], [[1.0, 1.0]])


@given(arrays(float, 5, elements=st.floats(0.01, 1.0)), positive, st.floats(1e-3, 1e3))
def test_boltzmann_gibbs_scale_invariance(eta, G, c):
    np.testing.assert_allclose(theory.boltzmann_gibbs(eta, c * G), theory.boltzmann_gibbs(eta, G), rtol=1e-12)


# -- lemma -------------------------------------------------------------------------


def test_lemma_scaled_potential_gives_zero():
    lhs, rhs, holds = theory.lemma1_check([0.2, 0.3, 0.5], [1.0, 2.0, 3.0], [2.5, 5.0, 7.5])
    assert lhs == pytest.approx(0.0, abs=1e-15) and holds


def test_lemma_random_instances():
    rng = make_rng(31)
    for _ in range(1000):
        eta = rng.dirichlet(np.ones(6))
        G = np.exp(rng.normal(size=6))
        G_tilde = G * (1 + rng.uniform(-0.5, 0.5, 6))
        assert theory.lemma1_check(eta, G, G_tilde)[2]


def test_lemma_adversarial_single_state():
    eta = np.array([0.05, 0.15, 0.3, 0.5])
    G = np.array([0.2, 1.0, 3.0, 0.7])
    worst = 0.0
    for state in range(4):
        for delta in np.linspace(-0.95, 20, 400):
            G_tilde = G.copy()
            G_tilde[state] *= 1 + delta
            lhs, rhs, holds = theory.lemma1_check(eta, G, G_tilde)
            assert holds
            worst = max(worst, lhs / rhs)
    assert 0.1 < worst <= 1.0


# -- proposition ----------------------------------------------------------------------


def test_prop1_zero_perturbation(rng):
    f = _flow(rng, gamma_rel=0.0)
    res = theory.prop1_check(f)
    assert res.sup_tv == 0.0 and res.holds


def test_prop1_vacuous_when_kernel_has_zero():
    assert theory.prop1_bound(0.1, 0.0, 0.5) == float("inf")
    k = np.array([[[1.0, 0.0], [0.5, 0.5]]])
    res = theory.prop1_check(theory.FiniteFlow([0.5, 0.5], k, [[1.0, 2.0]], [[1.1, 2.0]]))
    assert res.vacuous and res.holds


def test_prop1_perfect_forgetting():
    n, T = 4, 6
    rng = make_rng(5)
    rows = rng.dirichlet(np.ones(n), size=T)
    kernels = np.repeat(rows[:, None, :], n, axis=1)
    G = np.exp(rng.normal(size=(T, n)))
    f = theory.FiniteFlow(np.full(n, 0.25), kernels, G, G * 1.3 ** rng.uniform(-1, 1, (T, n)))
    exact, approx = theory.flow_evolve(f)
    np.testing.assert_allclose(exact[1:], approx[1:], atol=1e-15)
    assert theory.mixing_constants(f).eps_m == pytest.approx(1.0)


def test_prop1_random_instances():
    rows = theory.prop1_sweep(1000, make_rng(7), n=6, T=40, alpha=0.6)
    assert min(r["eps_m"] for r in rows) >= 0.2
    assert all(r["margin"] >= -1e-10 for r in rows)
    assert all(r["lemma1_ok"] for r in rows)


def test_mixing_constants_are_attained(rng):
    f = _flow(rng, n=5, T=7, gamma_rel=0.2)
    c = theory.mixing_constants(f)
    t, x = c.where_gamma
    assert abs(f.potentials[t, x] - f.approx_potentials[t, x]) / f.approx_potentials[t, x] == c.gamma_rel
    t, x, y, z = c.where_m
    assert f.kernels[t, x, z] / f.kernels[t, y, z] == c.eps_m
    t, x, y = c.where_g
    assert f.potentials[t, x] / f.potentials[t, y] == c.eps_g
    # and they are extremal over a brute-force scan
    ratios = [f.kernels[t, a, z] / f.kernels[t, b, z] for t in range(7) for a in range(5) for b in range(5) for z in range(5)]
    assert c.eps_m == pytest.approx(min(ratios))


def test_prop1_rows_csv(tmp_path):
    rows = theory.prop1_sweep(3, make_rng(1))
    path = tmp_path / "p.csv"
    theory.write_rows(rows, path, theory.PROP1_COLUMNS)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(theory.PROP1_COLUMNS) and len(lines) == 4


# -- biased weights ---------------------------------------------------------------------


def _law(b, var_biased, var_unbiased, q=(0.25, 0.25, 0.5), w=(1.0, 2.0, 0.5)):
    n = len(q)
    return theory.BiasedWeightLaw(q, w, np.broadcast_to(b, n), np.broadcast_to(var_biased, n), np.broadcast_to(var_unbiased, n))


def test_breakeven_constant_bias():
    law = _law(0.2, 0.0, 3.0)
    assert theory.biased_is_breakeven(law).threshold == pytest.approx(3.0 / 0.04)


def test_breakeven_zero_bias_verdict():
    v = theory.biased_is_breakeven(_law(0.0, 1.0, 1.0))
    assert v.threshold is None and "unbiased" in v.verdict


def test_mse_curves_cross_at_threshold():
    law = _law(np.array([0.1, 0.3, 0.2]), np.array([0.1, 0.0, 0.2]), np.array([4.0, 2.0, 3.0]))
    thr = theory.biased_is_breakeven(law).threshold
    u, b = theory.mse_curves(law, [thr / 2, thr, 2 * thr])
    assert b[0] < u[0] and b[1] == pytest.approx(u[1]) and b[2] > u[2]


def _simulate(law, P, biased, rng, reps=100_000):
    idx = rng.choice(len(law.q), size=(reps, P), p=law.q)
    var = law.var_biased if biased else law.var_unbiased
    draws = law.w[idx] + (law.b[idx] if biased else 0.0) + rng.normal(size=idx.shape) * np.sqrt(var[idx])
    return (draws.mean(axis=1) - law.mean(law.w)) ** 2


def test_monte_carlo_orders_estimators_around_threshold():
    rng = make_rng(17)
    law = _law(np.array([0.1, 0.3, 0.2]), np.array([0.1, 0.0, 0.2]), np.array([4.0, 2.0, 3.0]))
    thr = theory.biased_is_breakeven(law).threshold
    for P, biased_better in [(max(1, int(thr / 2)), True), (int(2 * thr), False)]:
        mse_b = _simulate(law, P, True, rng).mean()
        mse_u = _simulate(law, P, False, rng).mean()
        assert (mse_b < mse_u) == biased_better


def test_mse_decomposition_matches_simulation():
    rng = make_rng(19)
    law = _law(np.array([0.1, -0.3, 0.2]), np.array([0.5, 0.1, 0.2]), np.array([1.0, 1.0, 1.0]))
    for P in (3, 20):
        sq = _simulate(law, P, True, rng)
        assert within_se(sq, theory.mse_curves(law, P)[1])
