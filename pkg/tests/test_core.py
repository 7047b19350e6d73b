import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evd.core import BiasClass, SimConfig, ess, log_mean_exp, log_sum_exp, make_rng, normalise_log_weights

finite = st.floats(-700, 700, allow_nan=False)


def test_log_sum_exp_examples():
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)
    assert log_sum_exp([-1000.0, -1000.0]) == pytest.approx(-1000 + math.log(2), abs=1e-12)


def test_log_sum_exp_against_exact_summation():
    # exact rational sum of 1 + 2 + 3
    exact = math.log(Fraction(1) + Fraction(2) + Fraction(3))
    assert log_sum_exp([math.log(1), math.log(2), math.log(3)]) == pytest.approx(exact, abs=1e-15)


def test_log_sum_exp_wide_range():
    assert log_sum_exp([0.0, -800.0]) == pytest.approx(0.0, abs=1e-300)
    assert log_sum_exp([800.0, 0.0]) == pytest.approx(800.0)


def test_log_sum_exp_empty_raises():
    with pytest.raises(ValueError):
        log_sum_exp([])
    with pytest.raises(ValueError):
        log_mean_exp([])


def test_log_mean_exp_examples():
    assert log_mean_exp([0.0] * 4) == pytest.approx(0.0, abs=1e-15)
    assert log_mean_exp([math.log(2), math.log(4)]) == pytest.approx(math.log(3), abs=1e-15)
    assert log_mean_exp([-50.0]) == -50.0


@given(arrays(float, st.integers(1, 30), elements=finite), st.floats(-1e3, 1e3, allow_nan=False))
def test_log_sum_exp_shift_invariance(x, c):
    assert log_sum_exp(x + c) == pytest.approx(log_sum_exp(x) + c, rel=1e-12, abs=1e-9)


def test_ess_examples():
    assert ess(np.zeros(7)) == pytest.approx(7)
    assert ess([0.0, -np.inf, -np.inf]) == pytest.approx(1.0)
    assert ess(np.log([0.5, 0.5, 1e-300, 1e-300])) == pytest.approx(2.0)
    assert ess([-np.inf, -np.inf]) == 0.0


@given(arrays(float, st.integers(1, 50), elements=st.floats(-30, 30)))
def test_ess_bounds_and_formula(log_w):
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    assert 1.0 <= ess(log_w) <= len(log_w)
    assert ess(log_w) == pytest.approx(1.0 / np.sum(w**2), rel=1e-10)


def test_normalise_log_weights_sums_to_one():
    lw = normalise_log_weights([1.0, 2.0, 3.0])
    assert np.exp(lw).sum() == pytest.approx(1.0)
    with pytest.raises(FloatingPointError):
        normalise_log_weights([-np.inf, -np.inf])


def test_streams_reproducible_and_distinct():
    a = make_rng(5, 1, 2).random(4)
    assert np.array_equal(a, make_rng(5, 1, 2).random(4))
    assert not np.array_equal(a, make_rng(5, 2, 1).random(4))
    assert not np.array_equal(a, make_rng(6, 1, 2).random(4))


def test_bias_class_combines_to_worst():
    assert BiasClass.combine(BiasClass.EXACT, BiasClass.UNBIASED) is BiasClass.UNBIASED
    assert BiasClass.combine(BiasClass.BIASED, BiasClass.EXACT) is BiasClass.BIASED
    assert str(BiasClass.UNBIASED) == "unbiased"


def test_sim_config_validation_and_cost():
    with pytest.raises(ValueError):
        SimConfig("gibbs", -1)
    with pytest.raises(ValueError):
        SimConfig("metropolis", 1)

    class Lattice:
        exact_simulation = False

    assert SimConfig("gibbs", 20).cost(Lattice()) == 21
    assert SimConfig("exact", 20).cost(Lattice()) == 1
    assert not SimConfig("gibbs", 20).is_exact(Lattice())
