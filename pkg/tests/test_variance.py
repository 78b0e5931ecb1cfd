import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esscv.core import SQUARED, Dataset, PredictionRule
from esscv.errors import ConfigError, InsufficientBlocksError
from esscv.learners import LearnerSpec
from esscv.risk import BlockCvResult, block_out_cv, difference_loss
from esscv.variance import (
    CONSERVATIVE,
    EXACT,
    FIXED_B,
    FIXED_N,
    estimate_variance,
    normalize_mode,
    select_regime,
    variance_fixed_b,
    variance_fixed_n,
    variance_of_difference,
)

MEAN = LearnerSpec("baseline_mean")


class Fixed:
    """Ignores its training data."""

    def __init__(self, c=0.0):
        self.c = c

    def fit(self, train, seed):
        return PredictionRule(lambda d: np.full(d.n, self.c))


class SlopeLearner:
    def fit(self, train, seed):
        x, y = train["x0"], train.y
        b = float(x @ y) / float(x @ x)
        return PredictionRule(lambda d: b * d["x0"])


def hand():
    return Dataset.from_arrays([0.0, 2.0, 4.0, 6.0], prediction=[0.0, 2.0, 4.0, 6.0])


def test_fixed_n_hand_instance():
    cv = block_out_cv(hand(), MEAN, 2, SQUARED)
    v = variance_fixed_n(cv)
    c = v.components
    assert c["V_train"] == 0
    assert c["V_test"] == pytest.approx(256 / 3, abs=1e-12)
    assert c["C"] == 0
    assert v.sigma2 == pytest.approx(256 / 3, abs=1e-12)
    assert v.regime == FIXED_N and not v.clipped and v.n_effective == 4


def test_fixed_b_hand_instance():
    cv = block_out_cv(hand(), MEAN, 2, SQUARED)
    assert variance_fixed_b(cv).sigma2 == pytest.approx(256 / 3, abs=1e-12)


def test_constant_losses_give_zero():
    d = Dataset.from_arrays(np.full(10, 2.0))
    cv = block_out_cv(d, MEAN, 2, SQUARED, seed=0)
    assert variance_fixed_n(cv).sigma2 == 0
    assert variance_fixed_b(cv).sigma2 == 0


def test_insufficient_blocks():
    cv = BlockCvResult(N=4, B=1, n=4, e_cv=0.0, block_risks=np.zeros(1), mu_hat=np.zeros(4),
                       m_hat=np.zeros(1), rows=np.arange(4), loss_kind="squared")
    with pytest.raises(InsufficientBlocksError):
        variance_fixed_n(cv)
    with pytest.raises(InsufficientBlocksError):
        variance_fixed_b(cv)


@pytest.mark.parametrize("N,threshold,regime", [(400, 400, FIXED_N), (401, 400, FIXED_B),
                                                (50, 1, FIXED_B), (1, 400, FIXED_N)])
def test_select_regime(N, threshold, regime):
    assert select_regime(N, threshold) == regime


def test_select_regime_threshold_validation():
    with pytest.raises(ConfigError):
        select_regime(5, 0)


def test_mode_aliases():
    assert normalize_mode("diff") == EXACT
    assert normalize_mode("conservative") == CONSERVATIVE
    with pytest.raises(ConfigError):
        normalize_mode("bootstrap")


@settings(max_examples=50, deadline=None)
@given(n=st.integers(8, 60), N=st.sampled_from([2, 3, 4]), seed=st.integers(0, 5000))
def test_reconstruction_identity(n, N, seed):
    gen = np.random.default_rng(seed)
    d = Dataset.from_arrays(gen.standard_t(3, size=n), X=gen.normal(size=n))
    cv = block_out_cv(d, SlopeLearner(), N, SQUARED, seed=seed)
    v = variance_fixed_n(cv)
    c = v.components
    assert v.raw == pytest.approx(N * c["V_train"] + c["V_test"] + 2 * N * c["C"], rel=1e-12, abs=1e-12)
    assert v.sigma2 >= 0
    assert v.clipped == (v.raw < 0)
    assert variance_fixed_b(cv).sigma2 >= 0


@settings(max_examples=30, deadline=None)
@given(n=st.integers(8, 60), N=st.sampled_from([2, 3, 5]), seed=st.integers(0, 5000))
def test_v_test_is_fixed_b_estimate(n, N, seed):
    if n // N < 2:
        return
    gen = np.random.default_rng(seed)
    d = Dataset.from_arrays(gen.normal(size=n), X=gen.normal(size=n))
    cv = block_out_cv(d, SlopeLearner(), N, SQUARED, seed=seed)
    # mean(mu_hat) == e_cv, so the fixed-B estimate is the V_test component
    assert variance_fixed_b(cv).sigma2 == pytest.approx(variance_fixed_n(cv).components["V_test"],
                                                         rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(block=st.lists(st.floats(-10, 10), min_size=2, max_size=5), B=st.integers(2, 6),
       c=st.floats(-3, 3))
def test_fixed_b_equals_fixed_n_for_constant_learner(block, B, c):
    # identical blocks and a data-ignoring rule: V_train = C = 0
    d = Dataset.from_arrays(np.tile(block, B))
    cv = block_out_cv(d, Fixed(c), len(block), SQUARED)
    fn = variance_fixed_n(cv)
    assert fn.components["V_train"] == pytest.approx(0, abs=1e-9)
    assert fn.components["C"] == pytest.approx(0, abs=1e-9)
    assert variance_fixed_b(cv).sigma2 == pytest.approx(fn.sigma2, rel=1e-9, abs=1e-9)


def test_clipping_flag():
    # negative block/training covariance can drive the three-term sum below zero
    cv = BlockCvResult(N=2, B=2, n=4, e_cv=1.0, block_risks=np.array([0.0, 2.0]),
                       mu_hat=np.array([1.0, 1.0, 1.0, 1.0]) + np.array([0.1, -0.1, 0.1, -0.1]),
                       m_hat=np.array([10.0, -8.0]), rows=np.arange(4), loss_kind="squared")
    v = variance_fixed_n(cv)
    assert v.raw < 0
    assert v.sigma2 == 0 and v.clipped


def test_difference_examples():
    class Copy:
        def fit(self, train, seed):
            return PredictionRule(lambda data: data.prediction)

    gen = np.random.default_rng(2)
    d = Dataset.from_arrays(gen.normal(size=30), prediction=gen.normal(size=30))
    cv = block_out_cv(d, Copy(), 5, difference_loss(SQUARED, d), seed=1)
    assert variance_of_difference(cv, EXACT).sigma2 == 0

    cv = block_out_cv(hand(), MEAN, 2, difference_loss(SQUARED, hand()))
    exact = variance_of_difference(cv, EXACT)
    cons = variance_of_difference(cv, CONSERVATIVE)
    assert exact.sigma2 == pytest.approx(256 / 3, abs=1e-12)
    assert cons.sigma2 == pytest.approx(256 / 3 + 0, abs=1e-12)
    assert cons.components["sigma2_rule"] == 0


def test_difference_mode_mismatch():
    cv = block_out_cv(hand(), MEAN, 2, SQUARED)
    with pytest.raises(ConfigError):
        variance_of_difference(cv, EXACT)
    with pytest.raises(ConfigError):
        variance_of_difference(cv, CONSERVATIVE)
    v = variance_of_difference(cv, CONSERVATIVE, rule_losses=np.zeros(4))
    assert v.sigma2 == pytest.approx(256 / 3)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(10, 80), N=st.sampled_from([2, 3, 5]), seed=st.integers(0, 5000))
def test_conservative_dominates_when_covariance_nonnegative(n, N, seed):
    gen = np.random.default_rng(seed)
    x = gen.normal(size=n)
    y = x + gen.normal(size=n)
    d = Dataset.from_arrays(y, X=x, prediction=x + gen.normal(0, 0.5, size=n))
    cv = block_out_cv(d, SlopeLearner(), N, difference_loss(SQUARED, d), seed=seed)
    base = cv.base()
    r = cv.rule_losses
    cov = np.cov(base.mu_hat, r, ddof=1)[0, 1]
    exact = variance_of_difference(cv, EXACT, regime=FIXED_B)
    cons = variance_of_difference(cv, CONSERVATIVE, regime=FIXED_B)
    if cov >= 0:
        assert cons.sigma2 >= exact.sigma2 - 1e-12
    # the gap is exactly twice the covariance in the fixed-B estimator
    assert cons.sigma2 - exact.sigma2 == pytest.approx(2 * cov, rel=1e-9, abs=1e-9)


def test_estimate_variance_regime_override():
    gen = np.random.default_rng(0)
    d = Dataset.from_arrays(gen.normal(size=40))
    cv = block_out_cv(d, MEAN, 4, SQUARED, seed=0)
    assert estimate_variance(cv).regime == FIXED_N
    assert estimate_variance(cv, threshold=3).regime == FIXED_B
    assert estimate_variance(cv, regime=FIXED_B).regime == FIXED_B
    with pytest.raises(ConfigError):
        estimate_variance(cv, regime="other")
