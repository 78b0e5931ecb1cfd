import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esscv.core import SQUARED, ZERO_ONE, Dataset, PredictionRule
from esscv.errors import GridInfeasibleError, InvalidInputError, SchemaError, TrainingError
from esscv.learners import LearnerSpec
from esscv.report import format_rule_error
from esscv.risk import (
    block_out_cv,
    difference_loss,
    fixed_rule_risk,
    partition_blocks,
    permutation,
)

MEAN = LearnerSpec("baseline_mean")
MAJORITY = LearnerSpec("baseline_majority")


class MeanPredictor:
    """Training-mean learner written against the plain fit contract (generic path)."""

    def fit(self, train, seed):
        m = float(np.mean(train.y))
        return PredictionRule(lambda d: np.full(d.n, m))


class SlopeLearner:
    """Least squares through the origin on the first covariate."""

    def fit(self, train, seed):
        x, y = train["x0"], train.y
        den = float(x @ x)
        b = float(x @ y) / den if den > 0 else 0.0
        return PredictionRule(lambda d: b * d["x0"])


def reference_cv(y, x, order, N, fit, loss):
    """Independent double loop over every (block, out-of-block row) pair."""
    n = len(y)
    B = n // N
    idx = order[: B * N]
    losses = {}
    for b in range(B):
        own = idx[b * N:(b + 1) * N]
        predict = fit(y[own], x[own])
        for j, i in enumerate(idx):
            if b * N <= j < (b + 1) * N:
                continue
            losses[(b, j)] = loss(y[i], predict(x[i]))
    block = np.array([np.mean([losses[(b, j)] for j in range(B * N) if (b, j) in losses]) for b in range(B)])
    mu = np.array([np.mean([losses[(b, j)] for b in range(B) if (b, j) in losses]) for j in range(B * N)])
    return block.mean(), block, mu, mu.reshape(B, N).mean(axis=1)


def _fit_mean(ys, xs):
    m = float(np.mean(ys))
    return lambda x: m


def _fit_slope(ys, xs):
    den = float(xs @ xs)
    b = float(xs @ ys) / den if den > 0 else 0.0
    return lambda x: b * x


# ---------------------------------------------------------------- partitions

@pytest.mark.parametrize("n,N,B,discarded", [(6, 2, 3, 0), (7, 2, 3, 1), (10, 5, 2, 0), (11, 3, 3, 2)])
def test_partition_examples(n, N, B, discarded):
    p = partition_blocks(n, N, seed=3)
    assert (p.B, p.discarded, p.n_effective) == (B, discarded, B * N)
    blocks = p.blocks
    assert blocks.shape == (B, N)
    flat = blocks.ravel()
    assert len(set(flat.tolist())) == B * N
    assert np.array_equal(flat, p.order[: B * N])


def test_partition_infeasible_names_N():
    with pytest.raises(GridInfeasibleError, match="N=6"):
        partition_blocks(10, 6, 0)
    with pytest.raises(GridInfeasibleError):
        partition_blocks(10, 0, 0)


def test_partition_deterministic_and_shared_across_N():
    a = partition_blocks(50, 5, seed=11)
    b = partition_blocks(50, 5, seed=11)
    c = partition_blocks(50, 7, seed=11)
    assert np.array_equal(a.order, b.order)
    assert np.array_equal(a.order, c.order)
    assert not np.array_equal(a.order, partition_blocks(50, 5, seed=12).order)
    assert np.array_equal(permutation(5, None), np.arange(5))


# ---------------------------------------------------------------- block-out CV

def test_hand_instance():
    d = Dataset.from_arrays([0.0, 2.0, 4.0, 6.0])
    for learner in (MEAN, MeanPredictor()):
        cv = block_out_cv(d, learner, 2, SQUARED)
        assert np.allclose(cv.block_risks, [17, 17])
        assert cv.e_cv == 17
        assert np.allclose(cv.mu_hat, [25, 9, 9, 25])
        assert np.allclose(cv.m_hat, [17, 17])
        assert cv.M == 2


def test_closed_form_path_is_used_for_constants():
    d = Dataset.from_arrays([0.0, 2.0, 4.0, 6.0])
    assert block_out_cv(d, MEAN, 2, SQUARED).path == "closed_form"
    assert block_out_cv(d, MeanPredictor(), 2, SQUARED).path == "generic"


def test_constant_outcome_gives_zero():
    d = Dataset.from_arrays(np.full(12, 3.5), X=np.arange(12.0))
    cv = block_out_cv(d, SlopeLearner(), 3, SQUARED, seed=1)
    assert cv.e_cv >= 0
    cv = block_out_cv(d, MEAN, 3, SQUARED, seed=1)
    assert cv.e_cv == 0
    assert np.all(cv.mu_hat == 0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(4, 12), N=st.sampled_from([2, 3]), seed=st.integers(0, 10_000),
       use_slope=st.booleans())
def test_matches_brute_force(n, N, seed, use_slope):
    if n // N < 2:
        return
    gen = np.random.default_rng(seed)
    y = np.round(gen.normal(size=n), 3)
    x = np.round(gen.normal(size=n), 3)
    d = Dataset.from_arrays(y, X=x)
    learner, fit = (SlopeLearner(), _fit_slope) if use_slope else (MEAN, _fit_mean)
    cv = block_out_cv(d, learner, N, SQUARED, seed=seed)
    order = permutation(n, seed)
    e, block, mu, m = reference_cv(y, x, order, N, fit, lambda a, b: (a - b) ** 2)
    assert cv.e_cv == pytest.approx(e, rel=1e-12, abs=1e-12)
    assert np.allclose(cv.block_risks, block, rtol=1e-12, atol=1e-12)
    assert np.allclose(cv.mu_hat, mu, rtol=1e-12, atol=1e-12)
    assert np.allclose(cv.m_hat, m, rtol=1e-12, atol=1e-12)
    assert np.array_equal(cv.rows, order[: (n // N) * N])


@settings(max_examples=40, deadline=None)
@given(n=st.integers(4, 30), N=st.sampled_from([2, 3, 4]), seed=st.integers(0, 1000))
def test_zero_one_bounds_and_counts(n, N, seed):
    if n // N < 2:
        return
    gen = np.random.default_rng(seed)
    y = gen.integers(0, 2, n)
    d = Dataset.from_arrays(y, outcome_type="categorical")
    cv = block_out_cv(d, MAJORITY, N, ZERO_ONE, seed=seed)
    for arr in (cv.block_risks, cv.mu_hat, [cv.e_cv]):
        assert np.all((np.asarray(arr) >= 0) & (np.asarray(arr) <= 1))
    lm = block_out_cv(d, MAJORITY, N, ZERO_ONE, seed=seed, keep_losses=True)
    assert np.allclose(lm.block_risks, cv.block_risks)
    assert np.allclose(lm.mu_hat, cv.mu_hat)


def test_invariants_and_loss_matrix_digest():
    gen = np.random.default_rng(5)
    d = Dataset.from_arrays(gen.normal(size=23), X=gen.normal(size=23))
    cv = block_out_cv(d, SlopeLearner(), 4, SQUARED, seed=2, keep_losses=True)
    B, N = cv.B, cv.N
    assert cv.n_effective == 20 and B == 5
    lm = cv.loss_matrix
    assert lm.shape == (B, B * N)
    # each block risk averages exactly M losses, each mu_hat exactly B - 1
    assert np.all(np.sum(~np.isnan(lm), axis=1) == cv.M)
    assert np.all(np.sum(~np.isnan(lm), axis=0) == B - 1)
    assert np.allclose(np.nanmean(lm, axis=1), cv.block_risks, rtol=0, atol=1e-12)
    assert np.allclose(np.nanmean(lm, axis=0), cv.mu_hat, rtol=0, atol=1e-12)
    assert cv.e_cv == pytest.approx(np.mean(cv.block_risks), abs=1e-15)
    assert np.allclose(cv.m_hat, cv.mu_hat.reshape(B, N).mean(axis=1))


def test_determinism():
    gen = np.random.default_rng(0)
    d = Dataset.from_arrays(gen.normal(size=60), X=gen.normal(size=(60, 2)))
    lasso = LearnerSpec("lasso", hyperparams={"alpha": 0.05})
    a = block_out_cv(d, lasso, 10, SQUARED, seed=4)
    b = block_out_cv(d, lasso, 10, SQUARED, seed=4)
    assert np.array_equal(a.block_risks, b.block_risks)
    assert np.array_equal(a.mu_hat, b.mu_hat)


def test_permutation_invariance():
    """Relabeling rows and the permutation consistently leaves the estimate unchanged."""
    gen = np.random.default_rng(1)
    n, N = 20, 4
    y = gen.normal(size=n)
    x = gen.normal(size=n)
    d = Dataset.from_arrays(y, X=x)
    base = block_out_cv(d, SlopeLearner(), N, SQUARED, seed=9)
    relabel = gen.permutation(n)  # new row i is old row relabel[i]
    d2 = d.take(relabel)
    inverse = np.argsort(relabel)
    from esscv.risk import BlockPartition
    part = BlockPartition(n, N, inverse[permutation(n, 9)])
    other = block_out_cv(d2, SlopeLearner(), N, SQUARED, seed=9, partition=part)
    assert other.e_cv == pytest.approx(base.e_cv, abs=1e-12)
    assert np.allclose(other.block_risks, base.block_risks, atol=1e-12)


def test_training_error_carries_block_id():
    class Fails:
        def fit(self, train, seed):
            if train.y[0] > 100:
                raise ValueError("boom")
            return PredictionRule(lambda d: np.zeros(d.n))

    d = Dataset.from_arrays([0.0, 1.0, 500.0, 2.0, 3.0, 4.0])
    with pytest.raises(TrainingError) as exc:
        block_out_cv(d, Fails(), 2, SQUARED)
    assert exc.value.details["block"] == 1
    assert exc.value.details["N"] == 2


def test_loss_outcome_mismatch():
    d = Dataset.from_arrays(["a", "b", "a", "b"], outcome_type="categorical")
    with pytest.raises(InvalidInputError):
        block_out_cv(d, MAJORITY, 2, SQUARED)


# ---------------------------------------------------------------- fixed rule and difference loss

def test_fixed_rule_risk_examples():
    d = Dataset.from_arrays([1.0, 2.0, 3.0], prediction=[1.0, 2.0, 3.0])
    r = fixed_rule_risk(d, SQUARED)
    assert (r.value, r.se, r.n_eval) == (0.0, 0.0, 3)

    d = Dataset.from_arrays([1, 0, 1, 0], prediction=[1, 1, 1, 1], outcome_type="categorical")
    r = fixed_rule_risk(d, ZERO_ONE)
    assert r.value == 0.5
    assert r.se == pytest.approx(0.5 / 2 * np.sqrt(4 / 3), abs=1e-12)
    assert r.se == pytest.approx(0.2887, abs=1e-4)


def test_fixed_rule_risk_needs_prediction():
    with pytest.raises(SchemaError):
        fixed_rule_risk(Dataset.from_arrays([1.0, 2.0]), SQUARED)


def test_report_formatting_of_rule_error():
    assert f"LLM Error {format_rule_error(156.25)}" == "LLM Error 12.50"
    assert format_rule_error(0.125, "zero_one") == "0.12"


def test_difference_loss_examples():
    d = Dataset.from_arrays([0.0, 2.0, 4.0, 6.0], prediction=[0.0, 2.0, 4.0, 6.0])
    cv = block_out_cv(d, MEAN, 2, difference_loss(SQUARED, d))
    assert cv.e_cv == 17
    assert cv.e_rule == 0

    class Copy:
        def fit(self, train, seed):
            return PredictionRule(lambda data: data.prediction)

    gen = np.random.default_rng(3)
    d = Dataset.from_arrays(gen.normal(size=12), prediction=gen.normal(size=12))
    cv = block_out_cv(d, Copy(), 3, difference_loss(SQUARED, d), seed=1, keep_losses=True)
    assert np.all(cv.mu_hat == 0)
    assert np.all(cv.block_risks == 0)
    assert np.nanmax(np.abs(cv.loss_matrix)) == 0


@settings(max_examples=40, deadline=None)
@given(n=st.integers(6, 40), N=st.sampled_from([2, 3, 5]), seed=st.integers(0, 1000))
def test_difference_identity(n, N, seed):
    if n // N < 2:
        return
    gen = np.random.default_rng(seed)
    d = Dataset.from_arrays(gen.normal(size=n), X=gen.normal(size=n), prediction=gen.normal(size=n))
    plain = block_out_cv(d, SlopeLearner(), N, SQUARED, seed=seed)
    diff = block_out_cv(d, SlopeLearner(), N, difference_loss(SQUARED, d), seed=seed)
    e_rule = fixed_rule_risk(d, SQUARED, rows=plain.rows).value
    assert diff.e_cv == pytest.approx(plain.e_cv - e_rule, abs=1e-12)
    assert diff.e_rule == pytest.approx(e_rule, abs=1e-12)
    back = diff.base()
    assert np.allclose(back.block_risks, plain.block_risks, atol=1e-12)
    assert np.allclose(back.mu_hat, plain.mu_hat, atol=1e-12)
