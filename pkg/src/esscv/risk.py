"""Block partitioning, block-out cross-validation, and fixed-rule risk.

Rows are permuted once by a seeded permutation (independent of ``N``);
each training size ``N`` re-slices that order into ``B = n // N``
contiguous blocks. The trailing ``n - B*N`` rows are dropped from both
training and testing for that ``N``, so every retained row is tested by
exactly ``B - 1`` rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from esscv._rng import rng
from esscv.core import Dataset, LossFunction, RiskEstimate
from esscv.errors import GridInfeasibleError, InvalidInputError
from esscv.learners.spec import BlockRules, LearnerSpec, fit_blocks, tune

# target number of loss-matrix cells evaluated per chunk
_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True)
class BlockPartition:
    n: int
    N: int
    order: np.ndarray  # the global permutation of range(n)

    @property
    def B(self):
        return self.n // self.N

    @property
    def n_effective(self):
        return self.B * self.N

    @property
    def discarded(self):
        return self.n - self.n_effective

    @property
    def retained(self):
        return self.order[: self.n_effective]

    @property
    def blocks(self) -> np.ndarray:
        """``(B, N)`` array of original row indices; row ``b`` is block ``S_b``."""
        return self.retained.reshape(self.B, self.N)


def permutation(n, seed):
    """The global row order; ``seed=None`` keeps the identity."""
    if seed is None:
        return np.arange(n)
    return rng(seed, "permutation").permutation(n)


def partition_blocks(n, N, seed=None) -> BlockPartition:
    n = int(n)
    N = int(N)
    if N < 1:
        raise GridInfeasibleError(f"training size must be >= 1, got N={N}", N=N)
    if n // N < 2:
        raise GridInfeasibleError(
            f"training size N={N} leaves fewer than 2 blocks for n={n} (need N <= n/2)", N=N, n=n)
    return BlockPartition(n, N, permutation(n, seed))


@dataclass(frozen=True)
class DifferenceLoss:
    """Pointwise ``l(learner) - l(rule)`` given the rule's losses per row."""

    base: LossFunction
    rule_losses: np.ndarray

    @property
    def kind(self):
        return f"difference:{self.base.kind}"

    def check(self, data: Dataset):
        self.base.check(data)
        if len(self.rule_losses) != data.n:
            raise InvalidInputError("difference loss was built for a dataset of a different size")

    def __call__(self, y_true, y_pred, index):
        return self.base(y_true, y_pred) - self.rule_losses[np.asarray(index)]


def rule_losses(data: Dataset, loss: LossFunction) -> np.ndarray:
    """Pointwise losses of the fixed-rule prediction column."""
    loss.check(data)
    return loss(data.y, data.prediction)


def difference_loss(loss: LossFunction, data: Dataset) -> DifferenceLoss:
    return DifferenceLoss(loss, rule_losses(data, loss))


def fixed_rule_risk(data: Dataset, loss: LossFunction, rows=None) -> RiskEstimate:
    """Mean fixed-rule loss with SE ``sd(losses, ddof=1) / sqrt(n)``."""
    losses = rule_losses(data, loss)
    if rows is not None:
        losses = losses[np.asarray(rows)]
    n = len(losses)
    if n == 0:
        raise InvalidInputError("cannot evaluate risk on zero rows")
    se = float(np.std(losses, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return RiskEstimate(float(np.mean(losses)), se, n)


@dataclass(frozen=True)
class BlockCvResult:
    """Artifacts of one block-out CV run at training size ``N``.

    Per-row arrays follow the permuted order: ``mu_hat[j]`` belongs to
    original row ``rows[j]``, and block ``b`` owns positions
    ``b*N .. (b+1)*N - 1``. When ``rule_losses`` is set the run is on the
    difference loss and :meth:`base` recovers the plain learner run.
    """

    N: int
    B: int
    n: int
    e_cv: float
    block_risks: np.ndarray
    mu_hat: np.ndarray
    m_hat: np.ndarray
    rows: np.ndarray
    loss_kind: str
    rule_losses: np.ndarray | None = None
    loss_matrix: np.ndarray | None = None
    path: str = "generic"
    hyperparams: dict = field(default_factory=dict)

    @property
    def n_effective(self):
        return self.B * self.N

    @property
    def M(self):
        return self.n_effective - self.N

    @property
    def is_difference(self):
        return self.rule_losses is not None

    def with_rule_losses(self, r) -> BlockCvResult:
        """Shift to the difference loss ``l - r`` (``r`` in permuted order)."""
        if self.is_difference:
            raise InvalidInputError("result is already on the difference loss")
        r = np.asarray(r, dtype=float)
        B, N = self.B, self.N
        r_block = r.reshape(B, N).sum(axis=1)
        block_risks = self.block_risks - (r.sum() - r_block) / self.M
        lm = None
        if self.loss_matrix is not None:
            lm = self.loss_matrix - r[None, :]
            lm[_own_block_mask(B, N)] = np.nan
        return replace(
            self,
            e_cv=float(np.mean(block_risks)),
            block_risks=block_risks,
            mu_hat=self.mu_hat - r,
            m_hat=self.m_hat - r_block / N,
            loss_kind=f"difference:{self.loss_kind}",
            rule_losses=r,
            loss_matrix=lm,
        )

    def base(self) -> BlockCvResult:
        if not self.is_difference:
            return self
        r = self.rule_losses
        B, N = self.B, self.N
        r_block = r.reshape(B, N).sum(axis=1)
        block_risks = self.block_risks + (r.sum() - r_block) / self.M
        lm = None
        if self.loss_matrix is not None:
            lm = self.loss_matrix + r[None, :]
        return replace(
            self,
            e_cv=float(np.mean(block_risks)),
            block_risks=block_risks,
            mu_hat=self.mu_hat + r,
            m_hat=self.m_hat + r_block / N,
            loss_kind=self.loss_kind.split(":", 1)[1],
            rule_losses=None,
            loss_matrix=lm,
        )

    @property
    def e_rule(self):
        """Fixed-rule risk on the retained rows (difference runs only)."""
        return None if self.rule_losses is None else float(np.mean(self.rule_losses))


def _own_block_mask(B, N):
    mask = np.zeros((B, B * N), dtype=bool)
    for b in range(B):
        mask[b, b * N:(b + 1) * N] = True
    return mask


def _closed_form_squared(y, c, B, N):
    # centring keeps the expansions exact to rounding
    center = y.mean()
    z = y - center
    d = np.asarray(c, dtype=float) - center
    zb = z.reshape(B, N)
    Q_b = (zb * zb).sum(axis=1)
    Z_b = zb.sum(axis=1)
    M = (B - 1) * N
    block_sums = (Q_b.sum() - Q_b) - 2 * d * (Z_b.sum() - Z_b) + M * d * d
    block_risks = block_sums / M
    own = np.repeat(d, N)
    mu_hat = z * z - 2 * z * (d.sum() - own) / (B - 1) + ((d * d).sum() - own * own) / (B - 1)
    return block_risks, mu_hat


def _closed_form_zero_one(y, c, B, N):
    try:
        _, codes = np.unique(np.concatenate([np.asarray(y, dtype=object), np.asarray(c, dtype=object)]),
                             return_inverse=True)
    except TypeError:
        return None
    codes = codes.ravel()
    yc, cc = codes[: B * N], codes[B * N:]
    K = codes.max() + 1
    y_counts = np.bincount(yc, minlength=K)
    per_block = np.zeros((B, K))
    np.add.at(per_block, (np.repeat(np.arange(B), N), yc), 1.0)
    M = (B - 1) * N
    hits = y_counts[cc] - per_block[np.arange(B), cc]
    block_risks = (M - hits) / M
    c_counts = np.bincount(cc, minlength=K)
    own = np.repeat(cc, N)
    matches = c_counts[yc] - (own == yc)
    mu_hat = (B - 1 - matches) / (B - 1)
    return block_risks, mu_hat


def _generic(loss, y, rules: BlockRules, work, B, N, keep, r=None):
    """Per-cell losses; ``r`` (rule losses, permuted order) is subtracted
    cell by cell so identical predictions give exact zeros."""
    n_eff = B * N
    M = n_eff - N
    block_risks = np.empty(B)
    colsum = np.zeros(n_eff)
    lm = np.empty((B, n_eff)) if keep else None
    step = max(1, _CHUNK_CELLS // max(n_eff, 1))
    for start in range(0, B, step):
        stop = min(B, start + step)
        P = rules.predict(work, start, stop)
        L = np.asarray(loss(y[None, :], P), dtype=float)
        if r is not None:
            L = L - r[None, :]
        for j, b in enumerate(range(start, stop)):
            L[j, b * N:(b + 1) * N] = 0.0
            block_risks[b] = L[j].sum() / M
        colsum += L.sum(axis=0)
        if keep:
            lm[start:stop] = L
    if keep:
        lm[_own_block_mask(B, N)] = np.nan
    return block_risks, colsum / (B - 1), lm


def block_out_cv(data: Dataset, learner, N, loss, seed=None, *, hyperparams=None,
                 keep_losses=False, partition: BlockPartition | None = None) -> BlockCvResult:
    """Block-out CV risk of ``learner`` at training size ``N``.

    Parameters
    ----------
    data : Dataset
    learner : LearnerSpec or object with ``fit(train, seed) -> PredictionRule``
    N : int
    loss : LossFunction or DifferenceLoss
        With a :class:`DifferenceLoss` the result is on the difference scale.
    seed : int or None
        Seeds the global permutation, tuning and per-block training.
        ``None`` keeps the identity row order (seed 0 for training).
    hyperparams : dict, optional
        Skip tuning and use these.
    keep_losses : bool
        Retain the ``(B, B*N)`` loss matrix (NaN on each rule's own block).
    """
    diff = loss if isinstance(loss, DifferenceLoss) else None
    base_loss = diff.base if diff is not None else loss
    if diff is not None:
        diff.check(data)
    else:
        base_loss.check(data)
    part = partition if partition is not None else partition_blocks(data.n, N, seed)
    if part.n != data.n or part.N != int(N):
        raise InvalidInputError("partition does not match the data size and N")
    B, N = part.B, part.N
    rows = part.retained
    work = data.take(rows)
    train_seed = 0 if seed is None else seed

    if isinstance(learner, LearnerSpec) and hyperparams is None and learner.tuning.per_N_subset:
        hyperparams = tune(learner, work, N, train_seed)
    rules = fit_blocks(learner, work, N, train_seed, hyperparams=hyperparams)

    y = work.y
    out = None
    path = "generic"
    if rules.constants is not None and not keep_losses:
        if base_loss.kind == "squared":
            out = _closed_form_squared(np.asarray(y, dtype=float), rules.constants, B, N)
        else:
            out = _closed_form_zero_one(y, rules.constants, B, N)
        if out is not None:
            path = "closed_form"
    lm = None
    r = diff.rule_losses[rows] if diff is not None else None
    if out is None:
        block_risks, mu_hat, lm = _generic(base_loss, y, rules, work, B, N, keep_losses, r)
    else:
        block_risks, mu_hat = out
    res = BlockCvResult(
        N=N, B=B, n=data.n,
        e_cv=float(np.mean(block_risks)),
        block_risks=block_risks,
        mu_hat=mu_hat,
        m_hat=mu_hat.reshape(B, N).mean(axis=1),
        rows=rows,
        loss_kind=base_loss.kind,
        loss_matrix=lm,
        path=path,
        hyperparams=dict(hyperparams or {}),
    )
    if diff is not None:
        if out is None:
            res = replace(res, loss_kind=f"difference:{base_loss.kind}", rule_losses=r)
        else:
            res = res.with_rule_losses(r)
    return res
