"""Asymptotic variance of the block-out CV risk.

Two regimes:

* ``fixed_N`` (``N`` fixed, ``B`` grows): ``sigma2 = N*V_train + V_test + 2*N*C``
  with ``V_train`` the sample variance of the block risks, ``V_test`` the
  sample variance of the per-row averaged test losses ``mu_hat`` and ``C``
  the sample covariance between block risks and block means of ``mu_hat``.
* ``fixed_B`` (``B`` fixed, ``N`` grows, stable learner):
  ``tau2 = sum((mu_hat - e_cv)**2) / (n - 1)``.

All moments use the ``count - 1`` divisor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from esscv.errors import ConfigError, InsufficientBlocksError
from esscv.risk import BlockCvResult

FIXED_N = "fixed_N"
FIXED_B = "fixed_B"
DEFAULT_THRESHOLD = 400

EXACT = "exact_difference"
CONSERVATIVE = "conservative_sum"
_MODE_ALIASES = {"diff": EXACT, "exact": EXACT, EXACT: EXACT,
                 "conservative": CONSERVATIVE, CONSERVATIVE: CONSERVATIVE}


@dataclass(frozen=True)
class VarianceEstimate:
    sigma2: float
    regime: str
    n_effective: int
    components: dict | None = None
    clipped: bool = False
    raw: float | None = None  # unclipped value

    @property
    def sigma(self):
        return float(np.sqrt(self.sigma2))

    @property
    def se(self):
        """Standard error of the CV risk: ``sigma / sqrt(n_effective)``."""
        return self.sigma / np.sqrt(self.n_effective)

    def as_dict(self):
        return {"sigma2": self.sigma2, "regime": self.regime, "n_effective": self.n_effective,
                "components": self.components, "clipped": self.clipped, "raw": self.raw}


def normalize_mode(mode):
    try:
        return _MODE_ALIASES[mode]
    except KeyError:
        raise ConfigError(f"unknown variance mode {mode!r}; use 'diff' or 'conservative'") from None


def _need_blocks(cv):
    if cv.B < 2:
        raise InsufficientBlocksError(f"variance needs at least 2 blocks, got B={cv.B}", B=cv.B, N=cv.N)


def variance_fixed_n(cv: BlockCvResult) -> VarianceEstimate:
    _need_blocks(cv)
    e = np.asarray(cv.block_risks, dtype=float)
    m = np.asarray(cv.m_hat, dtype=float)
    v_train = float(np.var(e, ddof=1))
    v_test = float(np.var(cv.mu_hat, ddof=1))
    cov = float(np.sum((e - e.mean()) * (m - m.mean())) / (cv.B - 1))
    raw = cv.N * v_train + v_test + 2 * cv.N * cov
    return VarianceEstimate(
        sigma2=max(raw, 0.0), regime=FIXED_N, n_effective=cv.n_effective,
        components={"V_train": v_train, "V_test": v_test, "C": cov},
        clipped=raw < 0, raw=raw)


def variance_fixed_b(cv: BlockCvResult) -> VarianceEstimate:
    _need_blocks(cv)
    dev = np.asarray(cv.mu_hat, dtype=float) - cv.e_cv
    tau2 = float(np.sum(dev * dev) / (cv.n_effective - 1))
    return VarianceEstimate(sigma2=tau2, regime=FIXED_B, n_effective=cv.n_effective, raw=tau2)


def select_regime(N, threshold=DEFAULT_THRESHOLD) -> str:
    if threshold < 1:
        raise ConfigError(f"regime threshold must be >= 1, got {threshold}")
    return FIXED_N if N <= threshold else FIXED_B


def estimate_variance(cv: BlockCvResult, threshold=DEFAULT_THRESHOLD, regime=None) -> VarianceEstimate:
    """Regime-appropriate estimator; ``regime`` overrides the threshold rule."""
    regime = regime or select_regime(cv.N, threshold)
    if regime == FIXED_N:
        return variance_fixed_n(cv)
    if regime == FIXED_B:
        return variance_fixed_b(cv)
    raise ConfigError(f"unknown regime {regime!r}")


def variance_of_difference(cv_delta: BlockCvResult, mode=EXACT, rule_losses=None,
                           threshold=DEFAULT_THRESHOLD, regime=None) -> VarianceEstimate:
    """Variance for the learner-minus-rule comparison.

    ``exact_difference`` applies the regime estimator to the difference-loss
    run. ``conservative_sum`` adds the learner's own variance and the sample
    variance of the rule's pointwise losses, ignoring their covariance.
    """
    mode = normalize_mode(mode)
    if mode == EXACT:
        if not cv_delta.is_difference:
            raise ConfigError("exact_difference mode needs a run on the difference loss")
        return estimate_variance(cv_delta, threshold, regime)
    r = rule_losses if rule_losses is not None else cv_delta.rule_losses
    if r is None:
        raise ConfigError("conservative_sum mode needs the fixed rule's pointwise losses")
    r = np.asarray(r, dtype=float)
    learner = estimate_variance(cv_delta.base(), threshold, regime)
    v_rule = float(np.var(r, ddof=1)) if len(r) > 1 else 0.0
    comps = dict(learner.components or {})
    comps.update({"sigma2_learner": learner.sigma2, "sigma2_rule": v_rule})
    return VarianceEstimate(sigma2=learner.sigma2 + v_rule, regime=learner.regime,
                            n_effective=learner.n_effective, components=comps,
                            clipped=learner.clipped, raw=learner.raw + v_rule)
