"""Treatment-arm ESS and CATE ESS through the transformed outcome.

With treatment ``T`` and known propensity ``pi(X)``, the transformed outcome
``Y * (T - pi) / (pi * (1 - pi))`` has conditional mean equal to the CATE.
Under squared loss, the risk of any CATE predictor against the transformed
outcome differs from its risk against the true CATE by a constant that does
not depend on the predictor, so the crossing size is unchanged.
"""

from __future__ import annotations

import warnings

import numpy as np

from esscv.core import (
    ARM0_PREDICTION,
    ARM1_PREDICTION,
    CATE_PREDICTION,
    CATEGORICAL,
    ID,
    NUMERIC,
    OUTCOME,
    PREDICTION,
    PROPENSITY,
    SQUARED,
    TREATMENT,
    Dataset,
    LossFunction,
    Schema,
)
from esscv.errors import ConfigError, InvalidInputError, OverlapError, SchemaError
from esscv.inference import sequential_ess
from esscv.variance import DEFAULT_THRESHOLD, EXACT

DEFAULT_EPS = 0.01


def check_overlap(pi, eps=DEFAULT_EPS):
    pi = np.asarray(pi, dtype=float)
    bad = ~((pi >= eps) & (pi <= 1 - eps))
    if bad.any():
        rows = np.flatnonzero(bad)
        raise OverlapError(f"{len(rows)} rows violate overlap eps={eps}; first rows {rows[:10].tolist()}",
                           rows=rows[:100].tolist(), eps=eps)


def transformed_outcome(y, t, pi, eps=DEFAULT_EPS):
    """``y * (t - pi) / (pi * (1 - pi))`` (vectorized)."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    pi = np.asarray(pi, dtype=float)
    check_overlap(np.atleast_1d(pi), eps)
    if not np.isin(t, (0.0, 1.0)).all():
        raise InvalidInputError("treatment must be 0 or 1")
    return y * (t - pi) / (pi * (1 - pi))


def _require(data: Dataset, role):
    col = data.schema.column(role)
    if col is None:
        raise SchemaError(f"dataset has no {role} column")
    return col


def transformed_dataset(data: Dataset, eps=DEFAULT_EPS) -> Dataset:
    """Covariates, the transformed outcome and the CATE prediction only.

    Treatment, propensity and the raw outcome are dropped so the learner
    cannot see them.
    """
    if data.schema.outcome_type != "numeric":
        raise InvalidInputError("CATE analysis needs a numeric outcome")
    t = data[_require(data, TREATMENT)]
    pi = data[_require(data, PROPENSITY)]
    g = data[_require(data, CATE_PREDICTION)]
    ytilde = transformed_outcome(data.y, t, pi, eps)
    roles = {c: r for c, r in data.schema.roles.items() if r in (ID, NUMERIC, CATEGORICAL)}
    cols = {c: data[c] for c in roles}
    out_name = "_transformed_outcome"
    pred_name = "_cate_prediction"
    cols[out_name] = ytilde
    roles[out_name] = OUTCOME
    cols[pred_name] = g
    roles[pred_name] = PREDICTION
    return Dataset(cols, Schema(roles, "numeric"))


def cate_ess(data: Dataset, learner, grid, alpha=0.05, loss: LossFunction = SQUARED, variance_mode=EXACT,
             seed=None, regime_threshold=DEFAULT_THRESHOLD, eps=DEFAULT_EPS, curve=False):
    """ESS of a fixed CATE rule against a learner that predicts the transformed outcome."""
    if loss.kind != "squared":
        raise ConfigError("CATE ESS is defined for squared loss only")
    td = transformed_dataset(data, eps)
    return sequential_ess(td, learner, grid, SQUARED, alpha, variance_mode, seed, regime_threshold, curve)


def arm_dataset(data: Dataset, t) -> Dataset:
    if t not in (0, 1):
        raise ConfigError(f"arm must be 0 or 1, got {t!r}")
    tcol = data[_require(data, TREATMENT)]
    idx = np.flatnonzero(tcol == t)
    if len(idx) == 0:
        raise InvalidInputError(f"arm T={t} has no rows")
    arm_role = ARM1_PREDICTION if t == 1 else ARM0_PREDICTION
    pred_col = data.schema.column(arm_role) or data.schema.column(PREDICTION)
    if pred_col is None:
        raise SchemaError(f"arm T={t} needs an {arm_role} (or fixed_rule_prediction) column")
    keep = (ID, NUMERIC, CATEGORICAL, OUTCOME)
    roles = {c: r for c, r in data.schema.roles.items() if r in keep}
    cols = {c: data[c][idx] for c in roles}
    cols["_arm_prediction"] = data[pred_col][idx]
    roles["_arm_prediction"] = PREDICTION
    return Dataset(cols, Schema(roles, data.schema.outcome_type))


def arm_specific_ess(data: Dataset, learner, grid, loss: LossFunction = SQUARED, alpha=0.05, t=1,
                     variance_mode=EXACT, seed=None, regime_threshold=DEFAULT_THRESHOLD, curve=False):
    """Sequential ESS inside the ``T == t`` subsample (scalings use ``n_t``)."""
    if loss.kind != "squared":
        warnings.warn("arm-specific ESS under zero_one loss: the CATE decomposition argument "
                      "holds for squared loss only", stacklevel=2)
    sub = arm_dataset(data, t)
    return sequential_ess(sub, learner, grid, loss, alpha, variance_mode, seed, regime_threshold, curve)
