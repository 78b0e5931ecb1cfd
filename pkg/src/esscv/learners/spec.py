"""Comparator algorithm families: specification, per-N tuning, training.

A :class:`LearnerSpec` maps a training sample to a :class:`PredictionRule`.
Hyperparameters are chosen once per training size ``N`` on a seeded random
subset of size ``N`` (internal k-fold CV) and then frozen across all
training blocks at that size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from sklearn.model_selection import KFold, StratifiedKFold

from esscv._rng import derive_seed, rng
from esscv.core import Dataset, PredictionRule
from esscv.errors import ConfigError, EssError, InvalidInputError, TrainingError
from esscv.learners.forest import make_forest
from esscv.learners.knn import KNearest
from esscv.learners.lasso import alpha_max, alpha_path, lasso_cd, lasso_cd_batch
from esscv.learners.logit import LogitL1
from esscv.learners.preprocess import PreprocessOptions, TargetTransform, preprocess_fit

# family -> required task (None: either)
FAMILIES = {
    "baseline_mean": "regression",
    "baseline_majority": "classification",
    "lasso": "regression",
    "logit_l1": "classification",
    "random_forest": None,
    "knn": None,
}

DISPLAY_NAMES = {
    "baseline_mean": "Mean",
    "baseline_majority": "Majority",
    "lasso": "Lasso",
    "logit_l1": "Logit L1",
    "random_forest": "RF",
    "knn": "kNN",
}

FALLBACK = "fallback"


@dataclass(frozen=True)
class TuningPolicy:
    per_N_subset: bool = True  # False: tune separately inside every training block
    lasso_folds: int = 5
    forest_folds: int = 3
    logit_folds: int = 5
    knn_folds: int = 5
    class_fold_cap: int = 3
    lasso_n_alphas: int = 20
    lasso_decades: float = 3.0
    logit_C: tuple = (0.01, 0.1, 1.0, 10.0)
    forest_max_depth: tuple = (None, 10, 20)
    forest_min_leaf: tuple = (1, 5)
    knn_k: tuple = (1, 3, 5, 9)


@dataclass(frozen=True)
class LearnerSpec:
    """Comparator family plus preprocessing and tuning configuration.

    ``hyperparams``, when given, are used as-is and tuning is skipped.
    ``log_outcome`` trains regression learners on ``log(1 + y)`` and maps
    predictions back with ``expm1`` before losses are evaluated.
    """

    family: str
    preprocessing: PreprocessOptions = field(default_factory=PreprocessOptions)
    tuning: TuningPolicy = field(default_factory=TuningPolicy)
    hyperparams: Mapping[str, Any] | None = None
    log_outcome: bool = False
    n_estimators: int = 300

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown learner family {self.family!r}; choose from {sorted(FAMILIES)}")

    @property
    def display_name(self):
        return DISPLAY_NAMES[self.family]

    def task(self, data: Dataset):
        task = "regression" if data.schema.outcome_type == "numeric" else "classification"
        need = FAMILIES[self.family]
        if need is not None and need != task:
            raise InvalidInputError(f"learner {self.family} needs a {need} outcome, data has a {task} outcome")
        if self.log_outcome and task != "regression":
            raise InvalidInputError("log_outcome applies to regression only")
        return task

    def to_dict(self):
        return {
            "family": self.family,
            "preprocessing": {
                "winsorize_quantiles": self.preprocessing.winsorize_quantiles,
                "standardize_numeric": self.preprocessing.standardize_numeric,
                "rare_category_min_count": self.preprocessing.rare_category_min_count,
                "one_hot_drop_reference": self.preprocessing.one_hot_drop_reference,
            },
            "per_N_subset": self.tuning.per_N_subset,
            "hyperparams": None if self.hyperparams is None else dict(self.hyperparams),
            "log_outcome": self.log_outcome,
            "n_estimators": self.n_estimators,
        }


def _mode(labels):
    values, counts = np.unique(labels, return_counts=True)
    return values[int(np.argmax(counts))]


def _constant_rule(value, provenance):
    def predict(data):
        out = np.empty(data.n, dtype=np.asarray([value]).dtype)
        out[:] = value
        return out
    return PredictionRule(predict, provenance)


def fold_count(y, policy: TuningPolicy, task, default):
    """Number of internal CV folds; 0 means tuning is not possible."""
    if task == "classification":
        _, counts = np.unique(y, return_counts=True)
        if len(counts) < 2:
            return 0
        k = min(default, policy.class_fold_cap, int(counts.min()))
    else:
        k = min(default, len(y))
    return k if k >= 2 else 0


def _candidates(spec: LearnerSpec, sub: Dataset, task):
    pol = spec.tuning
    if spec.family == "lasso":
        X = preprocess_fit(sub, spec.preprocessing).transform(sub)
        y = TargetTransform.fit(sub.y, spec.preprocessing.winsorize_quantiles,
                                spec.log_outcome).forward(sub.y)
        path = alpha_path(X, y, pol.lasso_n_alphas, pol.lasso_decades)
        return [{"alpha": float(a)} for a in path], pol.lasso_folds
    if spec.family == "logit_l1":
        return [{"C": float(c)} for c in pol.logit_C], pol.logit_folds
    if spec.family == "random_forest":
        return ([{"max_depth": d, "min_samples_leaf": m}
                 for d in pol.forest_max_depth for m in pol.forest_min_leaf], pol.forest_folds)
    if spec.family == "knn":
        return [{"k": int(k)} for k in pol.knn_k], pol.knn_folds
    return [{}], 0


def default_hyperparams(spec: LearnerSpec, data: Dataset):
    if spec.family == "lasso":
        X = preprocess_fit(data, spec.preprocessing).transform(data)
        return {"alpha": 0.1 * alpha_max(X, np.asarray(data.y, dtype=float))}
    if spec.family == "logit_l1":
        return {"C": 1.0}
    if spec.family == "random_forest":
        return {"max_depth": None, "min_samples_leaf": 1}
    if spec.family == "knn":
        return {"k": 5}
    return {}


def tune_on(spec: LearnerSpec, sub: Dataset, seed) -> dict:
    """Select hyperparameters by internal k-fold CV on ``sub``."""
    task = spec.task(sub)
    if spec.family in ("baseline_mean", "baseline_majority"):
        return {}
    if task == "classification" and len(np.unique(sub.y)) < 2:
        return {FALLBACK: "majority"}
    candidates, default_k = _candidates(spec, sub, task)
    k = fold_count(sub.y, spec.tuning, task, default_k)
    if k == 0 or len(candidates) == 1:
        return candidates[0] if len(candidates) == 1 else default_hyperparams(spec, sub)
    fold_seed = derive_seed(seed, "folds")
    if task == "classification":
        splits = list(StratifiedKFold(k, shuffle=True, random_state=fold_seed).split(np.zeros(sub.n), sub.y))
    else:
        splits = list(KFold(k, shuffle=True, random_state=fold_seed).split(np.zeros(sub.n)))
    scores = []
    for cand in candidates:
        total = 0.0
        for f, (tr, te) in enumerate(splits):
            rule = train(spec, cand, sub.take(tr), derive_seed(seed, "fold", f))
            test = sub.take(te)
            pred = rule.predict(test)
            if task == "classification":
                total += float(np.mean(pred != test.y))
            else:
                total += float(np.mean((pred - test.y) ** 2))
        scores.append(total / len(splits))
    # ties keep the first candidate (largest penalty on the lasso path)
    return dict(candidates[int(np.argmin(scores))])


def tune(spec: LearnerSpec, data: Dataset, N, seed) -> dict:
    """Hyperparameters for training size ``N``, frozen across all blocks.

    Draws one seeded size-``N`` tuning subset from ``data``.
    """
    spec.task(data)
    if spec.hyperparams is not None:
        return dict(spec.hyperparams)
    if spec.family in ("baseline_mean", "baseline_majority"):
        return {}
    N = int(N)
    if N > data.n:
        raise InvalidInputError(f"tuning subset size {N} exceeds data size {data.n}")
    idx = np.sort(rng(seed, N, "tune").choice(data.n, size=N, replace=False))
    return tune_on(spec, data.take(idx), derive_seed(seed, N, "tune"))


def _provenance(spec, block_id, hp, seed):
    return ("trained", spec.family, block_id, tuple(sorted((k, repr(v)) for k, v in hp.items())), seed)


def train(spec: LearnerSpec, hyperparams: Mapping, block: Dataset, seed, block_id=None) -> PredictionRule:
    """Fit one prediction rule on the rows of ``block``."""
    if block.n == 0:
        raise InvalidInputError("cannot train on an empty block")
    task = spec.task(block)
    hp = dict(hyperparams)
    prov = _provenance(spec, block_id, hp, seed)
    y = block.y
    if spec.family == "baseline_mean":
        return _constant_rule(float(np.mean(y)), prov)
    if task == "classification" and (spec.family == "baseline_majority" or hp.get(FALLBACK)
                                     or len(np.unique(y)) < 2):
        return _constant_rule(_mode(y), prov)

    pre = preprocess_fit(block, spec.preprocessing)
    X = pre.transform(block)
    if task == "regression":
        tt = TargetTransform.fit(y, spec.preprocessing.winsorize_quantiles, spec.log_outcome)
        target = tt.forward(y)
    else:
        tt = None
        target = y

    if spec.family == "lasso":
        b0, coef, _ = lasso_cd(X, target, hp["alpha"])
        model_predict = lambda Z: b0 + Z @ coef  # noqa: E731
    elif spec.family == "logit_l1":
        model = LogitL1(hp.get("C", 1.0)).fit(X, target)
        model_predict = model.predict
    elif spec.family == "random_forest":
        model = make_forest(task, hp.get("n_estimators", spec.n_estimators), hp.get("max_depth"),
                            hp.get("min_samples_leaf", 1), seed)
        model.fit(X if X.shape[1] else np.zeros((block.n, 1)), target)
        model_predict = (lambda Z: model.predict(Z if Z.shape[1] else np.zeros((len(Z), 1))))
    elif spec.family == "knn":
        model = KNearest(hp.get("k", 5), task).fit(X, target)
        model_predict = model.predict
    else:  # pragma: no cover - guarded by FAMILIES
        raise ConfigError(spec.family)

    def predict(data):
        out = model_predict(pre.transform(data))
        return tt.inverse(out) if tt is not None else out

    return PredictionRule(predict, prov)


class BlockRules:
    """The B trained rules of one block-out CV run.

    ``constants`` is set when every rule predicts a single value (enables
    closed-form loss aggregation); ``linear`` holds ``(intercepts, slopes,
    columns, log)`` for batched linear fits.
    """

    def __init__(self, rules=None, constants=None, linear=None):
        self.rules = rules
        self.constants = None if constants is None else np.asarray(constants)
        self.linear = linear
        if rules is not None:
            self.n_blocks = len(rules)
        elif constants is not None:
            self.n_blocks = len(self.constants)
        else:
            self.n_blocks = len(linear[0])

    def predict(self, data: Dataset, start=0, stop=None) -> np.ndarray:
        stop = self.n_blocks if stop is None else stop
        if self.constants is not None:
            c = self.constants[start:stop]
            return np.repeat(c[:, None], data.n, axis=1)
        if self.linear is not None:
            b0, slopes, cols, log = self.linear
            X = np.column_stack([data[c] for c in cols]) if cols else np.empty((data.n, 0))
            out = b0[start:stop, None] + slopes[start:stop] @ X.T
            return np.expm1(out) if log else out
        preds = [np.asarray(self.rules[b].predict(data)) for b in range(start, stop)]
        dtype = object if any(p.dtype.kind in "OUS" for p in preds) else np.result_type(*preds)
        out = np.empty((len(preds), data.n), dtype=dtype)
        for i, p in enumerate(preds):
            out[i] = p
        return out


def _block_mode(y_blocks):
    return np.array([_mode(row) for row in y_blocks])


def _batch_lasso(spec, hp, data, B, N):
    cols = data.numeric_covariates
    X = data.numeric_matrix().reshape(B, N, len(cols))
    y = np.asarray(data.y, dtype=float).reshape(B, N)
    if spec.log_outcome and np.any(y <= -1):
        raise InvalidInputError("log-outcome training needs outcomes > -1")
    q = spec.preprocessing.winsorize_quantiles
    if q is not None:
        lo = np.quantile(y, q[0], axis=1)
        hi = np.quantile(y, q[1], axis=1)
        y = np.clip(y, lo[:, None], hi[:, None])
    if spec.log_outcome:
        y = np.log1p(y)
    mean = X.mean(axis=1)
    scale = X.std(axis=1)
    if not spec.preprocessing.standardize_numeric:
        mean = np.zeros_like(mean)
        scale = np.ones_like(scale)
    scale = np.where(scale == 0, 1.0, scale)
    Xs = (X - mean[:, None, :]) / scale[:, None, :]
    b0, coef = lasso_cd_batch(Xs, y, hp["alpha"])
    slopes = coef / scale
    intercepts = b0 - np.einsum("bp,bp->b", mean, slopes)
    return BlockRules(linear=(intercepts, slopes, cols, spec.log_outcome))


def block_seed(seed, N, b):
    return derive_seed(seed, N, b)


def fit_blocks(learner, data: Dataset, N, seed, hyperparams=None) -> BlockRules:
    """Train one rule per contiguous size-``N`` block of ``data``.

    ``learner`` is a :class:`LearnerSpec` or any object with
    ``fit(train: Dataset, seed) -> PredictionRule``. Block ``b`` uses seed
    ``derive_seed(seed, N, b)``.
    """
    N = int(N)
    B = data.n // N
    if isinstance(learner, LearnerSpec):
        task = learner.task(data)
        if learner.family == "baseline_mean":
            return BlockRules(constants=np.asarray(data.y, dtype=float)[:B * N].reshape(B, N).mean(axis=1))
        if learner.family == "baseline_majority":
            return BlockRules(constants=_block_mode(np.asarray(data.y)[:B * N].reshape(B, N)))
        per_block_tuning = hyperparams is None and learner.hyperparams is None and not learner.tuning.per_N_subset
        if hyperparams is None and not per_block_tuning:
            hyperparams = tune(learner, data, N, seed)
        if (learner.family == "lasso" and not per_block_tuning and not data.categorical_covariates
                and task == "regression"):
            return _batch_lasso(learner, hyperparams, data, B, N)

    rules = []
    for b in range(B):
        block = data.take(np.arange(b * N, (b + 1) * N))
        s = block_seed(seed, N, b)
        try:
            if isinstance(learner, LearnerSpec):
                hp = hyperparams if hyperparams is not None else tune_on(learner, block, s)
                rule = train(learner, hp, block, s, block_id=b)
            else:
                rule = learner.fit(block, s)
        except Exception as exc:  # noqa: BLE001 - re-raised with the block id attached
            details = exc.details if isinstance(exc, EssError) else {}
            raise TrainingError(f"training failed on block {b} (N={N}): {exc}",
                                block=b, N=N, cause=type(exc).__name__, **details) from exc
        rules.append(rule)
    return BlockRules(rules=rules)
