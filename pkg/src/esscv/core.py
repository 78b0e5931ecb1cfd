"""Domain types shared across the package: datasets, losses, rules, risk estimates."""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from esscv.errors import InvalidInputError, SchemaError

ID = "id"
NUMERIC = "covariate_numeric"
CATEGORICAL = "covariate_categorical"
OUTCOME = "outcome"
PREDICTION = "fixed_rule_prediction"
TREATMENT = "treatment"
PROPENSITY = "propensity"
TRANSFORMED_OUTCOME = "transformed_outcome"
CATE_PREDICTION = "cate_prediction"
ARM0_PREDICTION = "arm0_prediction"
ARM1_PREDICTION = "arm1_prediction"

ROLES = (
    ID,
    NUMERIC,
    CATEGORICAL,
    OUTCOME,
    PREDICTION,
    TREATMENT,
    PROPENSITY,
    TRANSFORMED_OUTCOME,
    CATE_PREDICTION,
    ARM0_PREDICTION,
    ARM1_PREDICTION,
)
COVARIATE_ROLES = (NUMERIC, CATEGORICAL)
# roles that must appear at most once
SINGLETON_ROLES = tuple(r for r in ROLES if r not in COVARIATE_ROLES)
# roles whose values live on the outcome scale
OUTCOME_SCALE_ROLES = (OUTCOME, PREDICTION, ARM0_PREDICTION, ARM1_PREDICTION)

OUTCOME_TYPES = ("numeric", "categorical")


@dataclass(frozen=True)
class Schema:
    """Column name to role mapping plus the outcome type.

    ``outcome_type`` is ``"numeric"`` (squared loss) or ``"categorical"``
    (zero-one loss). Columns absent from ``roles`` are ignored on ingestion.
    """

    roles: Mapping[str, str]
    outcome_type: str = "numeric"

    def __post_init__(self):
        roles = dict(self.roles)
        bad = {c: r for c, r in roles.items() if r not in ROLES}
        if bad:
            raise SchemaError(f"unknown roles {bad}; valid roles are {list(ROLES)}", roles=bad)
        if self.outcome_type not in OUTCOME_TYPES:
            raise SchemaError(f"outcome_type must be one of {OUTCOME_TYPES}, got {self.outcome_type!r}")
        n_outcome = sum(r == OUTCOME for r in roles.values())
        if n_outcome != 1:
            raise SchemaError(f"schema needs exactly one outcome column, found {n_outcome}")
        for role in SINGLETON_ROLES:
            cols = [c for c, r in roles.items() if r == role]
            if len(cols) > 1:
                raise SchemaError(f"at most one {role} column allowed, found {cols}")
        object.__setattr__(self, "roles", roles)

    def column(self, role):
        """Name of the single column with ``role``, or None."""
        for c, r in self.roles.items():
            if r == role:
                return c
        return None

    def columns(self, *roles):
        return [c for c, r in self.roles.items() if r in roles]

    @property
    def outcome(self):
        return self.column(OUTCOME)

    def with_role(self, column, role):
        roles = {c: r for c, r in self.roles.items() if not (role in SINGLETON_ROLES and r == role)}
        roles[column] = role
        return Schema(roles, self.outcome_type)

    def to_dict(self):
        return {"roles": dict(self.roles), "outcome_type": self.outcome_type}

    @classmethod
    def from_dict(cls, d):
        if "roles" not in d:
            raise SchemaError("schema mapping needs a 'roles' object")
        return cls(dict(d["roles"]), d.get("outcome_type", "numeric"))


def _is_missing(values: np.ndarray) -> np.ndarray:
    if values.dtype.kind == "f":
        return np.isnan(values)
    if values.dtype.kind in "OUS":
        return np.array([v is None or (isinstance(v, float) and math.isnan(v)) or
                         (isinstance(v, str) and v.strip() == "") for v in values], dtype=bool)
    return np.zeros(len(values), dtype=bool)


def _numeric_role(role, outcome_type):
    if role in (NUMERIC, PROPENSITY, TRANSFORMED_OUTCOME, CATE_PREDICTION, TREATMENT):
        return True
    if role in OUTCOME_SCALE_ROLES:
        return outcome_type == "numeric"
    return False


@dataclass(frozen=True)
class Dataset:
    """Columnar table of covariates, outcome and optional special columns.

    Columns are 1-d numpy arrays of equal length, read-only after
    construction. Numeric roles hold floats; categorical covariates and
    categorical outcomes hold labels (strings or ints).
    """

    columns: Mapping[str, np.ndarray]
    schema: Schema
    n: int = field(init=False)

    def __post_init__(self):
        cols = {}
        n = None
        for name, role in self.schema.roles.items():
            if name not in self.columns:
                raise SchemaError(f"schema column {name!r} missing from data", column=name)
            v = np.asarray(self.columns[name])
            if v.ndim != 1:
                raise InvalidInputError(f"column {name!r} must be one-dimensional")
            if n is None:
                n = len(v)
            elif len(v) != n:
                raise InvalidInputError(f"column {name!r} has {len(v)} rows, expected {n}")
            if _numeric_role(role, self.schema.outcome_type):
                if v.dtype.kind not in "biuf":
                    try:
                        v = v.astype(float)
                    except (TypeError, ValueError):
                        raise InvalidInputError(f"column {name!r} ({role}) must be numeric", column=name)
                v = v.astype(float)
            missing = _is_missing(v)
            if missing.any():
                rows = np.flatnonzero(missing)[:10].tolist()
                raise InvalidInputError(f"column {name!r} has missing values at rows {rows}",
                                        column=name, rows=rows)
            v = v.copy()
            v.setflags(write=False)
            cols[name] = v
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "n", int(n or 0))

        t = self.schema.column(TREATMENT)
        if t is not None:
            bad = ~np.isin(cols[t], (0.0, 1.0))
            if bad.any():
                raise InvalidInputError(f"treatment column {t!r} must be 0/1; bad rows "
                                        f"{np.flatnonzero(bad)[:10].tolist()}", column=t)
        p = self.schema.column(PROPENSITY)
        if p is not None:
            bad = ~((cols[p] > 0) & (cols[p] < 1))
            if bad.any():
                raise InvalidInputError(f"propensity column {p!r} must lie in (0,1); bad rows "
                                        f"{np.flatnonzero(bad)[:10].tolist()}", column=p)

    @classmethod
    def from_arrays(cls, y, X=None, prediction=None, outcome_type="numeric", **extra):
        """Convenience constructor for numeric covariate matrices.

        ``X`` columns are named ``x0, x1, ...``. Extra keyword arrays are
        added under their role name (e.g. ``treatment=t``).
        """
        cols = {"y": np.asarray(y)}
        roles = {"y": OUTCOME}
        if X is not None:
            X = np.asarray(X, dtype=float)
            if X.ndim == 1:
                X = X[:, None]
            for j in range(X.shape[1]):
                cols[f"x{j}"] = X[:, j]
                roles[f"x{j}"] = NUMERIC
        if prediction is not None:
            cols["prediction"] = np.asarray(prediction)
            roles["prediction"] = PREDICTION
        for role, values in extra.items():
            if role not in ROLES:
                raise SchemaError(f"unknown role {role!r}")
            cols[role] = np.asarray(values)
            roles[role] = role
        return cls(cols, Schema(roles, outcome_type))

    def __len__(self):
        return self.n

    def __getitem__(self, name):
        return self.columns[name]

    def role(self, role):
        c = self.schema.column(role)
        return None if c is None else self.columns[c]

    @property
    def y(self):
        return self.columns[self.schema.outcome]

    @property
    def prediction(self):
        c = self.schema.column(PREDICTION)
        if c is None:
            raise SchemaError("dataset has no fixed_rule_prediction column")
        return self.columns[c]

    @property
    def has_prediction(self):
        return self.schema.column(PREDICTION) is not None

    @property
    def ids(self):
        c = self.schema.column(ID)
        if c is None:
            return np.array([str(i) for i in range(self.n)], dtype=object)
        return np.array([str(v) for v in self.columns[c]], dtype=object)

    @property
    def numeric_covariates(self):
        return self.schema.columns(NUMERIC)

    @property
    def categorical_covariates(self):
        return self.schema.columns(CATEGORICAL)

    def numeric_matrix(self):
        names = self.numeric_covariates
        if not names:
            return np.empty((self.n, 0))
        return np.column_stack([self.columns[c] for c in names])

    def take(self, index) -> Dataset:
        index = np.asarray(index)
        return Dataset({c: v[index] for c, v in self.columns.items()}, self.schema)

    def with_column(self, name, values, role) -> Dataset:
        schema = self.schema.with_role(name, role)
        cols = {c: v for c, v in self.columns.items() if c in schema.roles}
        cols[name] = np.asarray(values)
        return Dataset(cols, schema)

    def with_outcome(self, values, outcome_type=None) -> Dataset:
        """Replace the outcome values, keeping the column name."""
        schema = self.schema if outcome_type is None else Schema(self.schema.roles, outcome_type)
        cols = dict(self.columns)
        cols[self.schema.outcome] = np.asarray(values)
        return Dataset(cols, schema)


@dataclass(frozen=True)
class LossFunction:
    """Pointwise loss ``l(y_true, y_pred)``: ``squared`` or ``zero_one``."""

    kind: str = "squared"

    def __post_init__(self):
        if self.kind not in ("squared", "zero_one"):
            raise InvalidInputError(f"unknown loss kind {self.kind!r}")

    @property
    def outcome_type(self):
        return "numeric" if self.kind == "squared" else "categorical"

    def __call__(self, y_true, y_pred):
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        if self.kind == "squared":
            for a in (y_true, y_pred):
                if a.dtype.kind not in "iuf":
                    raise InvalidInputError(f"squared loss needs numeric outcomes, got dtype {a.dtype}")
            d = y_pred - y_true
            return d * d
        return (y_pred != y_true).astype(float)

    def check(self, data: Dataset):
        if data.schema.outcome_type != self.outcome_type:
            raise InvalidInputError(
                f"{self.kind} loss requires a {self.outcome_type} outcome; "
                f"schema declares {data.schema.outcome_type}")


SQUARED = LossFunction("squared")
ZERO_ONE = LossFunction("zero_one")


def _is_number(v):
    return isinstance(v, numbers.Real) and not isinstance(v, (bool, np.bool_))


def evaluate_loss(loss: LossFunction, y_true: Any, y_pred: Any) -> float:
    """Loss of a single prediction.

    >>> evaluate_loss(LossFunction("squared"), 6, 1)
    25.0
    """
    if loss.kind == "squared":
        if not (_is_number(y_true) and _is_number(y_pred)):
            raise InvalidInputError(f"squared loss needs numbers, got {y_true!r} and {y_pred!r}")
        value = (float(y_pred) - float(y_true)) ** 2
        if not math.isfinite(value):
            raise InvalidInputError("non-finite squared loss")
        return value
    return float(y_pred != y_true)


@dataclass(frozen=True)
class PredictionRule:
    """A deterministic map from dataset rows to predictions.

    ``provenance`` is ``("fixed_rule",)`` for external rules or
    ``("trained", learner, block_id, hyperparams, seed)`` for fitted ones.
    """

    predict_fn: Callable[[Dataset], np.ndarray]
    provenance: tuple = ("fixed_rule",)

    def predict(self, data: Dataset) -> np.ndarray:
        return np.asarray(self.predict_fn(data))

    @classmethod
    def from_column(cls, data: Dataset):
        return cls(lambda d: d.prediction, ("fixed_rule",))


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    se: float
    n_eval: int
    metric_scale: str = "loss"

    def __post_init__(self):
        if self.se < 0:
            raise InvalidInputError("standard error must be non-negative")
        if self.metric_scale not in ("loss", "rmse"):
            raise InvalidInputError(f"unknown metric scale {self.metric_scale!r}")

    def to_rmse(self) -> RiskEstimate:
        """Delta-method conversion from MSE to RMSE: ``(sqrt(v), s / (2 sqrt(v)))``."""
        if self.metric_scale == "rmse":
            return self
        if self.value < 0:
            raise InvalidInputError("cannot take RMSE of a negative MSE")
        root = math.sqrt(self.value)
        se = self.se / (2 * root) if root > 0 else 0.0
        return RiskEstimate(root, se, self.n_eval, "rmse")

    def to_mse(self) -> RiskEstimate:
        if self.metric_scale == "loss":
            return self
        return RiskEstimate(self.value ** 2, 2 * self.value * self.se, self.n_eval, "loss")


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    balanced_accuracy: float | None
    f1: float | None
    recall_positive: float | None
    recall_negative: float | None
    degenerate: bool

    def as_dict(self):
        return {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "f1": self.f1,
            "recall_positive": self.recall_positive,
            "recall_negative": self.recall_negative,
            "degenerate": self.degenerate,
        }


def aggregate_metrics(y_true, y_pred) -> ClassificationMetrics:
    """Accuracy, balanced accuracy and F1 for binary 0/1 labels.

    Balanced accuracy is ``None`` when a class is absent from ``y_true``;
    F1 is ``None`` only when ``2TP + FP + FN == 0``. Either situation sets
    ``degenerate``.
    """
    y = np.asarray(y_true)
    p = np.asarray(y_pred)
    if y.shape != p.shape or y.ndim != 1 or len(y) == 0:
        raise InvalidInputError("label lists must be non-empty and of equal length")
    for a in (y, p):
        if not np.isin(a, (0, 1)).all():
            raise InvalidInputError("labels must be 0 or 1")
    y = y.astype(int)
    p = p.astype(int)
    tp = int(np.sum((y == 1) & (p == 1)))
    tn = int(np.sum((y == 0) & (p == 0)))
    fp = int(np.sum((y == 0) & (p == 1)))
    fn = int(np.sum((y == 1) & (p == 0)))
    accuracy = (tp + tn) / len(y)
    rec_pos = tp / (tp + fn) if tp + fn else None
    rec_neg = tn / (tn + fp) if tn + fp else None
    ba = None if rec_pos is None or rec_neg is None else (rec_pos + rec_neg) / 2
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else None
    degenerate = rec_pos is None or rec_neg is None or f1 is None
    return ClassificationMetrics(accuracy, ba, f1, rec_pos, rec_neg, degenerate)
