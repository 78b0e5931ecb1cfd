"""Feature construction fitted on training rows only.

Numeric covariates are standardized with the population SD (``ddof=0``),
categorical covariates have rare levels collapsed into ``"other"`` and are
one-hot encoded with the most frequent level dropped as reference. All
statistics are frozen at fit time; unseen levels map to ``"other"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from esscv.errors import InvalidInputError

OTHER = "other"


@dataclass(frozen=True)
class PreprocessOptions:
    winsorize_quantiles: tuple[float, float] | None = (0.01, 0.99)
    standardize_numeric: bool = True
    rare_category_min_count: int = 50
    one_hot_drop_reference: bool = True

    def __post_init__(self):
        q = self.winsorize_quantiles
        if q is not None:
            lo, hi = q
            if not 0 <= lo < hi <= 1:
                raise InvalidInputError(f"winsorize quantiles must satisfy 0 <= low < high <= 1, got {q}")
            object.__setattr__(self, "winsorize_quantiles", (float(lo), float(hi)))
        if self.rare_category_min_count < 1:
            raise InvalidInputError("rare_category_min_count must be >= 1")


def winsorize(values, quantiles):
    """Clip ``values`` at its own empirical quantiles (linear interpolation)."""
    values = np.asarray(values, dtype=float)
    lo, hi = np.quantile(values, quantiles)
    return np.clip(values, lo, hi)


@dataclass
class FittedPreprocessor:
    numeric: list[str]
    means: np.ndarray
    scales: np.ndarray
    categorical: dict[str, list[str]]  # column -> encoded levels (reference excluded)
    level_maps: dict[str, dict[str, str]] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    @property
    def width(self):
        return len(self.numeric) + sum(len(v) for v in self.categorical.values())

    def transform(self, data) -> np.ndarray:
        parts = []
        if self.numeric:
            Xn = np.column_stack([data[c] for c in self.numeric]).astype(float)
            parts.append((Xn - self.means) / self.scales)
        for col, levels in self.categorical.items():
            mapping = self.level_maps[col]
            raw = data[col]
            mapped = np.array([mapping.get(str(v), OTHER) for v in raw], dtype=object)
            for lev in levels:
                parts.append((mapped == lev).astype(float)[:, None])
        if not parts:
            return np.empty((data.n, 0))
        return np.hstack(parts)


def preprocess_fit(data, options: PreprocessOptions = PreprocessOptions()) -> FittedPreprocessor:
    flags = []
    numeric = list(data.numeric_covariates)
    if numeric:
        Xn = np.column_stack([data[c] for c in numeric]).astype(float)
        means = Xn.mean(axis=0)
        scales = Xn.std(axis=0)
        if not options.standardize_numeric:
            means = np.zeros_like(means)
            scales = np.ones_like(scales)
        zero = scales == 0
        if zero.any():
            flags.extend(f"constant_column:{numeric[j]}" for j in np.flatnonzero(zero))
            scales = np.where(zero, 1.0, scales)
    else:
        means = np.zeros(0)
        scales = np.ones(0)

    categorical = {}
    level_maps = {}
    for col in data.categorical_covariates:
        raw = np.array([str(v) for v in data[col]], dtype=object)
        levels, counts = np.unique(raw, return_counts=True)
        keep = [str(lev) for lev, c in zip(levels, counts) if c >= options.rare_category_min_count]
        mapping = {lev: lev for lev in keep}
        collapsed = np.array([mapping.get(v, OTHER) for v in raw], dtype=object)
        enc_levels, enc_counts = np.unique(collapsed, return_counts=True)
        enc_levels = [str(v) for v in enc_levels]
        if OTHER not in enc_levels:
            enc_levels.append(OTHER)
            enc_counts = np.append(enc_counts, 0)
        if options.one_hot_drop_reference:
            # reference = most frequent observed level, ties broken by sort order
            ref = enc_levels[int(np.argmax(enc_counts))]
            enc_levels = [lev for lev in enc_levels if lev != ref]
        categorical[col] = enc_levels
        level_maps[col] = mapping
    return FittedPreprocessor(numeric, means, scales, categorical, level_maps, flags)


@dataclass(frozen=True)
class TargetTransform:
    """Training-target transform: optional winsorization then optional log1p."""

    bounds: tuple[float, float] | None
    log: bool

    @classmethod
    def fit(cls, y, quantiles, log=False):
        y = np.asarray(y, dtype=float)
        bounds = None
        if quantiles is not None and len(y) > 0:
            lo, hi = np.quantile(y, quantiles)
            bounds = (float(lo), float(hi))
        if log and np.any(y <= -1):
            raise InvalidInputError("log-outcome training needs outcomes > -1")
        return cls(bounds, log)

    def forward(self, y):
        y = np.asarray(y, dtype=float)
        if self.bounds is not None:
            y = np.clip(y, *self.bounds)
        return np.log1p(y) if self.log else y

    def inverse(self, pred):
        return np.expm1(pred) if self.log else pred
