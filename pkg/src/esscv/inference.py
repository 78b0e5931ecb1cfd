"""Per-size one-sided tests, the sequential ESS procedure and the plugin estimate.

At each grid size ``N_k`` we test ``H0: e_{N_k} <= e_rule`` against the
alternative that the learner is still worse than the fixed rule, with

    T  = (e_cv - e_rule) / (sigma / sqrt(n)),
    LB = (e_cv - e_rule) - z_{1-alpha} * sigma / sqrt(n).

The procedure moves to the next size while ``H0`` is rejected and stops at
the first non-rejection; ``[N_hat, inf)`` is then a one-sided confidence
interval for the equivalent sample size.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from esscv.core import Dataset, LossFunction
from esscv.errors import ConfigError, EssError, GridInfeasibleError, InvalidInputError
from esscv.risk import BlockCvResult, block_out_cv, difference_loss
from esscv.variance import (
    DEFAULT_THRESHOLD,
    EXACT,
    estimate_variance,
    normalize_mode,
    select_regime,
    variance_of_difference,
)

BEYOND_GRID = "beyond grid"


@dataclass(frozen=True)
class TrainingGrid:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise ConfigError("training grid is empty")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"training sizes must be >= 1, got {sizes}")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError(f"training sizes must be strictly increasing, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    def __len__(self):
        return len(self.sizes)

    def __iter__(self):
        return iter(self.sizes)

    def check(self, n):
        """Raise unless every size leaves at least two blocks of ``n`` rows."""
        bad = [N for N in self.sizes if n // N < 2]
        if bad:
            raise GridInfeasibleError(f"training sizes {bad} exceed n/2 for n={n}", sizes=bad, n=n)
        return self

    @classmethod
    def parse(cls, text: str) -> TrainingGrid:
        """``"10,50,100"``, ``"geom:a:b:k"`` (k rounded log-spaced sizes) or ``"lin:a:b:step"``."""
        text = str(text).strip()
        try:
            if text.startswith("geom:"):
                a, b, k = text[5:].split(":")
                sizes = np.unique(np.round(np.geomspace(float(a), float(b), int(k))).astype(int))
                return cls(tuple(int(s) for s in sizes))
            if text.startswith("lin:"):
                a, b, step = (int(v) for v in text[4:].split(":"))
                return cls(tuple(range(a, b + 1, step)))
            return cls(tuple(int(v) for v in text.split(",") if v.strip()))
        except ValueError as exc:
            raise ConfigError(f"cannot parse grid {text!r}: {exc}") from None


@dataclass(frozen=True)
class StepResult:
    N: int
    e_cv: float  # learner block-out CV risk
    e_rule: float  # fixed-rule risk on the same retained rows
    sigma_hat: float
    T_stat: float
    LB: float
    rejected: bool
    regime: str
    n_effective: int
    B: int
    alpha: float
    variance_mode: str
    learner_se: float  # SE of e_cv alone, for curve reporting
    degenerate: bool = False
    clipped: bool = False
    components: dict | None = None

    @property
    def diff(self):
        return self.e_cv - self.e_rule

    @property
    def se(self):
        return self.sigma_hat / math.sqrt(self.n_effective)

    def as_dict(self):
        d = asdict(self)
        d["diff"] = self.diff
        d["se_diff"] = self.se
        return d


def critical_value(alpha):
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    return float(norm.ppf(1 - alpha))


def decide(diff, sigma_hat, n_effective, alpha):
    """Return ``(T, LB, rejected, degenerate)`` for one step.

    ``LB`` is computed as ``se * (T - z)`` so that ``rejected``, ``T > z`` and
    ``LB > 0`` agree exactly. A zero ``sigma_hat`` falls back to the sign of
    ``diff``.
    """
    z = critical_value(alpha)
    se = sigma_hat / math.sqrt(n_effective)
    if se > 0:
        T = diff / se
        LB = se * (T - z)
        return T, LB, bool(T > z), False
    T = math.inf if diff > 0 else (-math.inf if diff < 0 else 0.0)
    return T, float(diff), bool(diff > 0), True


def step_from_cv(cv_delta: BlockCvResult, alpha=0.05, variance_mode=EXACT,
                 regime_threshold=DEFAULT_THRESHOLD) -> StepResult:
    """Test one grid size from a difference-loss block-out CV run."""
    if not cv_delta.is_difference:
        raise InvalidInputError("step_from_cv needs a run on the difference loss")
    mode = normalize_mode(variance_mode)
    v = variance_of_difference(cv_delta, mode, threshold=regime_threshold)
    base = cv_delta.base()
    learner_var = estimate_variance(base, regime_threshold)
    T, LB, rejected, degenerate = decide(cv_delta.e_cv, v.sigma, v.n_effective, alpha)
    return StepResult(
        N=cv_delta.N, e_cv=base.e_cv, e_rule=cv_delta.e_rule, sigma_hat=v.sigma,
        T_stat=T, LB=LB, rejected=rejected, regime=v.regime, n_effective=v.n_effective,
        B=cv_delta.B, alpha=alpha, variance_mode=mode, learner_se=learner_var.se,
        degenerate=degenerate, clipped=v.clipped, components=v.components)


def test_step(data: Dataset, learner, N, loss: LossFunction, alpha=0.05, variance_mode=EXACT,
              seed=None, regime_threshold=DEFAULT_THRESHOLD, hyperparams=None) -> StepResult:
    critical_value(alpha)
    cv = block_out_cv(data, learner, N, difference_loss(loss, data), seed, hyperparams=hyperparams)
    return step_from_cv(cv, alpha, variance_mode, regime_threshold)


test_step.__test__ = False  # not a pytest test


@dataclass(frozen=True)
class SequentialResult:
    grid: TrainingGrid
    steps: tuple  # executed prefix
    stop_index: int | None  # 1-based step of the first non-rejection
    N_hat: int
    alpha: float
    exhausted: bool
    curve: tuple | None = None  # all K steps in curve mode
    N_hat_curve: int | None = None  # max{N_k : LB_k > 0} + 1 over the full curve
    plugin: int | str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def ci(self):
        return (self.N_hat, math.inf)

    @property
    def confidence(self):
        return 1 - self.alpha

    def summary(self):
        pct = _format_percent(1 - self.alpha)
        if self.exhausted:
            return f"N* > {self.grid.sizes[-1]} with {pct}% confidence (grid exhausted)"
        return f"N* ≥ {self.N_hat} with {pct}% confidence"


def _format_percent(p):
    v = round(100 * p, 6)
    return str(int(v)) if v == int(v) else f"{v:g}"


def stopping_rule(sizes, rejected):
    """``(N_hat, stop_index, exhausted)`` from ordered rejection flags."""
    for k, rej in enumerate(rejected):
        if not rej:
            return (1 if k == 0 else sizes[k - 1] + 1), k + 1, False
    return sizes[len(rejected) - 1] + 1, None, True


def lower_bound_ess(sizes, lower_bounds):
    """``max{N_k : LB_k > 0} + 1``, or 1 if no lower bound is positive."""
    pos = [N for N, lb in zip(sizes, lower_bounds) if lb > 0]
    return max(pos) + 1 if pos else 1


def plugin_ess(curve, e_rule):
    """``min{N_k : e_cv(N_k) <= e_rule}`` or ``"beyond grid"``."""
    if not curve:
        raise InvalidInputError("plugin estimate needs a non-empty curve")
    for N, e in curve:
        if e <= e_rule:
            return int(N)
    return BEYOND_GRID


def sequential_from_steps(grid: TrainingGrid, steps, alpha, curve_mode=False, meta=None) -> SequentialResult:
    """Apply the stopping rule to already-computed ordered steps."""
    steps = tuple(steps)
    if not steps:
        raise InvalidInputError("no steps to evaluate")
    sizes = grid.sizes
    N_hat, stop, exhausted = stopping_rule(sizes, [s.rejected for s in steps])
    if exhausted and len(steps) < len(sizes):
        raise InvalidInputError("steps end before the grid while every executed step rejected")
    executed = steps if stop is None else steps[:stop]
    curve = steps if curve_mode else None
    N_hat_curve = lower_bound_ess(sizes, [s.LB for s in steps]) if curve_mode else None
    plug = plugin_ess([(s.N, s.e_cv) for s in steps], steps[0].e_rule) if curve_mode else None
    return SequentialResult(grid, executed, stop, N_hat, alpha, exhausted, curve, N_hat_curve, plug,
                            dict(meta or {}))


def sequential_ess(data: Dataset, learner, grid, loss: LossFunction, alpha=0.05, variance_mode=EXACT,
                   seed=None, regime_threshold=DEFAULT_THRESHOLD, curve=False) -> SequentialResult:
    """Run the sequential procedure; ``curve=True`` evaluates every grid size.

    If a step fails, the raised error carries the completed steps in
    ``error.details['partial_steps']``.
    """
    if not isinstance(grid, TrainingGrid):
        grid = TrainingGrid(tuple(grid))
    grid.check(data.n)
    critical_value(alpha)
    mode = normalize_mode(variance_mode)
    select_regime(1, regime_threshold)
    dloss = difference_loss(loss, data)
    steps = []
    for N in grid:
        try:
            cv = block_out_cv(data, learner, N, dloss, seed)
            step = step_from_cv(cv, alpha, mode, regime_threshold)
        except EssError as exc:
            exc.details["partial_steps"] = [s.as_dict() for s in steps]
            exc.details.setdefault("N", N)
            raise
        steps.append(step)
        if not curve and not step.rejected:
            break
    meta = {"n": data.n, "loss": loss.kind, "variance_mode": mode,
            "regime_threshold": regime_threshold, "seed": seed}
    return sequential_from_steps(grid, steps, alpha, curve_mode=curve, meta=meta)


@dataclass(frozen=True)
class MonotonicityViolation:
    N_from: int
    N_to: int
    delta: float
    within_noise: bool | None


def check_monotonicity(curve):
    """Adjacent increases in a risk curve.

    ``curve`` holds ``(N, risk)`` or ``(N, risk, se)`` tuples sorted by ``N``.
    An increase is ``within_noise`` when it is below twice the combined SE
    ``sqrt(se1**2 + se2**2)``; without SEs the flag is ``None``.
    """
    out = []
    for a, b in zip(curve, curve[1:]):
        delta = float(b[1] - a[1])
        if delta > 0:
            noise = None
            if len(a) > 2 and len(b) > 2:
                noise = bool(delta < 2 * math.hypot(a[2], b[2]))
            out.append(MonotonicityViolation(int(a[0]), int(b[0]), delta, noise))
    return out
