"""Report emitters: per-N curve records, flat tables and the summary block."""

from __future__ import annotations

import csv
import io
import json
import math

from esscv.core import RiskEstimate
from esscv.errors import InvalidInputError
from esscv.inference import SequentialResult, StepResult
from scipy.stats import norm

CURVE_FIELDS = (
    "N", "B", "n_effective", "regime", "risk", "se", "ci_half_width",
    "risk_rmse", "se_rmse", "ci_half_width_rmse",
    "e_rule", "diff", "se_diff", "T_stat", "LB", "rejected", "executed",
    "degenerate", "clipped",
)


def _finite(x):
    """JSON-safe float: infinities become strings."""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def step_record(step: StepResult, loss_kind="squared", executed=True):
    """One machine-readable row per training size.

    ``ci_half_width`` is the two-sided ``1 - alpha`` normal half-width of the
    learner risk. For squared loss the RMSE-scale columns use the delta
    method ``se / (2 sqrt(risk))``.
    """
    zc = float(norm.ppf(1 - step.alpha / 2))
    rec = {
        "N": step.N, "B": step.B, "n_effective": step.n_effective, "regime": step.regime,
        "risk": step.e_cv, "se": step.learner_se, "ci_half_width": zc * step.learner_se,
        "risk_rmse": None, "se_rmse": None, "ci_half_width_rmse": None,
        "e_rule": step.e_rule, "diff": step.diff, "se_diff": step.se,
        "T_stat": _finite(step.T_stat), "LB": step.LB, "rejected": step.rejected,
        "executed": executed, "degenerate": step.degenerate, "clipped": step.clipped,
    }
    if loss_kind == "squared" and step.e_cv >= 0:
        r = RiskEstimate(max(step.e_cv, 0.0), step.learner_se, step.n_effective).to_rmse()
        rec.update(risk_rmse=r.value, se_rmse=r.se, ci_half_width_rmse=zc * r.se)
    return rec


def curve_records(result: SequentialResult, loss_kind="squared"):
    steps = result.curve if result.curve is not None else result.steps
    n_exec = len(result.steps)
    return [step_record(s, loss_kind, executed=i < n_exec) for i, s in enumerate(steps)]


def records_to_csv(records, fields=CURVE_FIELDS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for rec in records:
        w.writerow({k: ("" if rec.get(k) is None else rec.get(k)) for k in fields})
    return buf.getvalue()


def format_rule_error(value, loss_kind="squared"):
    """Displayed fixed-rule error: RMSE for squared loss, error rate otherwise."""
    shown = math.sqrt(value) if loss_kind == "squared" else value
    return f"{shown:.2f}"


def render_ci(N_hat):
    return f"[{int(N_hat)}, ∞)"


def render_ci_row(label, N_hat):
    """``render_ci_row("Lasso", 20) == "Lasso  [20, ∞)"``."""
    return f"{label}  {render_ci(N_hat)}"


def render_table_block(outcome, rule_error_text, rows):
    """Outcome / fixed-rule error / algorithm / one-sided CI block.

    ``rows`` holds ``(algorithm_label, N_hat)`` pairs; the outcome and
    error appear on the first row only.
    """
    header = ("Outcome", "LLM Error", "Algorithm", "One-Sided CI")
    body = []
    for i, (label, N_hat) in enumerate(rows):
        body.append((outcome if i == 0 else "", rule_error_text if i == 0 else "", label, render_ci(N_hat)))
    table = [header] + body
    widths = [max(len(r[j]) for r in table) for j in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in table]
    return "\n".join(lines) + "\n"


def summary_text(result: SequentialResult, outcome, loss_kind, rule_error, algorithm):
    """Human summary: table block, fixed-rule error line and the ESS statement."""
    err = format_rule_error(rule_error, loss_kind)
    parts = [
        render_table_block(outcome, err, [(algorithm, result.N_hat)]),
        f"LLM Error {err}\n",
        result.summary() + "\n",
    ]
    return "".join(parts)


def emit_curve_report(steps, fmt="json", loss_kind="squared"):
    """Serialize per-N step records as ``"json"`` or ``"csv"`` text."""
    steps = list(steps)
    if not steps:
        raise InvalidInputError("curve report needs at least one step")
    recs = [step_record(s, loss_kind) for s in steps]
    if fmt == "csv":
        return records_to_csv(recs)
    if fmt == "json":
        return json.dumps(recs, indent=2, sort_keys=True)
    raise InvalidInputError(f"unknown report format {fmt!r}")
