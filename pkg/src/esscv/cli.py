"""Command line entry point.

Exit codes: 0 success, 1 usage/configuration, 2 data, 3 numeric failure.
Errors are printed to stderr as a JSON record (and written to
``<out>/error.json`` when an output directory is given).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import esscv
from esscv.cate import arm_specific_ess, cate_ess, transformed_dataset
from esscv.core import LossFunction
from esscv.errors import ConfigError, EssError
from esscv.inference import TrainingGrid, check_monotonicity, sequential_ess
from esscv.io import dump_json, ingest, ingest_predictions, render_prompts, write_prompts, write_table
from esscv.learners import FAMILIES, LearnerSpec, PreprocessOptions, TuningPolicy
from esscv.report import curve_records, format_rule_error, records_to_csv, summary_text
from esscv.risk import fixed_rule_risk
from esscv.variance import DEFAULT_THRESHOLD, normalize_mode

log = logging.getLogger("esscv")

ANALYSIS_COMMANDS = ("curve", "ess", "cate", "arm")


@dataclass
class RunConfig:
    """Resolved run configuration; persisted verbatim into every result file."""

    command: str
    data: str | None = None
    schema: object = None
    learner: str = "lasso"
    hyperparams: dict | None = None
    log_outcome: bool = False
    per_block_tuning: bool = False
    n_estimators: int = 300
    winsorize: list | None = field(default_factory=lambda: [0.01, 0.99])
    grid: str | None = None
    loss: str | None = None
    alpha: float = 0.05
    variance_mode: str = "diff"
    regime_threshold: int = DEFAULT_THRESHOLD
    seed: int = 0
    out: str | None = None
    delimiter: str = ","
    outcome_label: str | None = None
    arm: int = 1
    predictions: str | None = None
    template: str | None = None
    experiment: str | None = None
    R: int | None = None
    n: int | None = None
    workers: int = 1

    def validate(self):
        if self.command in ANALYSIS_COMMANDS + ("prompts", "join"):
            if not self.data:
                raise ConfigError("--data is required")
            if self.schema is None:
                raise ConfigError("--schema is required")
        if self.command in ANALYSIS_COMMANDS:
            if self.learner not in FAMILIES:
                raise ConfigError(f"unknown learner {self.learner!r}; choose from {sorted(FAMILIES)}")
            if not self.grid:
                raise ConfigError("--grid is required")
            TrainingGrid.parse(self.grid)
            if not 0 < self.alpha < 1:
                raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
            normalize_mode(self.variance_mode)
            if self.regime_threshold < 1:
                raise ConfigError("regime threshold must be >= 1")
            if self.loss not in (None, "squared", "zero_one"):
                raise ConfigError(f"unknown loss {self.loss!r}")
            if self.winsorize is not None and len(self.winsorize) != 2:
                raise ConfigError("winsorize needs two quantiles")
        if self.command == "prompts" and self.template is None:
            raise ConfigError("--template is required")
        if self.command == "join" and not self.predictions:
            raise ConfigError("--predictions is required")
        if self.command == "arm" and self.arm not in (0, 1):
            raise ConfigError("--arm must be 0 or 1")
        return self

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def learner_spec(self):
        pre = PreprocessOptions(winsorize_quantiles=None if self.winsorize is None else tuple(self.winsorize))
        return LearnerSpec(self.learner, preprocessing=pre,
                           tuning=TuningPolicy(per_N_subset=not self.per_block_tuning),
                           hyperparams=self.hyperparams, log_outcome=self.log_outcome,
                           n_estimators=self.n_estimators)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--config", help="JSON file with option defaults (flags override)")
    p.add_argument("--data")
    p.add_argument("--schema", help="schema JSON file or inline JSON")
    p.add_argument("--delimiter")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _analysis(p):
    p.add_argument("--learner", choices=sorted(FAMILIES))
    p.add_argument("--hyperparams", type=json.loads, help="fixed hyperparameters as JSON (skips tuning)")
    p.add_argument("--log-outcome", action="store_true", default=None)
    p.add_argument("--per-block-tuning", action="store_true", default=None)
    p.add_argument("--n-estimators", type=int)
    p.add_argument("--winsorize", help="'low,high' outcome quantiles for training, or 'none'")
    p.add_argument("--grid", help="'10,50,100', 'geom:a:b:k' or 'lin:a:b:step'")
    p.add_argument("--loss", choices=["squared", "zero_one"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--variance-mode", choices=["diff", "conservative"])
    p.add_argument("--regime-threshold", type=int)
    p.add_argument("--outcome-label", help="outcome name shown in the report")


def build_parser():
    parser = _Parser(prog="esscv", description="Equivalent sample size of a fixed prediction rule.")
    parser.add_argument("--version", action="version", version=f"esscv {esscv.__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("curve", "full error curve and report"), ("ess", "sequential test and one-sided CI"),
                        ("cate", "CATE ESS via the transformed outcome"), ("arm", "ESS within one treatment arm")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        _analysis(p)
        if name == "arm":
            p.add_argument("--arm", type=int, choices=[0, 1])
    p = sub.add_parser("simulate", help="Monte Carlo validation experiments")
    p.add_argument("experiment", choices=["coverage", "fwer", "clt", "variance", "cate"])
    p.add_argument("--config")
    p.add_argument("--R", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("prompts", help="render one prompt per row from a template")
    _common(p)
    p.add_argument("--template", help="template text, or @path to read it from a file")
    p = sub.add_parser("join", help="join an id,prediction file onto the data")
    _common(p)
    p.add_argument("--predictions")
    return parser


def resolve_config(args) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(base) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    vals = dict(base)
    for k, v in vars(args).items():
        if k in known and v is not None:
            vals[k] = v
    vals["command"] = args.command
    w = vals.get("winsorize")
    if isinstance(w, str):
        vals["winsorize"] = None if w.lower() == "none" else [float(x) for x in w.split(",")]
    if isinstance(vals.get("schema"), str) and vals["schema"].lstrip().startswith("{"):
        vals["schema"] = json.loads(vals["schema"])
    if isinstance(vals.get("template"), str) and vals["template"].startswith("@"):
        vals["template"] = Path(vals["template"][1:]).read_text(encoding="utf-8")
    try:
        cfg = RunConfig(**vals)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def _load(cfg: RunConfig):
    return ingest(cfg.data, cfg.schema, cfg.delimiter)


def _write_outputs(cfg, result_obj, csv_text=None, summary=None):
    if cfg.out is None:
        return
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(result_obj, out / "result.json")
    if csv_text is not None:
        (out / "curve.csv").write_text(csv_text, encoding="utf-8")
    if summary is not None:
        (out / "summary.txt").write_text(summary, encoding="utf-8")
    meta = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(), "argv": sys.argv[1:],
            "python": sys.version.split()[0]}
    dump_json(meta, out / "run_meta.json")


def _analysis_run(cfg: RunConfig):
    data = _load(cfg)
    spec = cfg.learner_spec()
    grid = TrainingGrid.parse(cfg.grid)
    curve = cfg.command == "curve"
    common = dict(variance_mode=cfg.variance_mode, seed=cfg.seed, regime_threshold=cfg.regime_threshold,
                  curve=curve)
    if cfg.command == "cate":
        loss = LossFunction(cfg.loss or "squared")
        result = cate_ess(data, spec, grid, cfg.alpha, loss, **common)
        eval_data = transformed_dataset(data)
        outcome = cfg.outcome_label or "CATE"
    elif cfg.command == "arm":
        from esscv.cate import arm_dataset
        loss = LossFunction(cfg.loss or ("squared" if data.schema.outcome_type == "numeric" else "zero_one"))
        result = arm_specific_ess(data, spec, grid, loss, cfg.alpha, cfg.arm, **common)
        eval_data = arm_dataset(data, cfg.arm)
        outcome = cfg.outcome_label or f"{data.schema.outcome} (T={cfg.arm})"
    else:
        loss = LossFunction(cfg.loss or ("squared" if data.schema.outcome_type == "numeric" else "zero_one"))
        result = sequential_ess(data, spec, grid, loss, cfg.alpha, **common)
        eval_data = data
        outcome = cfg.outcome_label or data.schema.outcome
    rule = fixed_rule_risk(eval_data, loss)
    records = curve_records(result, loss.kind)
    summary = summary_text(result, outcome, loss.kind, rule.value, spec.display_name)
    obj = {
        "tool": "esscv",
        "version": esscv.__version__,
        "config": cfg.to_dict(),
        "n": eval_data.n,
        "loss": loss.kind,
        "fixed_rule": {"risk": rule.value, "se": rule.se, "n": rule.n_eval,
                       "display": format_rule_error(rule.value, loss.kind),
                       "display_scale": "rmse" if loss.kind == "squared" else "error_rate"},
        "learner": {**spec.to_dict(), "display_name": spec.display_name},
        "sequential": {"N_hat": result.N_hat, "ci": [result.N_hat, float("inf")],
                       "exhausted": result.exhausted, "stop_index": result.stop_index,
                       "alpha": result.alpha, "steps_executed": len(result.steps)},
        "steps": records,
        "summary": summary,
    }
    if curve:
        obj["curve_view"] = {"N_hat_lower_bounds": result.N_hat_curve, "plugin": result.plugin}
        obj["monotonicity"] = [v.__dict__ for v in check_monotonicity(
            [(s.N, s.e_cv, s.learner_se) for s in result.curve])]
    _write_outputs(cfg, obj, records_to_csv(records), summary)
    sys.stdout.write(summary)
    return 0


def _simulate_run(cfg: RunConfig):
    from dataclasses import fields as dc_fields

    from esscv.simulate import preset, run_experiment
    accepted = {f.name for f in dc_fields(preset(cfg.experiment))}
    overrides = {k: getattr(cfg, k) for k in ("R", "n", "alpha", "seed", "workers")
                 if k in accepted and getattr(cfg, k) is not None}
    rep = run_experiment(cfg.experiment, **overrides)
    obj = {"tool": "esscv", "version": esscv.__version__, "config": cfg.to_dict(), "report": rep.as_dict()}
    _write_outputs(cfg, obj)
    status = "PASS" if rep.passed else "FAIL"
    line = (f"{rep.name}: estimate={rep.estimate:.4f} mc_se={rep.mc_se:.4f} "
            f"target={rep.target:g} R={rep.R} {status}\n")
    sys.stdout.write(line)
    return 0


def _prompts_run(cfg: RunConfig):
    data = _load(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ids, prompts = render_prompts(data, cfg.template)
    for w in caught:
        log.warning("%s", w.message)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_prompts(out / "prompts.tsv", ids, prompts)
    else:
        from esscv.io import _escape
        for k, p in zip(ids, prompts):
            sys.stdout.write(f"{_escape(k)}\t{_escape(p)}\n")
    return 0


def _join_run(cfg: RunConfig):
    data = _load(cfg)
    joined = ingest_predictions(data, cfg.predictions, cfg.delimiter)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_table(joined, out / "joined.csv", cfg.delimiter)
        dump_json(joined.schema.to_dict(), out / "schema.json")
    sys.stdout.write(f"joined {joined.n} predictions\n")
    return 0


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        if cfg.command == "simulate":
            return _simulate_run(cfg)
        if cfg.command == "prompts":
            return _prompts_run(cfg)
        if cfg.command == "join":
            return _join_run(cfg)
        return _analysis_run(cfg)
    except EssError as exc:
        return _fail(exc.record(), exc.exit_code, argv)
    except Exception as exc:  # noqa: BLE001 - surfaced as a numeric failure record
        return _fail({"error": "internal", "message": f"{type(exc).__name__}: {exc}", "details": {}}, 3, argv)


def _fail(record, code, argv):
    sys.stderr.write(json.dumps(record, sort_keys=True, default=str) + "\n")
    out = None
    args = list(sys.argv[1:] if argv is None else argv)
    if "--out" in args:
        i = args.index("--out")
        out = args[i + 1] if i + 1 < len(args) else None
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            dump_json(record, Path(out) / "error.json")
        except OSError:
            pass
    return code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
