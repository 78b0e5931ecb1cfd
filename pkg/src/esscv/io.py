"""Delimited-text ingestion, prediction joins and prompt rendering.

Types come from the declared schema only; nothing is inferred.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import string
import warnings
from pathlib import Path

import numpy as np

from esscv.core import (
    CATEGORICAL,
    ID,
    NUMERIC,
    OUTCOME_SCALE_ROLES,
    PREDICTION,
    Dataset,
    Schema,
    _numeric_role,
)
from esscv.errors import ConfigError, IngestionError, InvalidInputError

log = logging.getLogger(__name__)


def load_schema(spec) -> Schema:
    """Schema from a mapping, an inline JSON string, or a JSON file path."""
    if isinstance(spec, Schema):
        return spec
    if isinstance(spec, dict):
        return Schema.from_dict(spec)
    text = str(spec)
    try:
        if text.lstrip().startswith("{"):
            return Schema.from_dict(json.loads(text))
        with open(text, encoding="utf-8") as fh:
            return Schema.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read schema {text!r}: {exc}") from None


def _read_rows(path, delimiter):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}", path=str(path)) from None
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{path} is not valid UTF-8: {exc}", path=str(path)) from None
    rows = [r for r in rows if r]
    if not rows:
        raise IngestionError(f"{path} is empty", path=str(path))
    return rows[0], rows[1:]


def ingest(path, schema, delimiter=",") -> Dataset:
    """Read a delimited file with a header row into a typed :class:`Dataset`.

    Columns not named in the schema are ignored. File line numbers in
    errors count the header as line 1.
    """
    schema = load_schema(schema)
    header, body = _read_rows(path, delimiter)
    header = [h.strip() for h in header]
    if not body:
        raise IngestionError(f"{path} has a header but no data rows", path=str(path))
    pos = {h: j for j, h in enumerate(header)}
    missing = [c for c in schema.roles if c not in pos]
    if missing:
        raise IngestionError(f"columns {missing} declared in the schema are missing from {path}",
                             columns=missing, path=str(path))
    cols = {}
    for name, role in schema.roles.items():
        j = pos[name]
        numeric = _numeric_role(role, schema.outcome_type)
        values = []
        for i, row in enumerate(body):
            line = i + 2
            if j >= len(row):
                raise IngestionError(f"line {line}: row has no value for column {name!r}",
                                     line=line, column=name)
            cell = row[j].strip()
            if cell == "":
                raise IngestionError(f"line {line}, column {name!r}: missing value", line=line, column=name)
            if numeric:
                try:
                    v = float(cell)
                except ValueError:
                    raise IngestionError(f"line {line}, column {name!r}: cannot parse {cell!r} as a number",
                                         line=line, column=name, value=cell) from None
                if not math.isfinite(v):
                    raise IngestionError(f"line {line}, column {name!r}: non-finite value {cell!r}",
                                         line=line, column=name)
                values.append(v)
            else:
                values.append(cell)
        cols[name] = np.array(values, dtype=float if numeric else object)
    data = Dataset(cols, schema)
    log.info("ingested %s: n=%d", path, data.n)
    for name, role in schema.roles.items():
        v = data[name]
        if v.dtype.kind == "f":
            log.info("  %s (%s): mean=%.4g sd=%.4g min=%.4g max=%.4g", name, role, v.mean(), v.std(),
                     v.min(), v.max())
        else:
            log.info("  %s (%s): %d distinct values", name, role, len(set(v.tolist())))
    return data


def write_table(data: Dataset, path, delimiter=","):
    names = list(data.schema.roles)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(names)
        for i in range(data.n):
            w.writerow([_render_value(data[c][i]) for c in names])


def ingest_predictions(data: Dataset, path, delimiter=",", column=None) -> Dataset:
    """Join an ``id<delim>value`` file onto ``data`` as the fixed-rule prediction.

    A first line whose id field is ``id`` is treated as a header. Every row
    id must appear exactly once.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}", path=str(path)) from None
    if lines and lines[0][0].strip().lower() == "id":
        lines = lines[1:]
    ids = list(data.ids)
    index = {k: i for i, k in enumerate(ids)}
    values = [None] * data.n
    dupes, unknown = [], []
    for ln, row in enumerate(lines, start=1):
        if len(row) < 2:
            raise IngestionError(f"predictions line {ln}: expected id{delimiter}value", line=ln)
        key, val = row[0].strip(), row[1].strip()
        if key not in index:
            unknown.append(key)
            continue
        if values[index[key]] is not None:
            dupes.append(key)
        values[index[key]] = val
    if dupes:
        raise IngestionError(f"duplicate prediction ids: {sorted(set(dupes))[:20]}", ids=sorted(set(dupes))[:100])
    if unknown:
        raise IngestionError(f"prediction ids not in the data: {unknown[:20]}", ids=unknown[:100])
    missing = [ids[i] for i, v in enumerate(values) if v is None or v == ""]
    if missing:
        raise IngestionError(f"missing predictions for ids: {missing[:20]}", ids=missing[:100])
    if data.schema.outcome_type == "numeric":
        parsed = []
        for k, v in zip(ids, values):
            try:
                parsed.append(float(v))
            except ValueError:
                raise IngestionError(f"prediction for id {k!r} is not numeric: {v!r}", id=k) from None
        arr = np.array(parsed)
    else:
        arr = np.array(values, dtype=object)
    name = column or data.schema.column(PREDICTION) or "fixed_rule_prediction"
    return data.with_column(name, arr, PREDICTION)


def _render_value(v):
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def template_fields(template):
    return [f for _, f, _, _ in string.Formatter().parse(template) if f is not None]


def render_prompts(data: Dataset, template: str):
    """Fill ``{column}`` placeholders per row; returns ``(ids, prompts)``.

    Outcome-scale columns are never renderable (target leakage guard).
    """
    if template == "":
        warnings.warn("empty prompt template: every prompt is empty", stacklevel=2)
        return list(data.ids), [""] * data.n
    fields = template_fields(template)
    for f in fields:
        if f not in data.schema.roles:
            raise InvalidInputError(f"unresolved placeholder {{{f}}}: no such column", placeholder=f)
        role = data.schema.roles[f]
        if role in OUTCOME_SCALE_ROLES or role not in (ID, NUMERIC, CATEGORICAL):
            raise InvalidInputError(f"placeholder {{{f}}} refers to the {role} column; "
                                    "only covariates and the id may appear in prompts", placeholder=f)
    prompts = []
    for i in range(data.n):
        values = {f: _render_value(data[f][i]) for f in fields}
        prompts.append(template.format(**values))
    return list(data.ids), prompts


def _escape(text):
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


_UNESCAPE = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def _unescape(text):
    out, i = [], 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text) and text[i + 1] in _UNESCAPE:
            out.append(_UNESCAPE[text[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def write_prompts(path, ids, prompts):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, p in zip(ids, prompts):
            fh.write(f"{_escape(str(k))}\t{_escape(p)}\n")


def read_prompts(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            k, _, text = line.rstrip("\n").partition("\t")
            out.append((k, _unescape(text)))
    return out


def dump_json(obj, path=None) -> str:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v

