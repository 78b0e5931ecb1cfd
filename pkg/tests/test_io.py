import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from esscv.core import Dataset, Schema
from esscv.errors import ConfigError, IngestionError, InvalidInputError
from esscv.io import (
    _escape,
    _unescape,
    dump_json,
    ingest,
    ingest_predictions,
    load_schema,
    read_prompts,
    render_prompts,
    write_prompts,
    write_table,
)

SCHEMA = {"roles": {"id": "id", "age": "covariate_numeric", "sex": "covariate_categorical",
                    "wage": "outcome"}, "outcome_type": "numeric"}
ROWS = "id,age,sex,wage\nr1,37,male,20.5\nr2,52,female,31\nr3,23,female,12.25\nr4,41,male,18\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_ingest_four_rows(tmp_path):
    d = ingest(write(tmp_path, "d.csv", ROWS), SCHEMA)
    assert d.n == 4
    assert d.y.tolist() == [20.5, 31.0, 12.25, 18.0]
    assert d["sex"].tolist() == ["male", "female", "female", "male"]
    assert list(d.ids) == ["r1", "r2", "r3", "r4"]


def test_ingest_missing_outcome_column(tmp_path):
    p = write(tmp_path, "d.csv", "id,age,sex\nr1,37,male\n")
    with pytest.raises(IngestionError, match="wage") as exc:
        ingest(p, SCHEMA)
    assert exc.value.details["columns"] == ["wage"]


def test_ingest_bad_cell_coordinates(tmp_path):
    p = write(tmp_path, "d.csv", ROWS.replace("52", "fifty"))
    with pytest.raises(IngestionError) as exc:
        ingest(p, SCHEMA)
    assert exc.value.details["line"] == 3
    assert exc.value.details["column"] == "age"
    p = write(tmp_path, "e.csv", ROWS.replace("12.25", ""))
    with pytest.raises(IngestionError, match="missing value"):
        ingest(p, SCHEMA)


def test_ingest_empty_files(tmp_path):
    with pytest.raises(IngestionError, match="empty"):
        ingest(write(tmp_path, "a.csv", ""), SCHEMA)
    with pytest.raises(IngestionError, match="no data rows"):
        ingest(write(tmp_path, "b.csv", "id,age,sex,wage\n"), SCHEMA)


def test_ingest_treatment_two_is_rejected(tmp_path):
    schema = {"roles": {"y": "outcome", "t": "treatment", "p": "propensity"}}
    p = write(tmp_path, "d.csv", "y,t,p\n1,0,0.5\n2,2,0.5\n")
    with pytest.raises(InvalidInputError, match="treatment"):
        ingest(p, schema)


def test_ingest_custom_delimiter(tmp_path):
    d = ingest(write(tmp_path, "d.tsv", ROWS.replace(",", "\t")), SCHEMA, delimiter="\t")
    assert d.n == 4


def test_load_schema_forms(tmp_path):
    p = write(tmp_path, "s.json", json.dumps(SCHEMA))
    assert load_schema(str(p)).roles == load_schema(SCHEMA).roles == load_schema(json.dumps(SCHEMA)).roles
    with pytest.raises(ConfigError):
        load_schema(str(tmp_path / "nope.json"))


def test_write_table_round_trip(tmp_path):
    d = ingest(write(tmp_path, "d.csv", ROWS), SCHEMA)
    write_table(d, tmp_path / "out.csv")
    assert (tmp_path / "out.csv").read_text() == ROWS


# ---------------------------------------------------------------- prediction joins

def test_join_complete(tmp_path):
    d = ingest(write(tmp_path, "d.csv", ROWS), SCHEMA)
    p = write(tmp_path, "p.csv", "id,prediction\nr3,10\nr1,20\nr2,30\nr4,15.5\n")
    j = ingest_predictions(d, p)
    assert j.prediction.tolist() == [20.0, 30.0, 10.0, 15.5]


@pytest.mark.parametrize("body,match", [
    ("r1,20\nr2,30\nr4,15\n", "missing predictions for ids: \\['r3'\\]"),
    ("r1,20\nr2,30\nr3,1\nr4,15\nr4,16\n", "duplicate"),
    ("r1,20\nr2,30\nr3,1\nr4,15\nr9,16\n", "not in the data"),
    ("r1,20\nr2,thirty\nr3,1\nr4,15\n", "not numeric"),
])
def test_join_errors(tmp_path, body, match):
    d = ingest(write(tmp_path, "d.csv", ROWS), SCHEMA)
    with pytest.raises(IngestionError, match=match):
        ingest_predictions(d, write(tmp_path, "p.csv", body))


def test_join_label_eight_is_a_distinct_class(tmp_path):
    schema = {"roles": {"id": "id", "age": "covariate_numeric", "tenure": "outcome"},
              "outcome_type": "categorical"}
    d = ingest(write(tmp_path, "d.csv", "id,age,tenure\na,30,1\nb,40,5\n"), schema)
    j = ingest_predictions(d, write(tmp_path, "p.csv", "a,8\nb,5\n"))
    assert j.prediction.tolist() == ["8", "5"]
    from esscv.core import ZERO_ONE
    from esscv.risk import fixed_rule_risk
    assert fixed_rule_risk(j, ZERO_ONE).value == 0.5


# ---------------------------------------------------------------- prompts

def test_render_prompt_example(tmp_path):
    d = ingest(write(tmp_path, "d.csv", ROWS), SCHEMA)
    ids, prompts = render_prompts(d, "You are a {age}-year-old {sex}. What is your hourly wage?")
    assert ids[0] == "r1"
    assert prompts[0] == "You are a 37-year-old male. What is your hourly wage?"


def test_render_prompt_empty_template(tmp_path):
    d = ingest(write(tmp_path, "d.csv", ROWS), SCHEMA)
    with pytest.warns(UserWarning, match="empty"):
        _, prompts = render_prompts(d, "")
    assert prompts == ["", "", "", ""]


def test_render_prompt_refuses_target_and_unknown(tmp_path):
    d = ingest(write(tmp_path, "d.csv", ROWS), SCHEMA)
    with pytest.raises(InvalidInputError, match="outcome"):
        render_prompts(d, "Your wage is {wage}")
    with pytest.raises(InvalidInputError, match="unresolved"):
        render_prompts(d, "You live in {state}")
    d2 = d.with_column("llm", np.zeros(4), "fixed_rule_prediction")
    with pytest.raises(InvalidInputError):
        render_prompts(d2, "{llm}")


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=40))
def test_escape_round_trip(text):
    assert _unescape(_escape(text)) == text
    assert "\n" not in _escape(text) and "\t" not in _escape(text)


def test_prompt_file_round_trip(tmp_path):
    write_prompts(tmp_path / "p.tsv", ["a", "b"], ["line one\nline\ttwo", "back\\slash"])
    assert read_prompts(tmp_path / "p.tsv") == [("a", "line one\nline\ttwo"), ("b", "back\\slash")]


def test_dump_json_is_canonical():
    text = dump_json({"b": np.float64(1.5), "a": [np.int64(2), math.inf, math.nan], "c": np.bool_(True)})
    assert text == ('{\n  "a": [\n    2,\n    "inf",\n    null\n  ],\n  "b": 1.5,\n  "c": true\n}\n')


def test_schema_dict_round_trip():
    s = Schema.from_dict(SCHEMA)
    assert Schema.from_dict(s.to_dict()) == s
    d = Dataset.from_arrays([1.0, 2.0])
    assert d.schema.outcome == "y"
