import json
from fractions import Fraction

import pytest
from mpmath import mp

from app.services.experiments import SweepResult, SweepRow
from app.services.output import envelope, render, to_plain


def test_to_plain_values():
    assert to_plain(Fraction(3, 8), 10) == "3/8"
    with mp.workprec(80):
        assert to_plain(mp.mpf(1) / 3, 10) == "0.3333333333"
    assert to_plain({"a": (1, None, True)}, 10) == {"a": [1, None, True]}
    assert to_plain(mp.matrix([[1, 2]]), 5) == [["1.0", "2.0"]]


def test_envelope_key_order():
    doc = envelope("threshold", {"k": 12}, {"d_star": mp.mpf(2)}, bits=112)
    assert list(doc) == ["schema_id", "tool", "params", "precision", "result"]
    assert doc["schema_id"] == "naesat.threshold.v1"
    assert doc["precision"]["bits"] == 112
    exact = envelope("solve", {}, {"sat": True}, bits=None)
    assert exact["precision"]["arithmetic"] == "exact"


def test_json_round_trip():
    doc = envelope("solve", {"inp": "x.naesat"}, {"sat": False, "Z": 0}, bits=None)
    assert json.loads(render(doc, "json")) == doc


def test_csv_with_rows():
    result = SweepResult(seed=1, rows=[SweepRow(k=3, d=2, n=6, trials=4, sat=3, budget_exhausted=0, sat_fraction=0.75)])
    doc = envelope("sweep", {}, result, bits=None)
    text = render(doc, "csv")
    lines = text.splitlines()
    assert lines[0].startswith("k,d,n,trials,sat,budget_exhausted,sat_fraction")
    assert "wall_time" not in lines[0]
    assert lines[1].startswith("3,2,6,4,3,0,0.75")


def test_csv_and_text_key_value():
    doc = envelope("solve", {}, {"sat": True, "Z": 4}, bits=None)
    assert render(doc, "csv") == "key,value\nsat,True\nZ,4\n"
    text = render(doc, "text")
    assert text.startswith("# naesat.solve.v1 v")
    assert "Z = 4" in text


def test_unknown_format():
    with pytest.raises(ValueError):
        render(envelope("solve", {}, {}, bits=None), "xml")
