import json

import numpy as np

from geope.io import csv_text, format_value, json_text, parse_csv, records


def test_format_value():
    assert format_value(3) == "3"
    assert format_value(np.int64(-2)) == "-2"
    assert format_value(True) == "1"
    assert float(format_value(0.1)) == 0.1
    x = float(np.nextafter(1.0, 2.0))
    assert float(format_value(x)) == x


def test_csv_roundtrip():
    text = csv_text(("a", "b", "c"), [(1, 0.25, "x"), (2, 1 / 3, "y")])
    assert text.splitlines()[0] == "a,b,c"
    rows = parse_csv(text)
    assert rows[1] == {"a": 2, "b": 1 / 3, "c": "y"}


def test_json_mirror():
    header = ("a", "b")
    rows = [(1, 0.5), (2, np.float64(1.5))]
    doc = json.loads(json_text({"seed": np.int64(3)}, table=records(header, rows)))
    assert doc == {"meta": {"seed": 3}, "table": [{"a": 1, "b": 0.5}, {"a": 2, "b": 1.5}]}
