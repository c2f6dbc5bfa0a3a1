from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET

import numpy as np

from singconn.reports import SCHEMA, envelope, jsonable, loglog_svg, summary_table, write_json


def test_jsonable_handles_numpy_and_non_finite():
    doc = jsonable({"a": np.float64(1.5), "b": np.int32(3), "c": np.array([1, 2]), "d": 1 + 2j,
                    "e": complex(4, 0), "f": math.nan, "g": -math.inf, "h": np.bool_(True), 5: (1.0,)})
    assert doc == {"a": 1.5, "b": 3, "c": [1, 2], "d": {"re": 1.0, "im": 2.0}, "e": 4.0, "f": None,
                   "g": "-inf", "h": True, "5": [1.0]}
    json.dumps(doc, allow_nan=False)


def test_envelope_carries_schema_and_digest():
    env = envelope("verify-lp", "abc", {"passed": np.bool_(False)})
    assert env["schema"] == SCHEMA and env["command"] == "verify-lp"
    assert env["config_sha256"] == "abc" and env["passed"] is False
    assert "version" in env


def test_write_json_is_sorted_and_stable(tmp_path):
    p, q = tmp_path / "a.json", tmp_path / "b.json"
    write_json(p, {"z": 1, "a": {"y": 2, "b": 3}})
    write_json(q, {"a": {"b": 3, "y": 2}, "z": 1})
    assert p.read_bytes() == q.read_bytes()
    assert list(json.loads(p.read_text())) == ["a", "z"]


def test_summary_table_alignment():
    txt = summary_table([{"name": "z", "res": 1e-5, "ok": True}, {"name": "zbar", "res": 2.0, "ok": False}],
                        ["name", "res", "ok"])
    lines = txt.splitlines()
    assert len(lines) == 4
    assert "pass" in lines[2] and "FAIL" in lines[3]
    assert len({line.index("res") if i == 0 else None for i, line in enumerate(lines)} - {None}) == 1


def test_loglog_svg_is_well_formed():
    k = np.arange(1, 6)
    svg = loglog_svg({"bump": (k, 1.0 / k), "a<b": (k, 0 * k)}, title="gaps & slopes")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 1
    ET.fromstring(loglog_svg({}))
