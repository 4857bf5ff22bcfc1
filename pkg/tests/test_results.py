import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from config import __version__
from results import read_json, to_plain, write_csv, write_json


class Color(str, Enum):
    RED = "red"


@dataclass
class Sample:
    radius: float
    values: np.ndarray


def test_to_plain_converts_nested_values():
    plain = to_plain({"a": np.float64(1.5), "b": [np.arange(2)], "c": Color.RED, "d": Sample(2.0, np.ones(2))})
    assert plain == {"a": 1.5, "b": [[0, 1]], "c": "red", "d": {"radius": 2.0, "values": [1.0, 1.0]}}
    json.dumps(plain)


def test_csv_carries_version_and_run_config(tmp_path):
    path = tmp_path / "out" / "mass.csv"
    write_csv(path, ["r", "mass"], [[10.0, 0.1 + 0.2], [20.0, None]], {"command": "mass", "radii": [10.0, 20.0]})
    lines = path.read_text().splitlines()
    assert lines[0] == f"# asymflat {__version__}"
    assert json.loads(lines[1].removeprefix("# run_config: ")) == {"command": "mass", "radii": [10.0, 20.0]}
    assert lines[2] == "r,mass"
    assert lines[3] == "10.0,0.30000000000000004"
    assert lines[4] == "20.0,"


def test_json_document_is_reproducible(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    payload = {"values": np.array([1.0, 2.0]), "limit": 3.0}
    write_json(first, payload, {"command": "mass"})
    write_json(second, payload, {"command": "mass"})
    assert first.read_bytes() == second.read_bytes()
    document = read_json(first)
    assert document["version"] == __version__
    assert document["run_config"] == {"command": "mass"}
    assert document["result"] == {"values": [1.0, 2.0], "limit": 3.0}


def test_stdout_when_no_path(capsys):
    write_csv(None, ["x"], [[1]], {})
    assert capsys.readouterr().out.endswith("x\n1\n")
