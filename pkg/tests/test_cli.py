import csv
import json

import pytest

from cli import RunConfig, build_parser, parse_ladder, run
from errors import UsageError
from results import read_json

FLAT = '{"family": "flat"}'
SCHWARZSCHILD = '{"family": "schwarzschild", "m": 1.0}'


def read_csv(path):
    lines = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def test_parse_ladder():
    assert parse_ladder("50:800:x2") == [50.0, 100.0, 200.0, 400.0, 800.0]
    assert parse_ladder("10, 20,40") == [10.0, 20.0, 40.0]
    for bad in ("50:800:2", "0:10:x2", "a,b", "10:5:x2"):
        with pytest.raises(UsageError):
            parse_ladder(bad)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(command="mass", radii=[20.0, 10.0])
    with pytest.raises(ValueError):
        RunConfig(command="mass", out="xml")


def test_parser_knows_every_command():
    parser = build_parser()
    args = parser.parse_args(["deficit", "--metric", FLAT, "--radii", "10,20", "--single-term"])
    assert args.command == "deficit"
    assert args.single_term
    assert args.kinds == "J32,J31,J21"


def test_mass_on_flat_space(tmp_path):
    out = tmp_path / "mass.csv"
    assert run(["mass", "--metric", FLAT, "--radii", "10,20", "--output", str(out)]) == 0
    rows = read_csv(out)
    assert [float(row["mass"]) for row in rows] == [0.0, 0.0]
    assert rows[0]["limit"] == ""
    header = out.read_text().splitlines()[1]
    assert json.loads(header.removeprefix("# run_config: "))["radii"] == [10.0, 20.0]


def test_mass_json_with_extrapolation(tmp_path):
    out = tmp_path / "mass.json"
    code = run(["mass", "-m", SCHWARZSCHILD, "-r", "100:1600:x2", "--out", "json", "-o", str(out)])
    assert code == 0
    document = read_json(out)
    assert document["run_config"]["command"] == "mass"
    assert document["result"]["fit"]["limit"] == pytest.approx(1.0, abs=1e-6)
    assert document["result"]["fit"]["two_term"]


def test_verify_exit_codes(tmp_path):
    out = tmp_path / "verify.csv"
    assert run(["verify", "--set", "h-expansion", "-m", FLAT, "-r", "25:400:x2", "-o", str(out)]) == 0
    assert run(["verify", "--set", "local-sphere-typo", "-m", FLAT, "-r", "25,50"]) == 1
    assert run(["verify", "--set", "small-sphere", "-r", "1,2", "-o", str(out)]) == 0


def test_usage_errors_exit_one(tmp_path):
    assert run([]) == 1
    assert run(["bogus"]) == 1
    assert run(["mass", "--metric", '{"family": "flat", "m": 2}', "--radii", "10,20"]) == 1
    assert run(["mass", "--metric", FLAT, "--radii", "20,10"]) == 1
    assert run(["mass", "--metric", FLAT, "--radii", "10,20", "--out", "xml"]) == 1
    assert run(["deficit", "--metric", SCHWARZSCHILD, "--kinds", "RelJ32", "--radii", "50,100"]) == 1


def test_numerical_failure_exits_two(tmp_path):
    assert run(["foliate", "--metric", SCHWARZSCHILD, "--radii", "40,80", "--max-iter-typo"]) == 1
    shifted = '{"family": "schwarzschild", "m": 1.0, "c": [1.0, 2.0, 0.0]}'
    code = run(["foliate", "--metric", shifted, "--radii", "40", "--tolerance", "1e-30",
                "-o", str(tmp_path / "leaves.csv")])
    assert code == 2


def test_foliate_writes_leaf_files(tmp_path):
    leaf_dir = tmp_path / "leaves"
    code = run(["foliate", "--metric", SCHWARZSCHILD, "--radii", "40,80", "--leaf-dir", str(leaf_dir),
                "-o", str(tmp_path / "foliate.csv")])
    assert code == 0
    assert sorted(p.name for p in leaf_dir.iterdir()) == ["leaf_40.json", "leaf_80.json"]
    leaf = json.loads((leaf_dir / "leaf_40.json").read_text())["result"]
    assert leaf["metadata"]["condition"] == "cmc"


def test_spectrum_on_coordinate_spheres(tmp_path):
    out = tmp_path / "spectrum.csv"
    code = run(["spectrum", "--metric", FLAT, "--operator", "cmc", "--coordinate", "--k", "4",
                "--l-max", "4", "--radii", "30,60", "-o", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert float(rows[0]["lambda0"]) == pytest.approx(-2.0 / 900.0, rel=1e-10)
    assert float(rows[1]["constrained"]) == pytest.approx(0.0, abs=1e-12)


def test_local_coefficients(tmp_path):
    out = tmp_path / "local.csv"
    assert run(["local", "--models", "S3", "-o", str(out)]) == 0
    rows = read_csv(out)
    assert [row["kind"] for row in rows] == ["32", "31", "21"]
    assert float(rows[2]["coefficient"]) == pytest.approx(1.0 / 6.0, rel=1e-4)
