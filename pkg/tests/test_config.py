from pathlib import Path

import pytest
from pydantic import ValidationError

from config import AsymflatConfig, get_config, parallel_map, set_config
from errors import AsymflatError, NumericalFailure, UsageError


def test_defaults():
    config = AsymflatConfig()
    assert config.threads == 1
    assert config.l_max == 8
    assert config.l_quad == 24
    assert config.tolerance == 1e-10
    assert config.max_iterations == 200
    assert config.output_dir == Path("results")
    assert not config.verbose


def test_from_env_reads_prefixed_variables(monkeypatch, tmp_path):
    monkeypatch.setenv("ASYMFLAT_THREADS", "3")
    monkeypatch.setenv("ASYMFLAT_L_MAX", "6")
    monkeypatch.setenv("ASYMFLAT_L_QUAD", "16")
    monkeypatch.setenv("ASYMFLAT_TOLERANCE", "1e-8")
    monkeypatch.setenv("ASYMFLAT_MAX_ITER", "50")
    monkeypatch.setenv("ASYMFLAT_OUTPUT_DIR", str(tmp_path / "out"))
    monkeypatch.setenv("ASYMFLAT_VERBOSE", "TRUE")
    config = AsymflatConfig.from_env(tmp_path / "missing.env")
    assert config.threads == 3
    assert config.l_max == 6
    assert config.l_quad == 16
    assert config.tolerance == 1e-8
    assert config.max_iterations == 50
    assert config.output_dir == tmp_path / "out"
    assert config.verbose


def test_invalid_values_rejected():
    with pytest.raises(ValidationError):
        AsymflatConfig(threads=0)
    with pytest.raises(ValidationError):
        AsymflatConfig(l_quad=2)
    with pytest.raises(ValidationError):
        AsymflatConfig(tolerance=0.0)


def test_get_output_file_creates_directory(tmp_path):
    config = AsymflatConfig(output_dir=tmp_path / "nested" / "results")
    path = config.get_output_file("mass.csv")
    assert path.parent.is_dir()
    assert path.name == "mass.csv"


def test_global_config_roundtrip():
    config = AsymflatConfig(l_max=5)
    set_config(config)
    assert get_config() is config


@pytest.mark.parametrize("threads", [1, 4])
def test_parallel_map_keeps_order(threads):
    set_config(AsymflatConfig(threads=threads))
    assert parallel_map(lambda x: x * x, range(10)) == [x * x for x in range(10)]
    assert parallel_map(lambda x: x, []) == []


def test_error_hierarchy():
    failure = NumericalFailure("solve_leaf", "stalled", {"rho": 40.0})
    assert isinstance(failure, AsymflatError)
    assert isinstance(failure, RuntimeError)
    assert failure.stage == "solve_leaf"
    assert failure.detail == {"rho": 40.0}
    assert str(failure) == "[solve_leaf] stalled"
    assert isinstance(UsageError("bad"), ValueError)
    assert NumericalFailure("fit", "no data").detail == {}
