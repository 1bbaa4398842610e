import json
import math

import pytest

from posi_bounds.config import RunConfig, ScanGrid, build_run_config
from posi_bounds.errors import ConfigError, DesignFileError


def test_defaults_and_echo():
    config = build_run_config(ensemble="identity:p=4", s=2)
    assert config.r == math.inf
    assert config.alpha == 0.05
    echo = config.resolved()
    assert echo["r"] == "inf"
    assert "workers" not in echo
    assert echo["ensemble"] == "identity:p=4"


def test_r_parsing():
    assert build_run_config(r="12").r == 12.0
    assert build_run_config(r="inf").resolved()["r"] == "inf"
    with pytest.raises(ConfigError):
        build_run_config(r="2.5")
    with pytest.raises(ConfigError):
        build_run_config(r="0")


@pytest.mark.parametrize(
    "values",
    [
        {"alpha": 1.5},
        {"alpha": 0.0},
        {"reps": 0},
        {"workers": 0},
        {"grid_size": 50},
        {"seed": -1},
        {"format": "xml"},
        {"design": "x.csv", "ensemble": "identity:p=3"},
        {"s": 2, "family_file": "f.txt"},
        {"unknown": 1},
    ],
)
def test_invalid_configs(values):
    with pytest.raises(ConfigError):
        build_run_config(**values)


def test_run_config_is_frozen():
    config = RunConfig()
    with pytest.raises(Exception):
        config.alpha = 0.1


def test_sources_are_required():
    config = build_run_config()
    with pytest.raises(ConfigError):
        config.load_design()
    with pytest.raises(ConfigError):
        config.load_family(4)


def test_loads_design_and_family(tmp_path):
    config = build_run_config(ensemble="equicorr:p=6,k=3,c=0.2", s=2)
    X = config.load_design()
    assert X.p == 6
    assert config.load_family(X.p).pair_count() == 6 + 2 * 15

    family_file = tmp_path / "family.txt"
    family_file.write_text("1,2\n3\n")
    family = build_run_config(family_file=str(family_file)).load_family(6)
    assert family.members == ((2,), (0, 1))


def test_scan_grid_cells():
    grid = ScanGrid(p=[50, 100], s=[3], delta=[0.1, 0.2], alpha=[0.05], r=["inf", 20])
    cells = list(grid.cells())
    assert len(cells) == 8
    assert cells[0] == {"p": 50, "n": 50, "s": 3, "delta": 0.1, "alpha": 0.05, "r": math.inf}
    assert cells[1]["r"] == 20.0
    assert cells[-1]["p"] == 100


def test_scan_grid_ensembles_and_rates():
    grid = ScanGrid(ensemble=["identity:p=5", "gauss:n=20,p=5,seed=1"], s=[1, 2])
    assert [cell["ensemble"] for cell in grid.cells()] == ["identity:p=5"] * 2 + ["gauss:n=20,p=5,seed=1"] * 2

    rates = list(ScanGrid(mode="rates", p=[64, 4096]).cells())
    assert rates[0]["s"] == 4
    assert rates[1]["s"] == 16
    assert rates[1]["delta"] == pytest.approx(0.125)


@pytest.mark.parametrize(
    "payload",
    [
        {"s": [2], "alpha": [0.05]},
        {"p": [10], "s": [2], "delta": [0.1], "ensemble": ["identity:p=10"]},
        {"p": [10], "s": [2], "delta": [0.1], "reps": 10},
        {"p": [10], "s": [2], "delta": [0.1], "r": ["1.5"]},
        {"p": [10], "s": [2], "delta": [0.1], "seed": -1},
        {"p": [10], "s": [2], "delta": [0.1], "seed": 2**64},
        {"mode": "rates"},
    ],
)
def test_scan_grid_validation(tmp_path, payload):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigError):
        ScanGrid.from_file(path)


def test_scan_grid_file_errors(tmp_path):
    with pytest.raises(DesignFileError):
        ScanGrid.from_file(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ScanGrid.from_file(bad)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ScanGrid.from_file(listed)
