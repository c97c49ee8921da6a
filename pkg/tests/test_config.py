from pathlib import Path

import pytest

from flockeuler.harness.config import load_config, parse_config, parse_kernel_table
from flockeuler.model import ConfigurationError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults():
    cfg = parse_config("")
    assert cfg.grid.m == 64 and cfg.grid.dim == 2
    assert cfg.preset == "gaussian-bump-flock"
    assert cfg.sweep.epsilons == (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
    assert cfg.integrator.n_samples == 50


def test_full_preset_parses():
    cfg = load_config(CONFIGS / "bump_flock.ini")
    assert cfg.model.attraction.kind == "cosine" and cfg.model.attraction.amplitude == 0.5
    assert cfg.model.epsilon == 0.01
    assert cfg.integrator.dt_max == 0.0025


def test_table_parse():
    t = parse_kernel_table("cos(0,0): 0.2; cos(1,0): 0.5 ;cos(0,1):-1e-1", 2)
    assert t == (((0, 0), 0.2), ((1, 0), 0.5), ((0, 1), -0.1))
    assert parse_kernel_table("cos(1,0): 1; sin(1,0): 0", 2) == (((1, 0), 1.0),)


@pytest.mark.parametrize("text", ["sin(1,0): 0.3", "cos(1): 1", "cos(1,0) 1", "cos(a,0): 1"])
def test_table_errors(text):
    with pytest.raises(ConfigurationError):
        parse_kernel_table(text, 2)


@pytest.mark.parametrize("text", [
    "[grid]\nm = 64\nsize = 3\n",
    "[solver]\nx = 1\n",
    "[grid]\nm = 63\n",
    "[grid]\nm = many\n",
    "[model]\ngamma = 1.0\n",
    "[model]\nfriction = viscous\n",
    "[model]\nforcing = random\n",
    "[integrator]\ncfl = 1.5\n",
    "[sweep]\nepsilons = 1e-3, 1e-2\n",
    "[output]\nsnapshots = sometimes\n",
    "no section header\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.ini")
