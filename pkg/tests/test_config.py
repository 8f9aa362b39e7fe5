from pathlib import Path

import pytest

from app.config import ExperimentConfig, get, load_experiment_config
from app.exceptions import ConfigError


def test_defaults():
    config = ExperimentConfig()
    assert config.n == 64
    assert config.detector_count == 127
    assert config.method == "dore"
    assert config.mask == "hull"
    assert config.missing_span_deg == 25.0
    assert config.phantom_oversample == 4
    assert config.sparsity_fraction == 0.13
    assert config.out == Path(get("MASKRECON_OUTPUT_DIR"))


def test_file_values_and_overrides(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("N = 32\nmethod = iht\nsparsity = 50\nfreq_mode = false\ntruth =\n")
    config = load_experiment_config(path, method="ista", out=str(tmp_path))
    assert config.n == 32
    assert config.method == "ista"
    assert config.sparsity == 50
    assert config.freq_mode is False
    assert config.truth is None
    assert config.out == tmp_path


@pytest.mark.parametrize("line", ["n = 48", "missing_span_deg = 180", "epsilon = 0", "tau = -1",
                                  "mask = file", "sparsity = 0", "unknown_key = 1",
                                  "hull_angles = 0", "hull_margin_bins = -1", "detectors = 1",
                                  "phantom_oversample = 0", "sparsity_fraction = 0", "levels = 0",
                                  "n = 32\nlevels = 9", "missing_start_deg = 0\nmissing_span_deg = 179.5"])
def test_invalid_values_raise_config_error(tmp_path, line):
    path = tmp_path / "exp.cfg"
    path.write_text(line + "\n")
    with pytest.raises(ConfigError) as info:
        load_experiment_config(path)
    assert info.value.exit_code == 3


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / "absent.cfg")


def test_require_files(tmp_path):
    config = ExperimentConfig(sinogram=tmp_path / "missing.mrsino")
    with pytest.raises(ConfigError):
        config.require_files("sinogram")
    with pytest.raises(ConfigError):
        config.require_files("truth")


def test_levels_up_to_log2_n_are_accepted():
    assert ExperimentConfig(n=32, levels=5).levels == 5