import os
from pathlib import Path
from typing import Literal, Optional

from dotenv import load_dotenv, dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.ct import limited_angles
from app.exceptions import ConfigError

# Load .env file from project root
load_dotenv()

Config = {
    "MASKRECON_LOG_LEVEL": os.getenv('MASKRECON_LOG_LEVEL', 'INFO').strip().upper(),

    # Run ledger
    "MASKRECON_DATABASE_URL": os.getenv('MASKRECON_DATABASE_URL', 'sqlite:///maskrecon_runs.db'),
    "MASKRECON_RECORD_RUNS": os.getenv('MASKRECON_RECORD_RUNS', 'false').lower() in ('1', 'true', 'yes'),

    # Experiment defaults
    "MASKRECON_OUTPUT_DIR": os.getenv('MASKRECON_OUTPUT_DIR', 'out'),
    "MASKRECON_SEED": int(os.getenv('MASKRECON_SEED', '0')),
}


def get(key: str, default=None):
    return Config.get(key, default)


class ExperimentConfig(BaseModel):
    """
    Flat experiment description. Every key of a ``key = value`` config file
    maps onto one field; nested solver/hull/wavelet settings are assembled
    from these by the modules that need them.
    """
    model_config = ConfigDict(extra="forbid")

    n: int = 64
    phantom: Literal["modified", "original"] = "modified"
    phantom_oversample: int = 4

    # acquisition
    angle_spacing_deg: float = 1.0
    missing_span_deg: float = 25.0
    missing_start_deg: Optional[float] = None
    detectors: Optional[int] = None
    freq_mode: bool = True
    hull_angles: int = 180

    # sparsifying transform
    wavelet: Literal["haar", "daubechies6"] = "haar"
    levels: Optional[int] = None

    # mask
    mask: Literal["full", "hull", "file"] = "hull"
    mask_file: Optional[Path] = None
    hull_sinogram: Optional[Path] = None
    hull_fraction: float = 1e-3
    hull_absolute: Optional[float] = None
    hull_margin_bins: int = 1
    psnr_mask: Literal["hull", "recon", "full"] = "hull"

    # solver
    method: Literal["fbp", "iht", "dore", "ista"] = "dore"
    sparsity: Optional[int] = None
    sparsity_fraction: float = 0.13
    epsilon: float = 1e-14
    max_iters: int = 100_000
    tau: float = 1e-5
    tau_rule: Literal["absolute", "relative"] = "relative"
    step_policy: Literal["adaptive", "constant"] = "adaptive"
    rho_safety: float = 1.01

    # inputs / outputs
    sinogram: Optional[Path] = None
    truth: Optional[Path] = None
    image: Optional[Path] = None
    out: Path = Field(default_factory=lambda: Path(get("MASKRECON_OUTPUT_DIR")))
    seed: int = Field(default_factory=lambda: get("MASKRECON_SEED"))

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value < 2 or value & (value - 1):
            raise ValueError(f"n must be a power of two, got {value}")
        return value

    @field_validator("missing_span_deg")
    @classmethod
    def _missing_span(cls, value: float) -> float:
        if not 0.0 <= value < 180.0:
            raise ValueError("missing span must lie in [0, 180) degrees")
        return value

    @field_validator("epsilon", "angle_spacing_deg", "rho_safety")
    @classmethod
    def _positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("must be positive")
        return value

    @field_validator("tau")
    @classmethod
    def _nonnegative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("must be nonnegative")
        return value

    @model_validator(mode="after")
    def _mask_file_present(self):
        if self.mask == "file" and self.mask_file is None:
            raise ValueError("mask = file requires mask_file")
        if self.sparsity is not None and self.sparsity < 1:
            raise ValueError("sparsity must be >= 1")
        return self

    @model_validator(mode="after")
    def _geometry_consistent(self):
        if self.hull_angles < 1:
            raise ValueError("hull_angles must be >= 1")
        if self.hull_margin_bins < 0:
            raise ValueError("hull_margin_bins must be >= 0")
        if self.phantom_oversample < 1:
            raise ValueError("phantom_oversample must be >= 1")
        if self.detectors is not None and self.detectors < 2:
            raise ValueError("detectors must be >= 2")
        max_levels = self.n.bit_length() - 1
        if self.levels is not None and not 1 <= self.levels <= max_levels:
            raise ValueError(f"levels must lie in [1, {max_levels}] for n = {self.n}, got {self.levels}")
        if not 0.0 < self.sparsity_fraction <= 1.0:
            raise ValueError("sparsity_fraction must lie in (0, 1]")
        if limited_angles(self.angle_spacing_deg, self.missing_span_deg, self.missing_start_deg).size == 0:
            raise ValueError("the missing wedge removes every projection angle")
        return self

    @property
    def detector_count(self) -> int:
        return self.detectors if self.detectors is not None else 2 * self.n - 1

    def require_files(self, *fields: str) -> None:
        """Raise ConfigError if any of the named path fields points nowhere."""
        for name in fields:
            path = getattr(self, name)
            if path is None:
                raise ConfigError(f"'{name}' is required for this command")
            if not Path(path).exists():
                raise ConfigError(f"'{name}' refers to a missing file: {path}")


def load_experiment_config(path: Optional[Path] = None, **overrides) -> ExperimentConfig:
    """Read a flat ``key = value`` file and apply CLI overrides on top of it."""
    values = {}
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        values.update({k.strip().lower(): v for k, v in dotenv_values(path).items() if v is not None})
    values.update({k: v for k, v in overrides.items() if v is not None})
    # blank values in the file mean "use the default"
    values = {k: v for k, v in values.items() if v != ""}
    try:
        return ExperimentConfig(**values)
    except ValidationError as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc
