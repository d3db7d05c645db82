import configparser
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.errors import ConfigurationError

logger = logging.getLogger(__name__)


def _comma_floats(value: Any) -> Any:
    if isinstance(value, str):
        return [float(item) for item in value.replace(" ", "").split(",") if item]
    return value


# -------------------
# Sections
# -------------------


class OptimizerSettings(BaseModel):
    gradient_tol: float = Field(1e-8, gt=0)
    pde_gradient_tol: float = Field(1e-6, gt=0)
    relative_cost_change: float = Field(1e-12, ge=0)
    step_min: float = Field(1e-10, gt=0)
    step_max: float = Field(1e6, gt=0)
    initial_step: float = Field(1.0, gt=0)
    memory: int = Field(10, ge=1)
    max_halvings: int = Field(20, ge=0)
    max_iterations: int = Field(5000, ge=1)
    log_every: int = Field(50, ge=1)

    @model_validator(mode="after")
    def check_step_bounds(self):
        if self.step_min >= self.step_max:
            raise ValueError("step_min must be smaller than step_max")
        return self


class ScalarSettings(BaseModel):
    n: int = Field(2, ge=1)
    y0: float = 1.0
    horizons: List[float] = [1.0, 2.0, 3.0, 4.0]
    window: Tuple[float, float] = (0.0, 1.0)
    steps_per_unit: int = Field(400, ge=2)
    dpp_steps_per_unit: int = Field(4000, ge=2)
    warm_start: bool = False

    split_lists = field_validator("horizons", "window", mode="before")(_comma_floats)


class LqrSettings(BaseModel):
    z: Tuple[float, float] = (1.0, 0.0)
    chi: List[float] = [0.0, 1.0]
    horizons: List[float] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    window: Tuple[float, float] = (0.0, 1.0)
    steps_per_period: int = Field(2000, ge=100)
    steps_per_unit: int = Field(2000, ge=2)
    optimizer_steps_per_unit: int = Field(1000, ge=2)
    periodic_tol: float = Field(1e-10, gt=0)
    max_periods: int = Field(200, ge=1)

    split_lists = field_validator("z", "chi", "horizons", "window", mode="before")(_comma_floats)


class SchloglSettings(BaseModel):
    nu: float = Field(0.1, gt=0)
    zeta: Tuple[float, float, float] = (-1.0, 0.0, 2.0)
    gamma: float = Field(50.0, ge=0)
    control_bound: float = Field(30.0, ge=0)
    n_modes: int = Field(20, ge=1)
    n_actuators: int = Field(12, ge=1)
    rho: float = Field(0.1, gt=0, lt=1)
    n_elements: int = Field(256, ge=64)
    dt: float = Field(1e-3, gt=0)
    horizons: List[float] = [0.3, 0.5, 0.6, 0.7, 0.8, 1.0]
    window: Tuple[float, float] = (0.0, 0.3)
    free_dynamics: bool = False
    free_horizon: float = Field(6.0, gt=0)
    snapshot_times: List[float] = [0.0, 0.5, 1.0, 2.0, 4.0, 6.0]

    split_lists = field_validator("zeta", "horizons", "window", "snapshot_times", mode="before")(
        _comma_floats
    )


class ToleranceSettings(BaseModel):
    scalar_cost_rtol: float = 0.035
    scalar_oracle_rtol: float = 1e-3
    lqr_cost_rtol: float = 0.005
    monotone_slack: float = 1e-10
    fth_below_ith_rtol: float = 1e-6
    dpp_scalar: float = 1e-6
    dpp_lqr: float = 1e-5
    counterexample_rtol: float = 1e-8
    decay_factor: float = 10.0


class HarnessSettings(BaseModel):
    jobs: int = Field(1, ge=1)
    output_dir: Path = Path("results")
    blowup_threshold: float = Field(1e8, gt=0)


class Settings(BaseSettings):

    log_level: str = "INFO"
    log_format: str = "text"

    optimizer: OptimizerSettings = OptimizerSettings()
    scalar: ScalarSettings = ScalarSettings()
    lqr: LqrSettings = LqrSettings()
    schlogl: SchloglSettings = SchloglSettings()
    tolerances: ToleranceSettings = ToleranceSettings()
    harness: HarnessSettings = HarnessSettings()

    model_config = SettingsConfigDict(
        env_prefix="HORIZON_",
        env_nested_delimiter="__",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("log_level")
    @classmethod
    def upper_level(cls, value: str) -> str:
        value = value.upper()
        if not isinstance(logging.getLevelName(value), int):
            raise ValueError(f"unknown log level {value!r}")
        return value

    @field_validator("log_format")
    @classmethod
    def known_format(cls, value: str) -> str:
        if value not in ("text", "json"):
            raise ValueError("log_format must be 'text' or 'json'")
        return value


# Global settings instance
settings = Settings()


# -------------------
# Config files
# -------------------

GENERAL_SECTION = "general"


def read_config_file(path: Path) -> Dict[str, Any]:
    """Parse an INI-style file into a nested dict keyed like ``Settings``.

    Keys of the ``[general]`` section land on the top level; every other
    section becomes a nested mapping.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")

    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigurationError(f"cannot parse {path}: {e}") from e

    data: Dict[str, Any] = {}
    for section in parser.sections():
        values = dict(parser.items(section))
        if section == GENERAL_SECTION:
            data.update(values)
        else:
            data.setdefault(section, {}).update(values)
    return data


def _deep_merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        elif value is not None:
            merged[key] = value
    return merged


def load_settings(
    config_path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> Settings:
    """Flags override the config file, which overrides the environment."""
    data: Dict[str, Any] = {}
    if config_path is not None:
        data = read_config_file(config_path)
        logger.info(f"Loaded config file {config_path}")
    if overrides:
        data = _deep_merge(data, overrides)
    try:
        return Settings(**data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {e}") from e


# -------------------
# Experiments
# -------------------


class ExperimentConfig(BaseModel):
    experiment_id: str
    horizons: List[float]
    window: Tuple[float, float]
    output_dir: Path = Path("results")
    jobs: int = 1
    tolerances: ToleranceSettings = ToleranceSettings()

    @model_validator(mode="after")
    def check_ladder(self):
        if not self.horizons:
            raise ValueError("at least one horizon is required")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise ValueError(f"horizons must be strictly increasing: {self.horizons}")
        s, r = self.window
        if not s < r:
            raise ValueError(f"window start must precede its end: {self.window}")
        if r > min(self.horizons) + 1e-12:
            raise ValueError(
                f"window {self.window} is not contained in the shortest horizon {min(self.horizons)}"
            )
        return self

    @classmethod
    def build(cls, **kwargs: Any) -> "ExperimentConfig":
        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise ConfigurationError(f"invalid experiment configuration: {e}") from e
