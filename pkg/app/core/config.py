from pathlib import Path
from typing import Optional
import json
import logging

from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import ConfigError, DataIOError
from app.schemas.training import TrainingConfig

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """
    Process-level settings loaded from environment variables or .env.

    Hyperparameters do not live here; they belong to TrainingConfig and are
    read from a JSON config file so runs stay reproducible.
    """
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="UDA_",
        extra="ignore",
    )

    # -------------------------
    # Application
    # -------------------------
    PROJECT_NAME: str = "Coarse-to-Fine UDA Toolkit"
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # -------------------------
    # Outputs / execution
    # -------------------------
    OUTPUT_DIR: Optional[Path] = None
    DEFAULT_THREADS: int = Field(default=1, ge=1)

    # -------------------------
    # Validators (Pydantic V2)
    # -------------------------

    @field_validator("LOG_LEVEL")
    def validate_log_level(cls, v):
        level = str(v).upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"Unknown LOG_LEVEL: {v}")
        return level


settings = Settings()


def resolve_output_dir(flag_value: Optional[Path], config_value: Optional[Path] = None) -> Path:
    """
    Pick the output directory.

    CLI flag wins over the environment override, which wins over the config
    file; the fallback is ./runs.
    """
    if flag_value is not None:
        return Path(flag_value)
    if settings.OUTPUT_DIR is not None:
        return Path(settings.OUTPUT_DIR)
    if config_value is not None:
        return Path(config_value)
    return Path("runs")


def load_training_config(path: Optional[Path], overrides: Optional[dict] = None) -> TrainingConfig:
    """
    Load and validate a TrainingConfig from a JSON file.

    Args:
        path: JSON config file, or None for pure defaults
        overrides: flat or nested values from CLI flags; applied last

    Raises:
        DataIOError: file missing or not valid JSON
        ConfigError: schema validation failed
    """
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise DataIOError(f"Config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataIOError(f"Config file {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if isinstance(value, dict):
            nested = dict(data.get(key) or {})
            nested.update({k: v for k, v in value.items() if v is not None})
            data[key] = nested
        else:
            data[key] = value

    try:
        config = TrainingConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid training config: {e}")

    logger.debug(f"Loaded training config (K={config.K}, U={config.U}, seed={config.seed})")
    return config
