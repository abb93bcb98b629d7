"""Process settings."""

from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables.

    Experiment hyperparameters do not live here; see ``ExperimentConfig``.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # App
    app_name: str = "selfpose"
    app_env: Literal["development", "production"] = "development"

    # Artifacts (checkpoints, reports, plots, fixture datasets) are written below this root
    output_root: Path = Path("runs")

    # Compute
    device: Literal["cpu", "cuda"] = "cpu"
    num_workers: int = 1

    # Logging
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    log_format: Literal["console", "json"] = "console"

    @property
    def is_production(self) -> bool:
        """Check if running in production."""
        return self.app_env == "production"


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
