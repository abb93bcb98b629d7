"""Per-command state: the validated experiment config plus process settings."""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..config import ExperimentConfig, Settings, get_settings, load_config


@dataclass(frozen=True)
class CommandContext:
    cfg: ExperimentConfig
    settings: Settings

    @property
    def experiment_dir(self) -> Path:
        """Checkpoints, reports and plots of this experiment."""
        return Path(self.settings.output_root) / self.cfg.output_dir

    @property
    def dataset_root(self) -> Path:
        return self.experiment_dir / self.cfg.data.dataset_dir

    @property
    def reports_dir(self) -> Path:
        return self.experiment_dir / "reports"


def load_context(
    config_path: Optional[Path] = None,
    overrides: Optional[list[str]] = None,
    settings: Optional[Settings] = None,
) -> CommandContext:
    """Load the experiment config and pair it with the process settings.

    Raises:
        ConfigError: If the config file or an override is invalid.
    """
    return CommandContext(load_config(config_path, overrides), settings or get_settings())
