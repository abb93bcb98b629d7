"""Experiment configuration.

One JSON file describes a whole experiment; the defaults are the full-size training
setup. Command-line overrides address fields by dotted path,
e.g. ``--set deform.learning_rate=5e-5``.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Literal, Optional

import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigError
from ..rendering.camera import CameraIntrinsics

logger = structlog.get_logger()


class _Strict(BaseModel):
    """Base for config sections: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


# =====================================================
# NETWORK SECTIONS
# =====================================================


class EncoderConfig(_Strict):
    """Shift- and scale-invariant graph-convolution encoder."""

    neighbors_k: int = Field(default=16, ge=3)
    level_widths: list[int] = Field(default_factory=lambda: [64, 128, 256])
    downsample_ratios: list[float] = Field(default_factory=lambda: [1.0, 0.5, 0.25])
    support_num: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_levels(self) -> "EncoderConfig":
        if len(self.level_widths) != len(self.downsample_ratios):
            raise ValueError("level_widths and downsample_ratios must have equal length")
        if not self.level_widths:
            raise ValueError("at least one encoder level is required")
        if any(not 0 < r <= 1 for r in self.downsample_ratios):
            raise ValueError("downsample_ratios must lie in (0, 1]")
        return self


class AttentionConfig(_Strict):
    """Multi-head attention; ``linear`` mode pools keys/values to ``projection_dim`` rows."""

    heads: int = Field(default=4, ge=1)
    head_dim: int = Field(default=32, ge=1)
    mode: Literal["exact", "linear"] = "linear"
    projection_dim: int = Field(default=64, ge=1)


# =====================================================
# DEFORMATION
# =====================================================


class DeformLossWeights(_Strict):
    lambda_cd: float = Field(default=3.0, ge=0)
    lambda_lpc: float = Field(default=0.1, ge=0)
    lambda_nc: float = Field(default=0.01, ge=0)


class DeformConfig(_Strict):
    loss_weights: DeformLossWeights = Field(default_factory=DeformLossWeights)
    epochs: int = Field(default=50, ge=1)
    learning_rate: float = Field(default=1e-4, gt=0)
    lr_halving_period: int = Field(default=10, ge=1)
    batch_size: int = Field(default=4, ge=1)
    n_samples: int = Field(default=2048, ge=1)
    scene_points: int = Field(default=1024, ge=32)
    chamfer_reduction: Literal["sum", "mean"] = "mean"
    # ablation: decode from the template pyramid without attending to the scene
    cross_enhance: bool = True
    fusion: Literal["concat", "sum"] = "concat"
    decoder_widths: list[int] = Field(default_factory=lambda: [512, 256])
    supervision: Literal["coarse", "gt_mesh"] = "coarse"
    # pipeline-stage ablation: register the raw template
    enabled: bool = True


# =====================================================
# REGISTRATION
# =====================================================


class CorrespondenceConfig(_Strict):
    top_k: int = Field(default=400, ge=1)
    groups: int = Field(default=10, ge=1)
    group_size: int = Field(default=40, ge=3)


class PoseLossWeights(_Strict):
    lambda_geo: float = Field(default=10.0, ge=0)
    lambda_w_corr: float = Field(default=0.1, ge=0)


class RegistrationConfig(_Strict):
    loss_weights: PoseLossWeights = Field(default_factory=PoseLossWeights)
    epochs: int = Field(default=50, ge=1)
    learning_rate: float = Field(default=2e-5, gt=0)
    lr_halving_period: int = Field(default=10, ge=1)
    batch_size: int = Field(default=4, ge=1)
    train_correspondences: CorrespondenceConfig = Field(
        default_factory=lambda: CorrespondenceConfig(top_k=400, groups=10, group_size=40)
    )
    test_correspondences: CorrespondenceConfig = Field(
        default_factory=lambda: CorrespondenceConfig(top_k=400, groups=100, group_size=4)
    )
    model_points: int = Field(default=1024, ge=32)
    scene_points: int = Field(default=1024, ge=32)
    sa_centers: list[int] = Field(default_factory=lambda: [512, 128])
    sa_widths: list[int] = Field(default_factory=lambda: [128, 256])
    sa_neighbors: int = Field(default=32, ge=3)
    feature_dim: int = Field(default=128, ge=8)
    weighted_fit: bool = True
    chamfer_reduction: Literal["sum", "mean"] = "mean"
    # pipeline-stage ablation: compare the full transformed sample instead of the rendered view
    use_renderer: bool = True
    max_lifted_points: int = Field(default=2048, ge=32)

    @model_validator(mode="after")
    def _check_backbone(self) -> "RegistrationConfig":
        if len(self.sa_centers) != len(self.sa_widths):
            raise ValueError("sa_centers and sa_widths must have equal length")
        return self


# =====================================================
# RENDERING / ICP
# =====================================================


class RendererConfig(_Strict):
    intrinsics: CameraIntrinsics = Field(
        default_factory=lambda: CameraIntrinsics(
            fx=160.0, fy=160.0, cx=64.0, cy=64.0, width=128, height=128
        )
    )
    near_plane: float = Field(default=1e-4, gt=0)
    face_chunk: int = Field(default=64, ge=1)


class IcpConfig(_Strict):
    max_iterations: int = Field(default=50, ge=1)
    convergence_tol: float = Field(default=1e-6, gt=0)
    reject_fraction: float = Field(default=0.1, ge=0, le=0.5)


# =====================================================
# DATA / EVALUATION
# =====================================================


class CategorySpec(_Strict):
    """Parametric synthetic category. Ranges are (low, high) in normalized units."""

    name: str = "mug"
    family: Literal["box", "cylinder", "tapered-cup", "composite"] = "tapered-cup"
    aspect_range: tuple[float, float] = (0.6, 1.4)
    taper_range: tuple[float, float] = (0.6, 1.0)
    wall_range: tuple[float, float] = (0.25, 0.45)
    instance_count: int = Field(default=25, ge=1)
    sections: int = Field(default=24, ge=6)
    max_edge: float = Field(default=0.12, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self) -> "CategorySpec":
        for name in ("aspect_range", "taper_range", "wall_range"):
            low, high = getattr(self, name)
            if not 0 < low <= high:
                raise ValueError(f"{name} must satisfy 0 < low <= high")
        return self


class DataConfig(_Strict):
    category: CategorySpec = Field(default_factory=CategorySpec)
    train_instances: int = Field(default=20, ge=1)
    test_instances: int = Field(default=5, ge=1)
    views_per_instance: int = Field(default=24, ge=1)
    coarse_views: int = Field(default=16, ge=1)
    noise_sigma: float = Field(default=0.001, ge=0)
    meanshift_bandwidth: float = Field(default=1.0, gt=0)
    template_perturbation: float = Field(default=0.05, ge=0)
    object_size_range: tuple[float, float] = (0.15, 0.3)
    distance_range: tuple[float, float] = (0.7, 1.0)
    dataset_dir: str = "dataset"


class EvalConfig(_Strict):
    iou_thresholds: list[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    pose_thresholds: list[tuple[float, float]] = Field(
        default_factory=lambda: [(5.0, 2.0), (5.0, 5.0), (10.0, 2.0), (10.0, 5.0)]
    )
    symmetric_categories: list[str] = Field(
        default_factory=lambda: ["bottle", "bowl", "can", "cylinder"]
    )
    add_max_threshold: float = Field(default=0.1, gt=0)
    add_model_points: int = Field(default=1000, ge=1)
    icp_refine: bool = False


# =====================================================
# ROOT
# =====================================================


class ExperimentConfig(_Strict):
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    attention: AttentionConfig = Field(default_factory=AttentionConfig)
    deform: DeformConfig = Field(default_factory=DeformConfig)
    registration: RegistrationConfig = Field(default_factory=RegistrationConfig)
    renderer: RendererConfig = Field(default_factory=RendererConfig)
    icp: IcpConfig = Field(default_factory=IcpConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    seed: int = 0
    output_dir: str = "experiment"

    def is_symmetric(self, category: str) -> bool:
        return category in self.eval.symmetric_categories

    def config_hash(self) -> str:
        """Hash of the full configuration."""
        return _hash_payload(self.model_dump(mode="json"))

    def architecture_hash(self) -> str:
        """Hash of the fields that determine network parameter shapes."""
        reg = self.registration
        payload = {
            "encoder": self.encoder.model_dump(mode="json"),
            "attention": self.attention.model_dump(mode="json"),
            "deform": {
                "cross_enhance": self.deform.cross_enhance,
                "fusion": self.deform.fusion,
                "decoder_widths": self.deform.decoder_widths,
            },
            "registration": {
                "sa_centers": reg.sa_centers,
                "sa_widths": reg.sa_widths,
                "sa_neighbors": reg.sa_neighbors,
                "feature_dim": reg.feature_dim,
            },
        }
        return _hash_payload(payload)


def _hash_payload(payload: dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# =====================================================
# LOADING
# =====================================================


def _parse_value(raw: str) -> Any:
    """Parse an override value as a JSON literal, falling back to the raw string."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(payload: dict[str, Any], key_path: str, value: Any) -> None:
    """Set ``value`` at a dotted ``key_path`` inside a nested dict.

    Raises:
        ConfigError: If an intermediate key does not name a section.
    """
    parts = key_path.split(".")
    node = payload
    for i, part in enumerate(parts[:-1]):
        child = node.get(part)
        if not isinstance(child, dict):
            raise ConfigError("Unknown config section", key_path=".".join(parts[: i + 1]))
        node = child
    node[parts[-1]] = value


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[list[str]] = None,
) -> ExperimentConfig:
    """Load an experiment config from JSON and apply ``key=value`` overrides.

    Args:
        path: Optional JSON file; missing fields take their defaults.
        overrides: Dotted-path assignments such as ``"deform.epochs=5"``.

    Returns:
        The validated config.

    Raises:
        ConfigError: On unreadable files, unknown keys or invalid values, naming the key path.
    """
    payload: dict[str, Any] = ExperimentConfig().model_dump(mode="json")
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {path} must contain a JSON object")
        _merge(payload, loaded, prefix="")

    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"Override '{item}' must look like key.path=value")
        key_path, raw = item.split("=", 1)
        apply_override(payload, key_path.strip(), _parse_value(raw.strip()))

    try:
        config = ExperimentConfig.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        key_path = ".".join(str(p) for p in first["loc"])
        raise ConfigError(first["msg"], key_path=key_path) from e

    logger.debug(
        "Config loaded",
        path=str(path) if path else None,
        config_hash=config.config_hash(),
    )
    return config


def _merge(base: dict[str, Any], update: dict[str, Any], prefix: str) -> None:
    """Recursively merge ``update`` into ``base``; unknown keys are kept for validation."""
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value, prefix=f"{prefix}{key}.")
        else:
            base[key] = value
