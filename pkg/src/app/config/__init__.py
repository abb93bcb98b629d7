"""Configuration module."""

from .experiment import (
    AttentionConfig,
    CategorySpec,
    CorrespondenceConfig,
    DataConfig,
    DeformConfig,
    DeformLossWeights,
    EncoderConfig,
    EvalConfig,
    ExperimentConfig,
    IcpConfig,
    PoseLossWeights,
    RegistrationConfig,
    RendererConfig,
    load_config,
)
from .settings import Settings, get_settings

__all__ = [
    "AttentionConfig",
    "CategorySpec",
    "CorrespondenceConfig",
    "DataConfig",
    "DeformConfig",
    "DeformLossWeights",
    "EncoderConfig",
    "EvalConfig",
    "ExperimentConfig",
    "IcpConfig",
    "PoseLossWeights",
    "RegistrationConfig",
    "RendererConfig",
    "Settings",
    "get_settings",
    "load_config",
]
