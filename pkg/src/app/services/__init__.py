"""Services module: training stages, inference pipeline and ICP."""

from .deform_trainer import DeformTrainer, load_deform_net
from .icp import baseline_init, icp_similarity, refine_prediction, refine_with_history
from .pipeline import PipelineResult, PosePipeline
from .registration_trainer import RegistrationTrainer, load_registration_net, predicted_view
from .training import TrainingHistory, epoch_batches, seed_everything

__all__ = [
    "DeformTrainer",
    "PipelineResult",
    "PosePipeline",
    "RegistrationTrainer",
    "TrainingHistory",
    "baseline_init",
    "epoch_batches",
    "icp_similarity",
    "load_deform_net",
    "load_registration_net",
    "predicted_view",
    "refine_prediction",
    "refine_with_history",
    "seed_everything",
]
