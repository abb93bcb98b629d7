"""Learned components: invariant encoder, attention, deformation and registration."""

from .attention import AttentionBlock, CrossEnhancement, MultiHeadAttention, attend, cross_enhance
from .deformnet import DeformationResult, DeformNet, deform, deformation_loss
from .encoder import (
    FeatureLevel,
    FeaturePyramid,
    InvariantEncoder,
    build_knn_graph,
    encode_multiscale,
    invariant_conv_layer,
)
from .fitting import umeyama_fit
from .regnet import (
    CorrespondenceSet,
    PoseEstimate,
    RegistrationNet,
    estimate_pose_scale,
    explore_correspondences,
    extract_registration_features,
    registration_loss,
    split_groups,
)
from .results import LossBreakdown

__all__ = [
    "AttentionBlock",
    "CorrespondenceSet",
    "CrossEnhancement",
    "DeformNet",
    "DeformationResult",
    "FeatureLevel",
    "FeaturePyramid",
    "InvariantEncoder",
    "LossBreakdown",
    "MultiHeadAttention",
    "PoseEstimate",
    "RegistrationNet",
    "attend",
    "build_knn_graph",
    "cross_enhance",
    "deform",
    "deformation_loss",
    "encode_multiscale",
    "estimate_pose_scale",
    "explore_correspondences",
    "extract_registration_features",
    "invariant_conv_layer",
    "registration_loss",
    "split_groups",
    "umeyama_fit",
]
