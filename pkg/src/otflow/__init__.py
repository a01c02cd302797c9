"""Optical flow by global matching.

An entropic optimal-transport matcher with dustbins turns an all-pairs
correlation volume into a transport plan, from which initial flow,
confidence and occlusion maps are derived. A confidence-gated global
correction and a few local logit-space refinement steps follow, and convex
upsampling brings everything back to full resolution. Deterministic
stand-ins replace the learned networks, so the whole pipeline runs
end-to-end at desk scale.
"""

from otflow.backend import BACKEND
from otflow.core import (
    ConfidenceMap,
    CostVolume,
    DimensionMismatch,
    EmptyMaskError,
    FlowField,
    ImagePair,
    NonFiniteValue,
    OcclusionMap,
    ProbabilityVolume,
    RefineState,
    ValidationError,
    ValueOutOfRange,
    validate,
)
from otflow.features import FeatureMap, extract_features
from otflow.initflow import WindowSpec, init_confidence, init_flow, init_occlusion
from otflow.matching import (
    SinkhornConfig,
    SinkhornDiagnostics,
    build_correlation,
    marginal_error,
    sinkhorn_dustbin,
)
from otflow.pipeline import FlowResult, estimate_flow
from otflow.refine import (
    Aggregator,
    IterationExhausted,
    RefineConfig,
    UpsampleWeights,
    bilinear_upsample_weights,
    convex_upsample,
    diffuse_aggregate,
    global_refine,
    local_refine_step,
    run_refinement,
)
from otflow.supervise import (
    LossReport,
    LossWeights,
    gt_confidence,
    gt_occlusion,
    loss_confidence,
    loss_flow,
    loss_occlusion,
    total_loss,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfidenceMap",
    "CostVolume",
    "DimensionMismatch",
    "EmptyMaskError",
    "FlowField",
    "ImagePair",
    "NonFiniteValue",
    "OcclusionMap",
    "ProbabilityVolume",
    "RefineState",
    "ValidationError",
    "ValueOutOfRange",
    "validate",
    "FeatureMap",
    "extract_features",
    "WindowSpec",
    "init_confidence",
    "init_flow",
    "init_occlusion",
    "SinkhornConfig",
    "SinkhornDiagnostics",
    "build_correlation",
    "marginal_error",
    "sinkhorn_dustbin",
    "FlowResult",
    "estimate_flow",
    "Aggregator",
    "IterationExhausted",
    "RefineConfig",
    "UpsampleWeights",
    "bilinear_upsample_weights",
    "convex_upsample",
    "diffuse_aggregate",
    "global_refine",
    "local_refine_step",
    "run_refinement",
    "LossReport",
    "LossWeights",
    "gt_confidence",
    "gt_occlusion",
    "loss_confidence",
    "loss_flow",
    "loss_occlusion",
    "total_loss",
    "__version__",
]
