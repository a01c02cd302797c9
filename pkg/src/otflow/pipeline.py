"""End-to-end flow estimation: features, matching, initialization, refinement."""

from __future__ import annotations

from dataclasses import dataclass

from otflow.core import ConfidenceMap, FlowField, ImagePair, OcclusionMap
from otflow.features import BASE_CHANNELS, extract_features
from otflow.initflow import WindowSpec, init_confidence, init_flow, init_occlusion
from otflow.matching import SinkhornConfig, SinkhornDiagnostics, build_correlation, sinkhorn_dustbin
from otflow.refine import RefineConfig, run_refinement

__all__ = ["FlowResult", "estimate_flow"]


@dataclass(frozen=True)
class FlowResult:
    """Full-resolution outputs plus the quarter-resolution initialization."""

    flow: FlowField
    confidence: ConfidenceMap
    occlusion: OcclusionMap
    init_flow: FlowField
    init_confidence: ConfidenceMap
    init_occlusion: OcclusionMap
    diagnostics: SinkhornDiagnostics


def estimate_flow(
    pair: ImagePair,
    feature_dim: int = BASE_CHANNELS,
    sinkhorn: SinkhornConfig = SinkhornConfig(),
    window: WindowSpec = WindowSpec(),
    refine: RefineConfig = RefineConfig(),
    coupled: bool = False,
) -> FlowResult:
    """Run the four-stage pipeline on an image pair."""
    g1 = extract_features(pair.I1, feature_dim)
    g2 = extract_features(pair.I2, feature_dim)
    C = build_correlation(g1, g2)
    P = sinkhorn_dustbin(C, sinkhorn)

    f0 = init_flow(P, window)
    conf0 = init_confidence(P, window)
    occ0 = init_occlusion(P)

    flow, conf, occ = run_refinement(f0, conf0, occ0, g1, C, refine, coupled=coupled)
    return FlowResult(
        flow=flow,
        confidence=conf,
        occlusion=occ,
        init_flow=f0,
        init_confidence=conf0,
        init_occlusion=occ0,
        diagnostics=P.diagnostics,
    )
