"""All-pairs correlation and entropic optimal transport with dustbins.

The solver maximizes similarity: the Gibbs kernel is ``exp(score /
epsilon)``, so only score *differences* matter (adding a constant to every
score and to the dustbin score leaves the plan unchanged). Scores are
augmented with one dustbin row and column holding a fixed score; marginal
targets follow the standard augmented convention — every valid pixel on
either side carries mass 1, the source dustbin carries the target count and
the target dustbin the source count. Updates run in the log domain with
max-subtraction, which is what keeps ``epsilon <= 0.05`` from overflowing.

The returned plan is row-stochastic over valid source rows (each row,
dustbin entry included, sums to exactly 1) so the window sums downstream
read directly as probabilities. Column marginals are then only satisfied up
to the solver tolerance; :func:`marginal_error` reports the residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from otflow import backend
from otflow.core import (
    CostVolume,
    DimensionMismatch,
    NonFiniteValue,
    ProbabilityVolume,
    ValueOutOfRange,
)
from otflow.features import FeatureMap

__all__ = [
    "SinkhornConfig",
    "SinkhornDiagnostics",
    "build_correlation",
    "sinkhorn_dustbin",
    "marginal_error",
]


@dataclass(frozen=True)
class SinkhornConfig:
    """Entropic OT solver settings.

    The dustbin score is fixed (not learned) and, like epsilon and the
    iteration budget, is exposed on the CLI. Defaults are tuned against
    the hand-crafted descriptors: epsilon sharp enough to concentrate the
    plan on the best match, and a dustbin score sitting between the score
    an occluded pixel can reach (imposters) and a true match's score, so
    unmatched mass actually lands in the dustbin.
    """

    epsilon: float = 0.01
    max_iters: int = 100
    tol: float = 1e-4
    dustbin_score: float = 0.12

    def __post_init__(self):
        if not (self.epsilon > 0.0):
            raise ValueOutOfRange("SinkhornConfig: epsilon must be > 0")
        if self.max_iters < 1:
            raise ValueOutOfRange("SinkhornConfig: max_iters must be >= 1")
        if not (self.tol > 0.0):
            raise ValueOutOfRange("SinkhornConfig: tol must be > 0")
        if not np.isfinite(self.dustbin_score):
            raise NonFiniteValue("SinkhornConfig: dustbin_score must be finite")


@dataclass(frozen=True)
class SinkhornDiagnostics:
    """Solver outcome: iterations spent and the final marginal error."""

    iterations: int
    marginal_error: float
    converged: bool


def build_correlation(g1: FeatureMap, g2: FeatureMap) -> CostVolume:
    """All-pairs similarity ``C(u,v,u',v') = <g1[u,v], g2[u',v']> / sqrt(dim)``."""
    if (g1.h, g1.w, g1.dim) != (g2.h, g2.w, g2.dim):
        raise DimensionMismatch(
            f"build_correlation: feature grids disagree "
            f"({g1.h}x{g1.w}x{g1.dim} vs {g2.h}x{g2.w}x{g2.dim})"
        )
    scores = g1.flat() @ g2.flat().T / np.sqrt(g1.dim)
    return CostVolume(h=g1.h, w=g1.w, data=scores)


def _augmented_scores(scores: np.ndarray, dustbin_score: float) -> np.ndarray:
    n, m = scores.shape
    aug = np.full((n + 1, m + 1), dustbin_score)
    aug[:n, :m] = scores
    return aug


def sinkhorn_dustbin(C: CostVolume, cfg: SinkhornConfig) -> ProbabilityVolume:
    """Solve the dustbin-augmented entropic OT problem on a cost volume.

    Failing to converge within ``cfg.max_iters`` is not an error: the best
    iterate is returned and the residual is reported on the attached
    :class:`SinkhornDiagnostics`.
    """
    n = C.h * C.w
    aug = _augmented_scores(C.data, cfg.dustbin_score)
    log_kernel = np.ascontiguousarray(aug / cfg.epsilon)
    log_mu = np.zeros(n + 1)
    log_mu[n] = np.log(n)
    log_nu = np.zeros(n + 1)
    log_nu[n] = np.log(n)

    u, v, iterations, err = backend.sinkhorn_log_potentials(
        log_kernel, log_mu, log_nu, cfg.tol, cfg.max_iters
    )
    plan = np.exp(log_kernel + u[:, None] + v[None, :])

    # exact row-stochastic cleanup over valid source rows (the last solver
    # sweep was a row update, so this only removes float residue)
    row_sums = plan[:n].sum(axis=1, keepdims=True)
    plan[:n] /= row_sums

    return ProbabilityVolume(
        h=C.h,
        w=C.w,
        data=plan[:n, :n],
        dustbin_src=plan[:n, n],
        dustbin_tgt=plan[n, :n],
        corner=float(plan[n, n]),
        diagnostics=SinkhornDiagnostics(
            iterations=iterations,
            marginal_error=err,
            converged=bool(err < cfg.tol),
        ),
    )


def marginal_error(P: ProbabilityVolume) -> float:
    """Worst relative violation over all row/column marginal constraints.

    Valid rows and columns target mass 1; the dustbin row targets the
    number of valid targets and the dustbin column the number of valid
    sources.
    """
    n = P.h * P.w
    row_err = np.abs(P.data.sum(axis=1) + P.dustbin_src - 1.0)
    col_err = np.abs(P.data.sum(axis=0) + P.dustbin_tgt - 1.0)
    bin_row_err = abs((P.dustbin_tgt.sum() + P.corner) - n) / n
    bin_col_err = abs((P.dustbin_src.sum() + P.corner) - n) / n
    worst = max(
        float(row_err.max(initial=0.0)),
        float(col_err.max(initial=0.0)),
        bin_row_err,
        bin_col_err,
    )
    return worst
