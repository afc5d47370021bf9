"""End-to-end estimation: weights, nuisance fits, curves, transformation,
and effect estimates, for the weighted and the augmented estimator.

These entry points thread optional resampling case weights through every
stage and accept a frozen kernel configuration plus grid so that replicate
fits stay on the base fit's evaluation scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .data import Dataset
from .dr import DrCurves, dr_curves, dr_effects, dr_transform, psi_matrices
from .ipw import ComponentCurves, EffectEstimates, SurrogateTransform, g_hat, ipw_curves, ipw_effects
from .kernels import Grid, KernelConfig
from .outcome_models import OutcomeRegressionFit, fit_outcome_models
from .propensity import DEFAULT_CLIP, BasisSpec, PropensityFit, fit_propensity, ipw_weights


@dataclass(frozen=True)
class FitResult:
    """One estimator's complete output on one dataset."""

    method: str
    effects: EffectEstimates
    transform: SurrogateTransform
    curves: Union[ComponentCurves, DrCurves]
    propensity: PropensityFit
    k: KernelConfig
    grid: Grid
    or_fit: Optional[OutcomeRegressionFit] = None


def _as_basis(ps_basis) -> BasisSpec:
    if isinstance(ps_basis, BasisSpec):
        return ps_basis
    return BasisSpec.from_string(ps_basis)


def estimate_ipw(
    data: Dataset,
    ps_basis,
    k: Optional[KernelConfig] = None,
    grid: Optional[Grid] = None,
    clip=DEFAULT_CLIP,
    case_weights: Optional[np.ndarray] = None,
    c0: float = 0.11,
    dtype=np.float64,
) -> FitResult:
    """Weighted kernel estimate of the transformation and the effect ratio."""
    data.require_estimation_size()
    if k is None:
        k = KernelConfig.from_surrogate(data.s, c0=c0)
    if grid is None:
        grid = k.make_grid(data.s)
    ps = fit_propensity(data, _as_basis(ps_basis), case_weights=case_weights)
    w0, w1 = ipw_weights(ps, data.a, clip=clip)
    if case_weights is not None:
        v = np.asarray(case_weights, dtype=float)
        w0 = w0 * v
        w1 = w1 * v
    curves = ipw_curves(data, w0, w1, k, grid=grid, dtype=dtype)
    g = g_hat(curves)
    effects = ipw_effects(data, w0, w1, g)
    return FitResult(
        method="ipw", effects=effects, transform=g, curves=curves,
        propensity=ps, k=k, grid=grid,
    )


def estimate_dr(
    data: Dataset,
    ps_basis,
    grm_terms=None,
    vglm_terms=None,
    k: Optional[KernelConfig] = None,
    grid: Optional[Grid] = None,
    clip=DEFAULT_CLIP,
    link: str = "identity",
    case_weights: Optional[np.ndarray] = None,
    warm_from: Optional[FitResult] = None,
    hajek: bool = False,
    c0: float = 0.11,
    mrc_restarts: int = 20,
    dtype=np.float64,
) -> FitResult:
    """Augmented estimate of the transformation and the effect ratio.

    ``warm_from`` reuses a base fit's kernel configuration, grid, index
    directions, and index bandwidths; pass it when refitting under
    perturbed case weights.
    """
    data.require_estimation_size()
    if warm_from is not None:
        k = warm_from.k if k is None else k
        grid = warm_from.grid if grid is None else grid
    if k is None:
        k = KernelConfig.from_surrogate(data.s, c0=c0)
    if grid is None:
        grid = k.make_grid(data.s)
    ps = fit_propensity(data, _as_basis(ps_basis), case_weights=case_weights)
    w0, w1 = ipw_weights(ps, data.a, clip=clip)
    or_fit = fit_outcome_models(
        data, k, link=link, case_weights=case_weights,
        grm_terms=grm_terms, vglm_terms=vglm_terms, grid=grid,
        warm_from=warm_from.or_fit if warm_from is not None else None,
        mrc_restarts=mrc_restarts,
    )
    psi = psi_matrices(data, or_fit, grid, dtype=dtype)
    curves = dr_curves(
        data, w0, w1, or_fit, k, grid=grid,
        case_weights=case_weights, dtype=dtype, psi=psi,
    )
    g = dr_transform(curves)
    effects = dr_effects(
        data, w0, w1, or_fit, g,
        case_weights=case_weights, hajek=hajek, dtype=dtype, psi=psi,
    )
    return FitResult(
        method="dr", effects=effects, transform=g, curves=curves,
        propensity=ps, k=k, grid=grid, or_fit=or_fit,
    )
