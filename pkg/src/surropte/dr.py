"""Augmented (doubly robust) curve and effect estimation.

Each inverse-probability kernel sum is augmented by its outcome-regression
projection, so the result stays consistent when either the propensity model
or the outcome-side models are correct. Curve-level augmentation uses the
conditional density and regression prediction on the grid; mean-level
augmentation uses their integral functionals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import EmptySupportError, UnstablePteError
from .ipw import (
    DEGENERATE_TOL,
    NULL_EFFECT_TOL,
    EffectEstimates,
    SurrogateTransform,
    fill_nearest,
    g_hat,
    lambda_hat,
)
from .kernels import Grid, KernelConfig, kernel_matrix
from .outcome_models import OutcomeRegressionFit


@dataclass(frozen=True)
class DrCurves:
    """Augmented numerator, density, regression, and membership curves.

    ``f0``/``f1`` are the raw augmented densities and may dip below zero at
    sparse grid points; membership probabilities are built from their
    zero-clipped versions, while quadratures use the raw values.
    """

    grid: Grid
    M0: np.ndarray
    M1: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    f0_clipped: np.ndarray
    f1_clipped: np.ndarray
    m0_flagged: np.ndarray = field(default=None)  # type: ignore[assignment]
    m1_flagged: np.ndarray = field(default=None)  # type: ignore[assignment]
    flavor: str = "DR"

    def __post_init__(self):
        g = self.grid.points.size
        for name in ("M0", "M1", "f0", "f1", "m0", "m1", "p0", "p1"):
            if getattr(self, name).shape != (g,):
                raise ValueError(f"curve {name} does not match the grid")
        for name in ("m0_flagged", "m1_flagged"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.zeros(g, dtype=bool))

    @property
    def flagged(self) -> np.ndarray:
        return self.m0_flagged | self.m1_flagged


def psi_matrices(
    data: Dataset,
    or_fit: OutcomeRegressionFit,
    grid: Optional[Grid] = None,
    dtype=np.float64,
) -> dict:
    """Per-arm (psi_f, psi_m) matrices over all records x grid points.

    The dominant cost of the augmented estimator; compute once and pass to
    both dr_curves and dr_effects.
    """
    if grid is None:
        grid = or_fit.grid
    cache = {}
    for a in (0, 1):
        psi_f, _ = or_fit.arm(a).psi_f_matrix(data, grid, dtype=dtype)
        psi_m = or_fit.arm(a).psi_m_matrix(data, grid, dtype=dtype)
        cache[a] = (psi_f, psi_m)
    return cache


def _augmented_curves_for_arm(
    data: Dataset,
    w: np.ndarray,
    vbar: np.ndarray,
    psi_f: np.ndarray,
    psi_m: np.ndarray,
    km: np.ndarray,
    dtype,
):
    """Numerator M_a(s) and density f_a(s) of the augmented kernel sums."""
    n = data.n
    resid = (vbar * (w - 1.0)).astype(dtype, copy=False)
    lead_y = (vbar * w * data.y).astype(dtype, copy=False)
    lead = (vbar * w).astype(dtype, copy=False)
    m_vec = lead_y @ km - np.einsum("i,ig,ig->g", resid, psi_m, psi_f, optimize=True)
    f_vec = lead @ km - resid @ psi_f
    return (
        np.asarray(m_vec, dtype=np.float64) / n,
        np.asarray(f_vec, dtype=np.float64) / n,
    )


def dr_curves(
    data: Dataset,
    w0: np.ndarray,
    w1: np.ndarray,
    or_fit: OutcomeRegressionFit,
    k: KernelConfig,
    grid: Optional[Grid] = None,
    case_weights: Optional[np.ndarray] = None,
    dtype=np.float64,
    psi: Optional[dict] = None,
) -> DrCurves:
    """Augmented component curves on the grid.

    ``w0``/``w1`` are the bare inverse-propensity weights (no resampling
    factor folded in); ``case_weights`` multiplies whole summands, so the
    augmentation residual (w - 1) stays correctly scaled under perturbation.
    ``psi`` takes the output of psi_matrices to avoid recomputation.
    """
    if grid is None:
        grid = or_fit.grid
    vbar = np.ones(data.n) if case_weights is None else np.asarray(case_weights, dtype=float)
    if psi is None:
        psi = psi_matrices(data, or_fit, grid, dtype=dtype)
    km = kernel_matrix(data.s, grid.points, k.bandwidth_h, dtype=dtype)
    m0_num, f0 = _augmented_curves_for_arm(data, w0, vbar, psi[0][0], psi[0][1], km, dtype)
    m1_num, f1 = _augmented_curves_for_arm(data, w1, vbar, psi[1][0], psi[1][1], km, dtype)

    valid0 = np.abs(f0) > DEGENERATE_TOL
    valid1 = np.abs(f1) > DEGENERATE_TOL
    if not valid0.any() or not valid1.any():
        raise EmptySupportError("an augmented density vanishes on the whole grid")
    with np.errstate(divide="ignore", invalid="ignore"):
        m0 = np.where(valid0, m0_num / np.where(valid0, f0, 1.0), 0.0)
        m1 = np.where(valid1, m1_num / np.where(valid1, f1, 1.0), 0.0)
    m0 = fill_nearest(m0, valid0)
    m1 = fill_nearest(m1, valid1)

    f0c = np.maximum(f0, 0.0)
    f1c = np.maximum(f1, 0.0)
    fsum = f0c + f1c
    pos = fsum > DEGENERATE_TOL
    p0 = np.where(pos, f0c / np.where(pos, fsum, 1.0), 0.5)
    p1 = 1.0 - p0

    return DrCurves(
        grid=grid, M0=m0_num, M1=m1_num, f0=f0, f1=f1, m0=m0, m1=m1,
        p0=p0, p1=p1, f0_clipped=f0c, f1_clipped=f1c,
        m0_flagged=~valid0, m1_flagged=~valid1,
    )


def dr_transform(c: DrCurves) -> SurrogateTransform:
    """Centering constant and transformation from augmented curves."""
    return g_hat(c, lam=lambda_hat(c))


def dr_effects(
    data: Dataset,
    w0: np.ndarray,
    w1: np.ndarray,
    or_fit: OutcomeRegressionFit,
    g: SurrogateTransform,
    case_weights: Optional[np.ndarray] = None,
    hajek: bool = False,
    dtype=np.float64,
    psi: Optional[dict] = None,
) -> EffectEstimates:
    """Augmented arm means of Y and g(S), and the effect ratio.

    Default normalization divides by n, following the augmented-mean
    display; ``hajek=True`` divides by the summed weights instead for
    sensitivity runs. ``psi`` takes the output of psi_matrices.
    """
    n = data.n
    vbar = np.ones(n) if case_weights is None else np.asarray(case_weights, dtype=float)
    gs = g(data.s)
    if psi is None:
        psi = psi_matrices(data, or_fit, dtype=dtype)
    grid = or_fit.grid
    wq = grid.trapezoid_weights()
    mus = {}
    for a, w in ((0, w0), (1, w1)):
        psi_f, psi_m = psi[a]
        zeta_g = np.asarray(
            psi_f @ (wq * g.g).astype(dtype, copy=False), dtype=np.float64
        )
        zeta_y = np.asarray(
            np.einsum("ig,ig,g->i", psi_f, psi_m,
                      wq.astype(dtype, copy=False), optimize=True),
            dtype=np.float64,
        )
        resid = vbar * (w - 1.0)
        denom = float(np.sum(vbar * w)) if hajek else float(n)
        if denom <= 0:
            raise EmptySupportError("an arm carries zero total weight")
        mus[(a, "y")] = float(np.sum(vbar * w * data.y - resid * zeta_y) / denom)
        mus[(a, "g")] = float(np.sum(vbar * w * gs - resid * zeta_g) / denom)
    delta = mus[(1, "y")] - mus[(0, "y")]
    delta_g = mus[(1, "g")] - mus[(0, "g")]
    if abs(delta) <= NULL_EFFECT_TOL:
        raise UnstablePteError(
            f"augmented effect estimate {delta:.3e} is numerically zero; "
            "the explained proportion is undefined near a null effect"
        )
    return EffectEstimates(
        delta=delta, delta_g=delta_g, pte=delta_g / delta,
        mu0=mus[(0, "y")], mu1=mus[(1, "y")],
        mu0_g=mus[(0, "g")], mu1_g=mus[(1, "g")],
    )
