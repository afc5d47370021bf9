"""Reference estimators the main methods are compared against.

Three regression-ratio estimators in the Freedman-Schatzkin style (naive,
covariate-adjusted, inverse-probability weighted) and a randomized-assignment
variant of the weighted kernel pipeline that replaces the fitted propensity
with the empirical arm fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .data import Dataset
from .errors import SingularDesignError
from .ipw import g_hat, ipw_curves, ipw_effects
from .kernels import Grid, KernelConfig
from .propensity import DEFAULT_CLIP, BasisSpec, fit_propensity, ipw_weights

_FREEDMAN_VARIANTS = ("naive", "with_X", "ipw")
_NULL_SLOPE_TOL = 1e-10


@dataclass(frozen=True)
class ComparatorResult:
    """Point estimate from one reference estimator."""

    name: str
    pte: float
    undefined: bool = False
    components: Dict[str, float] = field(default_factory=dict)


def _wls_coef(design: np.ndarray, y: np.ndarray, w: Optional[np.ndarray]) -> np.ndarray:
    if w is not None:
        sw = np.sqrt(w)
        design = design * sw[:, None]
        y = y * sw
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise SingularDesignError(
            f"comparator design is rank deficient ({rank} < {design.shape[1]})"
        )
    return coef


def freedman(
    data: Dataset,
    variant: str = "naive",
    ps_basis=None,
    clip=DEFAULT_CLIP,
) -> ComparatorResult:
    """Two-regression proportion-explained estimator.

    PTE = 1 - (A-coefficient with S adjusted) / (A-coefficient without).
    ``with_X`` adds covariate main effects to both regressions; ``ipw``
    fits both by weighted least squares with inverse-propensity weights
    (``ps_basis`` required).
    """
    if variant not in _FREEDMAN_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {_FREEDMAN_VARIANTS}")
    n = data.n
    ones = np.ones(n)
    extra = [data.x] if variant == "with_X" else []
    base_design = np.column_stack([ones, data.a] + extra)
    adj_design = np.column_stack([ones, data.a, data.s] + extra)

    w = None
    if variant == "ipw":
        if ps_basis is None:
            raise ValueError("ipw variant needs a propensity basis")
        basis = ps_basis if isinstance(ps_basis, BasisSpec) else BasisSpec.from_string(ps_basis)
        fit = fit_propensity(data, basis)
        w0, w1 = ipw_weights(fit, data.a, clip=clip)
        w = w0 + w1

    beta_unadj = _wls_coef(base_design, data.y, w)[1]
    beta_adj = _wls_coef(adj_design, data.y, w)[1]
    name = {"naive": "F_naive", "with_X": "F_X", "ipw": "F_IPW"}[variant]
    components = {"beta_a_unadjusted": float(beta_unadj), "beta_a_adjusted": float(beta_adj)}
    if abs(beta_unadj) < _NULL_SLOPE_TOL:
        return ComparatorResult(name=name, pte=float("nan"), undefined=True,
                                components=components)
    return ComparatorResult(name=name, pte=float(1.0 - beta_adj / beta_unadj),
                            components=components)


def wang_rct(
    data: Dataset,
    k: Optional[KernelConfig] = None,
    grid: Optional[Grid] = None,
    clip=DEFAULT_CLIP,
    c0: float = 0.11,
    dtype=np.float64,
) -> ComparatorResult:
    """Weighted kernel pipeline under an assumed randomized assignment.

    Identical to the weighted estimator except the propensity is held at
    the empirical arm fraction, so confounding through X is ignored.
    """
    data.require_estimation_size()
    if k is None:
        k = KernelConfig.from_surrogate(data.s, c0=c0)
    if grid is None:
        grid = k.make_grid(data.s)
    pi1 = float(np.mean(data.a))
    w0, w1 = ipw_weights(np.full(data.n, pi1), data.a, clip=clip)
    curves = ipw_curves(data, w0, w1, k, grid=grid, dtype=dtype)
    g = g_hat(curves)
    effects = ipw_effects(data, w0, w1, g)
    return ComparatorResult(
        name="W_RCT",
        pte=float(effects.pte),
        components={
            "arm1_fraction": pi1,
            "delta": float(effects.delta),
            "delta_g": float(effects.delta_g),
            "lam": float(g.lam),
        },
    )
