"""Weighted kernel estimation of the surrogate components and the
optimal transformation, from observed data and inverse-probability weights.

The building blocks are the arm-specific regression curves m_a(s), the
arm-specific surrogate densities f_a(s), and the membership probabilities
P_a(s) = f_a / (f_0 + f_1). The transformation g(s) = m(s) + lambda * P_0(s)
recenters the pooled regression so that mean differences of g(S) between
arms estimate the share of the treatment effect carried by the surrogate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import EmptySupportError, NoOverlapError, UnstablePteError
from .kernels import Grid, KernelConfig, kernel_matrix, trapezoid

#: Kernel-sum denominators below this are treated as "no local data".
DEGENERATE_TOL = 1e-10

#: Quadrature denominators below this mean the two arms share no support.
OVERLAP_TOL = 1e-12

#: Effect estimates smaller than this cannot support a ratio.
NULL_EFFECT_TOL = 1e-10


def fill_nearest(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Replace entries where ``valid`` is False by the nearest valid entry.

    Grid curves only; assumes at least one valid entry.
    """
    if valid.all():
        return values
    idx = np.arange(values.size)
    out = values.copy()
    out[~valid] = values[valid][
        np.abs(idx[valid][None, :] - idx[~valid][:, None]).argmin(axis=1)
    ]
    return out


@dataclass(frozen=True)
class ComponentCurves:
    """Arm-specific component curves evaluated on a common grid.

    ``m0``/``m1`` are the weighted kernel regressions of Y on S, ``f0``/``f1``
    the weighted surrogate densities, and ``p0``/``p1`` the membership
    probabilities. ``m0_flagged``/``m1_flagged`` mark grid points whose
    regression denominator was degenerate and whose value was filled from the
    nearest non-degenerate point.
    """

    grid: Grid
    m0: np.ndarray
    m1: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    flavor: str = "IPW"
    m0_flagged: np.ndarray = field(default=None)  # type: ignore[assignment]
    m1_flagged: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        g = self.grid.points.size
        for name in ("m0", "m1", "f0", "f1", "p0", "p1"):
            if getattr(self, name).shape != (g,):
                raise ValueError(f"curve {name} does not match the grid")
        for name in ("m0_flagged", "m1_flagged"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.zeros(g, dtype=bool))
        if self.flavor == "IPW":
            if np.any(self.f0 < 0) or np.any(self.f1 < 0):
                raise ValueError("weighted densities must be nonnegative")

    @property
    def flagged(self) -> np.ndarray:
        """Points degenerate for either regression curve."""
        return self.m0_flagged | self.m1_flagged


@dataclass(frozen=True)
class SurrogateTransform:
    """The fitted transformation g on its grid, with the centering constant."""

    lam: float
    g: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.g.shape != self.grid.points.shape:
            raise ValueError("transform values do not match the grid")

    def __call__(self, s_query) -> np.ndarray:
        """Evaluate g at arbitrary surrogate values.

        Linear interpolation between grid points, constant beyond the edges.
        """
        return self.grid.interp(self.g, s_query)


@dataclass(frozen=True)
class EffectEstimates:
    """Treatment effect on the outcome, on g(S), and their ratio."""

    delta: float
    delta_g: float
    pte: float
    mu0: float
    mu1: float
    mu0_g: float
    mu1_g: float


def _ratio_curve(num: np.ndarray, den: np.ndarray, what: str):
    """Ratio with degenerate-denominator fill; returns (curve, flagged)."""
    valid = den > DEGENERATE_TOL
    if not valid.any():
        raise EmptySupportError(
            f"every grid point is degenerate for {what}; "
            "no local data anywhere on the grid"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(valid, num / np.where(valid, den, 1.0), 0.0)
    return fill_nearest(raw, valid), ~valid


def ipw_curves(
    data: Dataset,
    w0: np.ndarray,
    w1: np.ndarray,
    k: KernelConfig,
    grid: Optional[Grid] = None,
    dtype=np.float64,
) -> ComponentCurves:
    """Weighted kernel regression and density curves for both arms.

    ``w0``/``w1`` are full-length weight vectors, zero off-arm (inverse
    propensity times any resampling weights). ``grid`` defaults to the
    config's padded grid over the observed surrogate; pass the grid from a
    base fit to keep replicate curves comparable.
    """
    if grid is None:
        grid = k.make_grid(data.s)
    km = kernel_matrix(data.s, grid.points, k.bandwidth_h, dtype=dtype)
    wy0 = (w0 * data.y).astype(dtype, copy=False)
    wy1 = (w1 * data.y).astype(dtype, copy=False)
    den0 = w0.astype(dtype, copy=False) @ km
    den1 = w1.astype(dtype, copy=False) @ km
    num0 = wy0 @ km
    num1 = wy1 @ km

    m0, flag0 = _ratio_curve(
        np.asarray(num0, dtype=np.float64), np.asarray(den0, dtype=np.float64),
        "the control regression curve",
    )
    m1, flag1 = _ratio_curve(
        np.asarray(num1, dtype=np.float64), np.asarray(den1, dtype=np.float64),
        "the treated regression curve",
    )

    sum_w0 = float(np.sum(w0))
    sum_w1 = float(np.sum(w1))
    if sum_w0 <= 0 or sum_w1 <= 0:
        raise EmptySupportError("an arm carries zero total weight")
    f0 = np.asarray(den0, dtype=np.float64) / sum_w0
    f1 = np.asarray(den1, dtype=np.float64) / sum_w1

    fsum = f0 + f1
    pos = fsum > DEGENERATE_TOL
    p0 = np.where(pos, f0 / np.where(pos, fsum, 1.0), 0.5)
    p1 = 1.0 - p0

    return ComponentCurves(
        grid=grid, m0=m0, m1=m1, f0=f0, f1=f1, p0=p0, p1=p1,
        flavor="IPW", m0_flagged=flag0, m1_flagged=flag1,
    )


def lambda_hat(c) -> float:
    """Centering constant: quadrature ratio of the component curves.

    lambda = int (m0 - m1) p1 f0 ds / int p0 f0 ds. Works for any curve
    object exposing grid, m0, m1, f0, p0, p1 and the flagged mask; flagged
    points contribute zero to both integrands.
    """
    ok = ~c.flagged
    num = trapezoid(c.grid, np.where(ok, (c.m0 - c.m1) * c.p1 * c.f0, 0.0))
    den = trapezoid(c.grid, np.where(ok, c.p0 * c.f0, 0.0))
    if den <= OVERLAP_TOL:
        raise NoOverlapError(
            "the control surrogate density has essentially no mass where "
            "membership in the control arm is uncertain; the centering "
            "constant is not identified"
        )
    return float(num / den)


def g_hat(c, lam: Optional[float] = None) -> SurrogateTransform:
    """Assemble the transformation g = m + lambda * p0 on the grid."""
    if lam is None:
        lam = lambda_hat(c)
    m = c.m0 * c.p0 + c.m1 * c.p1
    return SurrogateTransform(lam=float(lam), g=m + lam * c.p0, grid=c.grid)


def _hajek_mean(values: np.ndarray, w: np.ndarray) -> float:
    total = float(np.sum(w))
    if total <= 0:
        raise EmptySupportError("an arm carries zero total weight")
    return float(np.sum(values * w) / total)


def ipw_effects(
    data: Dataset,
    w0: np.ndarray,
    w1: np.ndarray,
    g: SurrogateTransform,
) -> EffectEstimates:
    """Weight-normalized arm means of Y and of g(S), and the effect ratio."""
    gs = g(data.s)
    mu0 = _hajek_mean(data.y, w0)
    mu1 = _hajek_mean(data.y, w1)
    mu0_g = _hajek_mean(gs, w0)
    mu1_g = _hajek_mean(gs, w1)
    delta = mu1 - mu0
    delta_g = mu1_g - mu0_g
    if abs(delta) <= NULL_EFFECT_TOL:
        raise UnstablePteError(
            f"overall effect estimate {delta:.3e} is numerically zero; "
            "the explained proportion is undefined near a null effect"
        )
    return EffectEstimates(
        delta=delta, delta_g=delta_g, pte=delta_g / delta,
        mu0=mu0, mu1=mu1, mu0_g=mu0_g, mu1_g=mu1_g,
    )
