"""Kernel-smoothing and quadrature primitives shared by all estimators.

Everything here is a pure function of immutable inputs: the Gaussian kernel,
the undersmoothed bandwidth rule, the evaluation grid used to discretize all
``integral ... ds`` expressions, and trapezoid quadrature on that grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid as scipy_trapezoid

from .errors import (
    DimensionError,
    InvalidBandwidthError,
    SampleTooSmallError,
)

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def gaussian_kernel(u, h: float):
    """Scaled Gaussian kernel K_h(u) = phi(u / h) / h.

    Args:
        u: scalar or array of evaluation points.
        h: bandwidth, must be strictly positive.

    Returns:
        Kernel weights with the same shape as ``u``.
    """
    if h <= 0:
        raise InvalidBandwidthError(f"bandwidth must be positive, got {h}")
    z = np.asarray(u, dtype=float) / h
    out = np.exp(-0.5 * z * z) / (h * _SQRT_2PI)
    return out if out.ndim else float(out)


def default_bandwidth(n: int, c0: float = 0.11) -> float:
    """Undersmoothed rule-of-thumb bandwidth factor 1.06 * n^(-1/5 - c0).

    This is the unit-scale factor; callers working in the units of a variable
    multiply by that variable's standard deviation (see
    :func:`scaled_bandwidth`). With ``c0=0`` it reduces to Scott's rule for
    unit-variance data.
    """
    if n < 2:
        raise SampleTooSmallError(f"need at least 2 observations, got {n}")
    return 1.06 * float(n) ** (-0.2 - c0)


def scaled_bandwidth(values: np.ndarray, n: Optional[int] = None, c0: float = 0.11) -> float:
    """Bandwidth in the units of ``values``: sd(values) * default_bandwidth(n, c0).

    ``n`` defaults to len(values); pass the full sample size explicitly when
    smoothing a subsample with a bandwidth tied to the full design.
    """
    values = np.asarray(values, dtype=float)
    if n is None:
        n = values.size
    sd = float(np.std(values))
    if sd <= 0:
        raise InvalidBandwidthError("values are constant; bandwidth would be zero")
    return sd * default_bandwidth(n, c0)


@dataclass(frozen=True)
class Grid:
    """Equally spaced evaluation grid over the surrogate axis."""

    points: np.ndarray
    spacing: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise DimensionError("grid needs at least two points")
        steps = np.diff(pts)
        if np.any(steps <= 0):
            raise DimensionError("grid points must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-8, atol=0.0):
            raise DimensionError("grid points must be equally spaced")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "spacing", float(steps[0]))

    @classmethod
    def from_points(cls, points) -> "Grid":
        pts = np.asarray(points, dtype=float)
        return cls(points=pts, spacing=float(pts[1] - pts[0]))

    @classmethod
    def from_support(cls, lo: float, hi: float, size: int = 201, padding: float = 0.05) -> "Grid":
        """Grid of ``size`` points over [lo, hi] padded by ``padding`` * range per side."""
        if hi <= lo:
            raise DimensionError(f"empty support [{lo}, {hi}]")
        if size < 2:
            raise DimensionError("grid size must be >= 2")
        if padding < 0:
            raise InvalidBandwidthError("grid padding must be nonnegative")
        pad = padding * (hi - lo)
        pts = np.linspace(lo - pad, hi + pad, size)
        return cls(points=pts, spacing=float(pts[1] - pts[0]))

    @classmethod
    def from_values(cls, values, size: int = 201, padding: float = 0.05) -> "Grid":
        values = np.asarray(values, dtype=float)
        return cls.from_support(float(values.min()), float(values.max()), size, padding)

    @property
    def size(self) -> int:
        return self.points.size

    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights w so that w @ values == trapezoid(self, values)."""
        w = np.full(self.size, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    def interp(self, values: np.ndarray, s_query) -> np.ndarray:
        """Linear interpolation of a grid curve, constant beyond the ends."""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.size:
            raise DimensionError("curve length does not match grid size")
        return np.interp(np.asarray(s_query, dtype=float), self.points, values)


def trapezoid(grid: Grid, values) -> float:
    """Trapezoidal quadrature of ``values`` sampled on ``grid``."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.points.shape:
        raise DimensionError(
            f"values length {values.shape} does not match grid {grid.points.shape}"
        )
    return float(scipy_trapezoid(values, dx=grid.spacing))


@dataclass(frozen=True)
class KernelConfig:
    """Smoothing configuration used by one estimation run.

    ``index_bandwidth_zeta=None`` means: derive it per treatment arm from the
    fitted index values by the same rule as the surrogate bandwidth.
    """

    bandwidth_h: float
    index_bandwidth_zeta: Optional[float] = None
    undersmooth_c0: float = 0.11
    grid_size: int = 201
    grid_padding: float = 0.05

    def __post_init__(self):
        if self.bandwidth_h <= 0:
            raise InvalidBandwidthError(f"bandwidth_h must be > 0, got {self.bandwidth_h}")
        if self.index_bandwidth_zeta is not None and self.index_bandwidth_zeta <= 0:
            raise InvalidBandwidthError(
                f"index_bandwidth_zeta must be > 0, got {self.index_bandwidth_zeta}"
            )
        if not 0.0 < self.undersmooth_c0 < 0.3:
            raise InvalidBandwidthError(
                f"undersmooth_c0 must lie in (0, 0.3), got {self.undersmooth_c0}"
            )
        if self.grid_size < 51 or self.grid_size % 2 == 0:
            raise InvalidBandwidthError(
                f"grid_size must be an odd integer >= 51, got {self.grid_size}"
            )
        if self.grid_padding < 0:
            raise InvalidBandwidthError(f"grid_padding must be >= 0, got {self.grid_padding}")

    @classmethod
    def from_surrogate(
        cls,
        s: np.ndarray,
        c0: float = 0.11,
        grid_size: int = 201,
        grid_padding: float = 0.05,
        index_bandwidth_zeta: Optional[float] = None,
    ) -> "KernelConfig":
        """Data-driven config: h = sd(S) * 1.06 * n^(-1/5 - c0)."""
        s = np.asarray(s, dtype=float)
        return cls(
            bandwidth_h=scaled_bandwidth(s, c0=c0),
            index_bandwidth_zeta=index_bandwidth_zeta,
            undersmooth_c0=c0,
            grid_size=grid_size,
            grid_padding=grid_padding,
        )

    def make_grid(self, s: np.ndarray) -> Grid:
        """Evaluation grid over the observed surrogate range."""
        return Grid.from_values(np.asarray(s, dtype=float), self.grid_size, self.grid_padding)

    def with_bandwidth(self, h: float) -> "KernelConfig":
        return replace(self, bandwidth_h=h)


def kernel_matrix(values: np.ndarray, centers: np.ndarray, h: float, dtype=np.float64) -> np.ndarray:
    """Matrix K[i, j] = K_h(values[i] - centers[j]).

    The workhorse for every kernel-smoothed sum; shapes (n,) x (G,) -> (n, G).
    """
    if h <= 0:
        raise InvalidBandwidthError(f"bandwidth must be positive, got {h}")
    v = np.asarray(values, dtype=dtype)
    c = np.asarray(centers, dtype=dtype)
    z = (v[:, None] - c[None, :]) / dtype(h)
    z *= z
    z *= dtype(-0.5)
    np.exp(z, out=z)
    z /= dtype(h * _SQRT_2PI)
    # flush deep-tail values to exact zero: subnormal entries slow BLAS by
    # orders of magnitude and contribute nothing to any kernel sum
    tiny = np.finfo(np.dtype(dtype)).tiny * 2**24
    z[z < tiny] = 0.0
    return z
