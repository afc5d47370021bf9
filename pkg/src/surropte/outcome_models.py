"""Outcome-side nuisance models for the augmented estimator.

Two models per arm: a single-index model for the surrogate given covariates,
fitted by maximum rank correlation and turned into a conditional density
through a double-kernel smoother; and a varying-coefficient regression of the
outcome on covariates with coefficients that drift smoothly in s, fitted by
locally weighted estimating equations along the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .data import Dataset
from .design import Term, parse_terms, terms_label
from .errors import (
    DegenerateRanksError,
    NoCovariateError,
    SampleTooSmallError,
    VglmFailureError,
)
from .kernels import Grid, KernelConfig, default_bandwidth, kernel_matrix, trapezoid

_MIN_ARM_FOR_INDEX = 10

#: Internal seed for the restart draws; fixed so fits are reproducible.
_RESTART_SEED = 8675309

#: Geodesic step schedule (radians) for the exact-objective polish. The tail
#: steps are finer than the objective's typical plateau width at moderate
#: arm sizes, so adjacent plateaus are not stepped over.
_POLISH_SCHEDULE = (0.4, 0.2, 0.1, 0.05, 0.025, 0.0125, 0.005, 0.002)

#: Fine-only schedule used when refitting from a warm start.
_POLISH_SCHEDULE_WARM = (0.05, 0.0125)


# =====================================================================
# maximum rank correlation
# =====================================================================


@dataclass(frozen=True)
class IndexCoefficients:
    """Unit-norm index direction for one arm, with its objective value."""

    gamma: np.ndarray
    arm: int
    objective: float

    def __post_init__(self):
        norm = float(np.linalg.norm(self.gamma))
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-8:
            raise ValueError("index coefficients must have unit norm")


def _rank_objective_exact(t: np.ndarray, wd: np.ndarray) -> float:
    """Sum of pair weights over concordant pairs, piecewise constant in t."""
    return float(np.sum(wd, where=t[:, None] > t[None, :], dtype=np.float64))


def _rank_objective_smooth(t: np.ndarray, wd: np.ndarray) -> float:
    """Indicator replaced by a steep sigmoid; scale set by the index spread."""
    tau = 0.1 * float(np.std(t))
    if tau <= 0:
        tau = 1e-6
    diff = (t[:, None] - t[None, :]) / tau
    return float(np.sum(expit(diff) * wd, dtype=np.float64))


def _exact_sweep_2d(zs: np.ndarray, wd: np.ndarray) -> Tuple[np.ndarray, float]:
    """Global maximizer of the rank objective over unit directions in the plane.

    The objective is piecewise constant in the direction angle: the pair
    (i, j) contributes wd[i, j] exactly while (z_i - z_j) has positive
    projection, and that state flips at the two antipodal angles where the
    projection vanishes. Sweeping the sorted flip angles with a running sum
    therefore visits every attainable value once, which makes the maximum
    exact rather than a search result.
    """
    m = zs.shape[0]
    iu, ju = np.triu_indices(m, 1)
    du = zs[iu] - zs[ju]
    wij = wd[iu, ju]
    wji = wd[ju, iu]
    keep = ((du[:, 0] != 0.0) | (du[:, 1] != 0.0)) & ((wij != 0.0) | (wji != 0.0))
    du, wij, wji = du[keep], wij[keep], wji[keep]

    two_pi = 2.0 * np.pi
    if du.shape[0] == 0:
        theta0 = 0.0
        d0 = np.array([1.0, 0.0])
        return d0, _rank_objective_exact(zs @ d0, wd)
    psi = np.arctan2(du[:, 1], du[:, 0])
    # entering / leaving the positive-projection half-circle
    angles = np.concatenate([np.mod(psi - 0.5 * np.pi, two_pi),
                             np.mod(psi + 0.5 * np.pi, two_pi)])
    deltas = np.concatenate([wij - wji, wji - wij])

    # start inside the widest event-free arc so the initial direction is
    # unambiguous even when many pairs share a flip angle
    order = np.argsort(angles, kind="stable")
    sorted_angles = angles[order]
    gaps = np.diff(sorted_angles)
    wrap_gap = sorted_angles[0] + two_pi - sorted_angles[-1]
    if gaps.size and gaps.max() > wrap_gap:
        gidx = int(np.argmax(gaps))
        theta0 = float(sorted_angles[gidx] + 0.5 * gaps[gidx])
    else:
        theta0 = float(np.mod(sorted_angles[-1] + 0.5 * wrap_gap, two_pi))

    rel = np.mod(angles - theta0, two_pi)
    uniq, inv = np.unique(rel, return_inverse=True)
    step = np.bincount(inv, weights=deltas, minlength=uniq.size)

    d0 = np.array([np.cos(theta0), np.sin(theta0)])
    init = _rank_objective_exact(zs @ d0, wd)
    cum = init + np.cumsum(step)
    best = int(np.argmax(cum))
    if cum[best] <= init:
        theta = theta0
    else:
        upper = uniq[best + 1] if best + 1 < uniq.size else two_pi
        theta = theta0 + 0.5 * (uniq[best] + upper)
    gamma = np.array([np.cos(theta), np.sin(theta)])
    # the running sum locates the best segment; the reported value is
    # recomputed directly so rounding in the sweep cannot leak into it
    return gamma, _rank_objective_exact(zs @ gamma, wd)


def _angles_to_sphere(phi: np.ndarray) -> np.ndarray:
    """Spherical angles (length p-1) to a unit vector (length p)."""
    p = phi.size + 1
    gamma = np.empty(p)
    sin_prod = 1.0
    for k in range(p - 1):
        gamma[k] = sin_prod * np.cos(phi[k])
        sin_prod *= np.sin(phi[k])
    gamma[p - 1] = sin_prod
    return gamma


def _rotate_toward(gamma: np.ndarray, axis: int, theta: float) -> Optional[np.ndarray]:
    """Geodesic step from gamma toward +-e_axis; None if nearly parallel."""
    e = np.zeros(gamma.size)
    e[axis] = 1.0
    tangent = e - gamma[axis] * gamma
    norm = np.linalg.norm(tangent)
    if norm < 1e-12:
        return None
    tangent /= norm
    return np.cos(theta) * gamma + np.sin(theta) * tangent


def _polish_exact(
    gamma: np.ndarray,
    exact_fn,
    schedule: Sequence[float],
) -> Tuple[np.ndarray, float]:
    """Local direction search on the exact objective.

    Repeats full sweeps over (step, axis, sign) until no strict improvement;
    at a local optimum the input is returned unchanged, which keeps refits
    from a converged warm start exactly reproducible.
    """
    best = exact_fn(gamma)
    p = gamma.size
    improved = True
    while improved:
        improved = False
        for theta in schedule:
            for axis in range(p):
                for sign in (1.0, -1.0):
                    cand = _rotate_toward(gamma, axis, sign * theta)
                    if cand is None:
                        continue
                    val = exact_fn(cand)
                    if val > best:
                        gamma, best = cand, val
                        improved = True
    return gamma, best


def fit_mrc(
    data: Dataset,
    arm: int,
    case_weights: Optional[np.ndarray] = None,
    terms: Optional[Sequence[Term]] = None,
    restarts: int = 20,
    warm_start: Optional[np.ndarray] = None,
    polish_only: bool = False,
) -> IndexCoefficients:
    """Maximum rank correlation fit of the index direction for one arm.

    Maximizes sum over within-arm pairs of w_i w_j * I(t_i > t_j) I(S_i > S_j)
    with t = Z gamma over the unit sphere, Z the covariate columns (or the
    evaluated ``terms``). Covariates are standardized internally; the sphere is
    parameterized by angles; a smoothed surrogate objective is optimized by
    Nelder-Mead from ``restarts`` random starts plus data-driven ones, and the
    winner is polished on the exact objective by geodesic coordinate steps.

    ``polish_only`` skips the smoothed stage and refines ``warm_start`` alone,
    the cheap path when refitting under perturbed case weights.
    """
    mask = data.arm_mask(arm)
    if terms is None:
        z = data.x[mask]
    else:
        z = np.column_stack([t.evaluate(data)[mask] for t in terms])
    z = np.atleast_2d(np.asarray(z, dtype=float))
    m, p = z.shape
    if p == 0:
        raise NoCovariateError("index model needs at least one covariate")
    if m < _MIN_ARM_FOR_INDEX:
        raise SampleTooSmallError(
            f"arm {arm} has {m} records; index fitting needs >= {_MIN_ARM_FOR_INDEX}"
        )
    s = data.s[mask]
    if np.all(s == s[0]):
        raise DegenerateRanksError(
            f"every surrogate value in arm {arm} is identical; ranks carry no signal"
        )
    v = np.ones(m) if case_weights is None else np.asarray(case_weights, dtype=float)[mask]

    if p == 1:
        # a one-dimensional index is a sign choice, and the index kernel is
        # symmetric in it, so the positive direction is fixed by convention
        wd1 = np.outer(v, v) * (s[:, None] > s[None, :])
        obj = _rank_objective_exact(z[:, 0], wd1)
        return IndexCoefficients(gamma=np.array([1.0]), arm=arm, objective=obj)

    center = z.mean(axis=0)
    scale = z.std(axis=0)
    scale[scale < 1e-12] = 1.0
    zs = (z - center) / scale

    concord = (s[:, None] > s[None, :]).astype(np.float64)
    wd = np.outer(v, v) * concord
    zs32 = zs.astype(np.float32)
    wd32 = wd.astype(np.float32)

    def exact(gamma: np.ndarray) -> float:
        return _rank_objective_exact(zs @ gamma, wd)

    def smooth(gamma: np.ndarray) -> float:
        return _rank_objective_smooth(zs32 @ gamma.astype(np.float32), wd32)

    if p == 2 and not polish_only:
        # two columns admit an exact angular sweep; no search needed
        best_gamma, best_val = _exact_sweep_2d(zs, wd)
    else:
        candidates: list = []
        if warm_start is not None:
            w0 = np.asarray(warm_start, dtype=float) * scale
            norm = np.linalg.norm(w0)
            if norm > 1e-12:
                candidates.append(w0 / norm)

        if not polish_only:
            # data-driven start: least squares of the within-arm ranks on Z
            ranks = np.argsort(np.argsort(s)).astype(float)
            coef, *_ = np.linalg.lstsq(
                np.column_stack([np.ones(m), zs]), ranks, rcond=None
            )
            direction = coef[1:]
            if np.linalg.norm(direction) > 1e-12:
                candidates.append(direction / np.linalg.norm(direction))
            rng = np.random.default_rng([_RESTART_SEED, arm, p])
            for _ in range(restarts):
                d = rng.standard_normal(p)
                candidates.append(d / np.linalg.norm(d))

            # keep the simplex stage affordable: screen the starts on the
            # smoothed objective, descend only from the most promising few
            scores = np.array([smooth(c) for c in candidates])
            keep = np.argsort(-scores, kind="stable")[: min(5, len(candidates))]
            refined: list = []
            for idx in keep:
                start = candidates[idx]
                phi0 = _sphere_to_angles(start)
                res = minimize(
                    lambda phi: -smooth(_angles_to_sphere(phi)),
                    phi0,
                    method="Nelder-Mead",
                    options={
                        "maxiter": 60 * (p - 1),
                        "xatol": 2e-3,
                        "fatol": 1e-5 * (1.0 + abs(scores[idx])),
                    },
                )
                refined.append(_angles_to_sphere(res.x))
            candidates = [candidates[i] for i in keep] + refined

        if not candidates:
            raise ValueError("polish_only requires a warm start")

        schedule = _POLISH_SCHEDULE_WARM if polish_only else _POLISH_SCHEDULE
        best_gamma, best_val = None, -np.inf
        for cand in candidates:
            g, val = _polish_exact(cand, exact, schedule)
            if val > best_val:
                best_gamma, best_val = g, val

    neg_val = exact(-best_gamma)
    if neg_val > best_val:
        best_gamma, best_val = -best_gamma, neg_val
    elif neg_val == best_val:
        nz = np.flatnonzero(np.abs(best_gamma) > 1e-12)
        if nz.size and best_gamma[nz[0]] < 0:
            best_gamma = -best_gamma

    gamma = best_gamma / scale
    gamma /= np.linalg.norm(gamma)
    return IndexCoefficients(gamma=gamma, arm=arm, objective=best_val)


def _sphere_to_angles(gamma: np.ndarray) -> np.ndarray:
    """Inverse of _angles_to_sphere, stable away from the poles."""
    p = gamma.size
    phi = np.empty(p - 1)
    r = 1.0
    for k in range(p - 1):
        c = np.clip(gamma[k] / r if r > 1e-300 else 1.0, -1.0, 1.0)
        phi[k] = np.arccos(c)
        r *= np.sin(phi[k])
        if r < 1e-12:
            phi[k + 1:] = 0.0
            break
    return phi


# =====================================================================
# kernel conditional density of S given the fitted index
# =====================================================================


def index_bandwidth(t: np.ndarray, c0: float, case_weights=None) -> float:
    """Bandwidth for the index kernel, same family as the surrogate rule."""
    if case_weights is None:
        sd = float(np.std(t))
    else:
        w = np.asarray(case_weights, dtype=float)
        mu = float(np.average(t, weights=w))
        sd = float(np.sqrt(np.average((t - mu) ** 2, weights=w)))
    if sd <= 0:
        sd = 1.0
    return sd * default_bandwidth(t.size, c0)


@dataclass(frozen=True)
class ConditionalDensity:
    """Double-kernel estimate of the density of S at s given an index value.

    Row weights come from the index kernel around gamma'x, column smoothing
    from the surrogate kernel; case weights enter both sums.
    """

    index: IndexCoefficients
    t_arm: np.ndarray
    s_arm: np.ndarray
    v_arm: np.ndarray
    zeta: float
    h: float

    def weights_for(self, t_query: np.ndarray, dtype=np.float64) -> Tuple[np.ndarray, np.ndarray]:
        """Normalized index-kernel rows for each query; flags degenerate rows.

        Degenerate rows (vanishing index-kernel mass) fall back to the kernel
        row recentered at the nearest in-arm index value.
        """
        t_query = np.atleast_1d(np.asarray(t_query, dtype=float))
        v = self.v_arm.astype(dtype, copy=False)
        kz = kernel_matrix(t_query, self.t_arm, self.zeta, dtype=dtype) * v[None, :]
        row_mass = kz.sum(axis=1)
        flagged = np.asarray(row_mass, dtype=np.float64) < 1e-12
        if flagged.any():
            nearest = np.abs(
                t_query[flagged, None] - self.t_arm[None, :]
            ).argmin(axis=1)
            t_repl = self.t_arm[nearest]
            kz_repl = kernel_matrix(t_repl, self.t_arm, self.zeta, dtype=dtype) * v[None, :]
            kz[flagged] = kz_repl
            row_mass = kz.sum(axis=1)
        return kz / row_mass[:, None], flagged

    def at(self, s: float, t_query: float) -> float:
        """Density estimate at a single (s, index) pair."""
        rows, _ = self.weights_for(np.array([t_query]))
        ks = kernel_matrix(np.atleast_1d(np.asarray(s, dtype=float)), self.s_arm, self.h)
        return float(rows[0] @ ks[0])

    def matrix(self, t_query: np.ndarray, grid: Grid, dtype=np.float64) -> Tuple[np.ndarray, np.ndarray]:
        """Density at every (query row, grid column); returns (matrix, flags)."""
        rows, flagged = self.weights_for(t_query, dtype=dtype)
        ks = kernel_matrix(self.s_arm, grid.points, self.h, dtype=dtype)
        return rows @ ks, flagged


# =====================================================================
# varying-coefficient outcome regression
# =====================================================================


@dataclass(frozen=True)
class VaryingCoefficients:
    """Local coefficient curves beta(s) on the grid, one row per grid point."""

    grid: Grid
    beta: np.ndarray
    link: str
    flagged: np.ndarray
    term_labels: Tuple[str, ...]

    def __post_init__(self):
        if self.beta.shape[0] != self.grid.points.size:
            raise ValueError("coefficient rows must match the grid")
        if self.link not in ("identity", "logit"):
            raise ValueError(f"unknown link {self.link!r}")

    def beta_at(self, s_query) -> np.ndarray:
        """Coefficient vector at arbitrary s by per-column linear interpolation."""
        s_query = np.atleast_1d(np.asarray(s_query, dtype=float))
        out = np.empty((s_query.size, self.beta.shape[1]))
        for j in range(self.beta.shape[1]):
            out[:, j] = self.grid.interp(self.beta[:, j], s_query)
        return out

    def predict(self, s_query, xvec: np.ndarray) -> np.ndarray:
        """Link-transformed prediction at paired (s_i, x_i) rows.

        A scalar s is broadcast across all covariate rows.
        """
        xvec = np.atleast_2d(np.asarray(xvec, dtype=float))
        s_query = np.atleast_1d(np.asarray(s_query, dtype=float))
        if s_query.size == 1 and xvec.shape[0] > 1:
            s_query = np.full(xvec.shape[0], s_query[0])
        if s_query.size != xvec.shape[0]:
            raise ValueError("s and x must pair up row by row")
        b = self.beta_at(s_query)
        design = np.column_stack([np.ones(xvec.shape[0]), xvec])
        eta = np.sum(b * design, axis=1)
        return expit(eta) if self.link == "logit" else eta


def _local_wls(
    design: np.ndarray,
    y: np.ndarray,
    kmat: np.ndarray,
    ess_floor: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form local least squares at every grid point.

    kmat is (m, G) of kernel-times-case weights over the arm. Returns the
    (G, q) coefficient array and the flag vector. A ridge proportional to the
    local Gram trace keeps sparse regions solvable; genuinely empty or
    singular points are flagged.
    """
    m, q = design.shape
    gsize = kmat.shape[1]
    ess = kmat.sum(axis=0)
    # local Gram tensors: A[g] = sum_i k_ig x_i x_i', b[g] = sum_i k_ig x_i y_i
    a = np.einsum("ig,ij,ik->gjk", kmat, design, design, optimize=True)
    b = np.einsum("ig,ij->gj", kmat * y[:, None], design, optimize=True)
    beta = np.zeros((gsize, q))
    flagged = ess < ess_floor
    tr = np.trace(a, axis1=1, axis2=2)
    ridge = 1e-8 * np.where(tr > 0, tr, 1.0) / q
    a = a + ridge[:, None, None] * np.eye(q)[None, :, :]
    solvable = ~flagged
    if solvable.any():
        try:
            beta[solvable] = np.linalg.solve(a[solvable], b[solvable][..., None])[..., 0]
        except np.linalg.LinAlgError:
            for g in np.flatnonzero(solvable):
                try:
                    beta[g] = np.linalg.solve(a[g], b[g])
                except np.linalg.LinAlgError:
                    flagged[g] = True
    bad = ~np.isfinite(beta).all(axis=1)
    flagged |= bad
    return beta, flagged


def _local_logit(
    design: np.ndarray,
    y: np.ndarray,
    kmat: np.ndarray,
    ess_floor: float,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> Tuple[np.ndarray, np.ndarray]:
    """Newton solve of the local logistic estimating equation, grid-sequential.

    Each grid point warm-starts from its left neighbor's solution, which keeps
    the iteration count small on smooth coefficient curves.
    """
    m, q = design.shape
    gsize = kmat.shape[1]
    beta = np.zeros((gsize, q))
    flagged = np.zeros(gsize, dtype=bool)
    current = np.zeros(q)
    have_warm = False
    for g in range(gsize):
        w = kmat[:, g]
        if w.sum() < ess_floor:
            flagged[g] = True
            continue
        b = current if have_warm else np.zeros(q)
        ok = False
        for _ in range(max_iter):
            eta = design @ b
            mu = expit(eta)
            score = design.T @ (w * (y - mu))
            if np.max(np.abs(score)) < tol:
                ok = True
                break
            wvar = w * mu * (1 - mu)
            hess = design.T @ (design * wvar[:, None])
            hess[np.diag_indices(q)] += 1e-8 * max(np.trace(hess) / q, 1.0)
            try:
                step = np.linalg.solve(hess, score)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > 1e4:
                break
            b = b + step
        if ok and np.all(np.isfinite(b)):
            beta[g] = b
            current = b
            have_warm = True
        else:
            flagged[g] = True
    return beta, flagged


def fit_vglm(
    data: Dataset,
    arm: int,
    k: KernelConfig,
    link: str = "identity",
    case_weights: Optional[np.ndarray] = None,
    terms: Optional[Sequence[Term]] = None,
    grid: Optional[Grid] = None,
) -> VaryingCoefficients:
    """Varying-coefficient regression of Y on (1, terms) along the s-grid."""
    mask = data.arm_mask(arm)
    if terms is None:
        z = data.x[mask]
        labels = data.colnames
    else:
        z = np.column_stack([t.evaluate(data)[mask] for t in terms])
        labels = tuple(t.label() for t in terms)
    if grid is None:
        grid = k.make_grid(data.s)
    s_arm = data.s[mask]
    y_arm = data.y[mask]
    v = np.ones(mask.sum()) if case_weights is None else np.asarray(case_weights, dtype=float)[mask]
    design = np.column_stack([np.ones(z.shape[0]), z])
    q = design.shape[1]
    kmat = kernel_matrix(s_arm, grid.points, k.bandwidth_h) * v[:, None]
    ess_floor = float(q + 1)
    if link == "identity":
        beta, flagged = _local_wls(design, y_arm, kmat, ess_floor)
    elif link == "logit":
        beta, flagged = _local_logit(design, y_arm, kmat, ess_floor)
    else:
        raise ValueError(f"unknown link {link!r}")
    if flagged.all():
        raise VglmFailureError(
            f"no grid point has enough local data to fit the outcome model in arm {arm}"
        )
    for j in range(q):
        beta[:, j] = _nearest_fill(beta[:, j], ~flagged)
    return VaryingCoefficients(
        grid=grid, beta=beta, link=link, flagged=flagged,
        term_labels=("const",) + tuple(labels),
    )


def _nearest_fill(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    if valid.all():
        return values
    idx = np.arange(values.size)
    out = values.copy()
    out[~valid] = values[valid][
        np.abs(idx[valid][None, :] - idx[~valid][:, None]).argmin(axis=1)
    ]
    return out


def psi_m(fit: VaryingCoefficients, s, x) -> np.ndarray:
    """Outcome-regression prediction M{beta(s)'(1,x)} at (s, x) pairs."""
    return fit.predict(s, x)


# =====================================================================
# combined per-arm fit and the integral evaluators
# =====================================================================


@dataclass(frozen=True)
class ArmOutcomeFit:
    """Everything the augmentation terms need for one arm."""

    arm: int
    index: IndexCoefficients
    density: ConditionalDensity
    coeffs: VaryingCoefficients
    grm_terms: Optional[Tuple[Term, ...]]
    vglm_terms: Optional[Tuple[Term, ...]]

    def index_values(self, data: Dataset) -> np.ndarray:
        """gamma'z for every record of ``data`` (any arm)."""
        if self.grm_terms is None:
            z = data.x
        else:
            z = np.column_stack([t.evaluate(data) for t in self.grm_terms])
        return z @ self.index.gamma

    def vglm_design(self, data: Dataset) -> np.ndarray:
        if self.vglm_terms is None:
            z = data.x
        else:
            z = np.column_stack([t.evaluate(data) for t in self.vglm_terms])
        return np.column_stack([np.ones(z.shape[0]), z])

    def psi_f_matrix(self, data: Dataset, grid: Grid, dtype=np.float64):
        """Conditional density psi_f(s_g; x_i) for all records x grid points."""
        t = self.index_values(data)
        return self.density.matrix(t, grid, dtype=dtype)

    def psi_m_matrix(self, data: Dataset, grid: Grid, dtype=np.float64) -> np.ndarray:
        """Regression prediction psi_m(s_g; x_i) for all records x grid points."""
        design = self.vglm_design(data).astype(dtype, copy=False)
        eta = design @ self.coeffs.beta.T.astype(dtype, copy=False)
        if self.coeffs.link == "logit":
            return expit(eta)
        return eta


@dataclass(frozen=True)
class OutcomeRegressionFit:
    """Per-arm nuisance fits sharing one grid and kernel configuration."""

    arm0: ArmOutcomeFit
    arm1: ArmOutcomeFit
    k: KernelConfig
    grid: Grid

    def arm(self, a: int) -> ArmOutcomeFit:
        return self.arm1 if a == 1 else self.arm0

    def zeta_g_vector(self, data: Dataset, g_values: np.ndarray, a: int,
                      dtype=np.float64) -> np.ndarray:
        """zeta_{a,g}(x_i) = integral of g(s) psi_f(s; x_i) ds for all i."""
        psi_f, _ = self.arm(a).psi_f_matrix(data, self.grid, dtype=dtype)
        wq = self.grid.trapezoid_weights() * g_values
        return psi_f @ wq.astype(dtype, copy=False)

    def zeta_vector(self, data: Dataset, a: int, dtype=np.float64) -> np.ndarray:
        """zeta_a(x_i) = integral of psi_m(s; x_i) psi_f(s; x_i) ds for all i."""
        psi_f, _ = self.arm(a).psi_f_matrix(data, self.grid, dtype=dtype)
        psi_mm = self.arm(a).psi_m_matrix(data, self.grid, dtype=dtype)
        wq = self.grid.trapezoid_weights().astype(dtype, copy=False)
        return np.einsum("ig,ig,g->i", psi_f, psi_mm, wq, optimize=True)


def zeta_integrals(fit: OutcomeRegressionFit, g, x: np.ndarray, a: int) -> Tuple[float, float]:
    """Both integral functionals at a single covariate vector.

    Returns (zeta_a_g, zeta_a) where the first integrates g(s) against the
    conditional density and the second integrates psi_m * psi_f. Single-probe
    convenience for fits on raw covariate columns; the vectorized paths on
    OutcomeRegressionFit serve term-based fits.
    """
    arm = fit.arm(a)
    if arm.grm_terms is not None or arm.vglm_terms is not None:
        raise ValueError("single-vector probe requires a fit on raw covariates")
    xv = np.atleast_2d(np.asarray(x, dtype=float))
    t = float(xv[0] @ arm.index.gamma)
    rows, _ = arm.density.weights_for(np.array([t]))
    ks = kernel_matrix(arm.density.s_arm, fit.grid.points, arm.density.h)
    psi_f_row = rows[0] @ ks
    design = np.column_stack([np.ones(1), xv])
    eta = (design @ arm.coeffs.beta.T)[0]
    psi_m_row = expit(eta) if arm.coeffs.link == "logit" else eta
    g_vals = g.g if hasattr(g, "g") else np.asarray(g, dtype=float)
    z_g = trapezoid(fit.grid, g_vals * psi_f_row)
    z_m = trapezoid(fit.grid, psi_m_row * psi_f_row)
    return float(z_g), float(z_m)


def fit_outcome_models(
    data: Dataset,
    k: KernelConfig,
    link: str = "identity",
    case_weights: Optional[np.ndarray] = None,
    grm_terms=None,
    vglm_terms=None,
    grid: Optional[Grid] = None,
    warm_from: Optional[OutcomeRegressionFit] = None,
    mrc_restarts: int = 20,
) -> OutcomeRegressionFit:
    """Fit both arms' nuisance models on a shared grid.

    ``grm_terms``/``vglm_terms`` take term strings or parsed terms; None uses
    the raw covariate columns. ``warm_from`` reuses a previous fit's index
    directions and bandwidths: the index is re-polished (not re-searched) and
    the index bandwidth is frozen, the appropriate mode for perturbation
    refits where the base configuration must stay fixed.
    """
    if isinstance(grm_terms, str):
        grm_terms = tuple(parse_terms(grm_terms))
    elif grm_terms is not None:
        grm_terms = tuple(grm_terms)
    if isinstance(vglm_terms, str):
        vglm_terms = tuple(parse_terms(vglm_terms))
    elif vglm_terms is not None:
        vglm_terms = tuple(vglm_terms)
    if grid is None:
        grid = k.make_grid(data.s)

    arms = []
    for a in (0, 1):
        warm_arm = warm_from.arm(a) if warm_from is not None else None
        index = fit_mrc(
            data, a,
            case_weights=case_weights,
            terms=grm_terms,
            restarts=mrc_restarts,
            warm_start=warm_arm.index.gamma if warm_arm is not None else None,
            polish_only=warm_arm is not None,
        )
        mask = data.arm_mask(a)
        if grm_terms is None:
            z_arm = data.x[mask]
        else:
            z_arm = np.column_stack([t.evaluate(data)[mask] for t in grm_terms])
        t_arm = z_arm @ index.gamma
        v_arm = (np.ones(mask.sum()) if case_weights is None
                 else np.asarray(case_weights, dtype=float)[mask])
        if warm_arm is not None:
            zeta = warm_arm.density.zeta
        elif k.index_bandwidth_zeta is not None:
            zeta = k.index_bandwidth_zeta
        else:
            zeta = index_bandwidth(t_arm, k.undersmooth_c0, case_weights=v_arm)
        density = ConditionalDensity(
            index=index, t_arm=t_arm, s_arm=data.s[mask], v_arm=v_arm,
            zeta=zeta, h=k.bandwidth_h,
        )
        coeffs = fit_vglm(
            data, a, k, link=link, case_weights=case_weights,
            terms=vglm_terms, grid=grid,
        )
        arms.append(ArmOutcomeFit(
            arm=a, index=index, density=density, coeffs=coeffs,
            grm_terms=grm_terms, vglm_terms=vglm_terms,
        ))
    return OutcomeRegressionFit(arm0=arms[0], arm1=arms[1], k=k, grid=grid)
