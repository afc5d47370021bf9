"""Propensity-score model: basis construction, logistic fit, IPW weights."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from .data import Dataset
from .design import Term, build_columns, terms_from, terms_label
from .errors import SchemaError, SeparationError, SingularDesignError

#: Default clipping interval applied to fitted probabilities before inversion.
DEFAULT_CLIP = (0.01, 0.99)

_MAX_ABS_STD_COEF = 30.0
_SCORE_TOL = 1e-8
_LL_REL_TOL = 1e-10
_MAX_ITER = 100


@dataclass(frozen=True)
class BasisSpec:
    """Propensity design: an intercept plus a list of terms over covariates."""

    terms: Tuple[Term, ...]
    intercept: bool = True

    @classmethod
    def from_string(cls, text: str, intercept: bool = True) -> "BasisSpec":
        return cls(terms=terms_from(text), intercept=intercept)

    @classmethod
    def linear(cls, colnames) -> "BasisSpec":
        """Main-effects basis over the given covariate columns."""
        return cls(terms=terms_from(list(colnames)))

    def build(self, data: Dataset) -> np.ndarray:
        cols = build_columns(data, self.terms)
        if self.intercept:
            return np.column_stack([np.ones(data.n), cols])
        if cols.shape[1] == 0:
            raise SchemaError("basis has no intercept and no terms")
        return cols

    def labels(self) -> Tuple[str, ...]:
        names = tuple(t.label() for t in self.terms)
        return (("(intercept)",) if self.intercept else ()) + names

    def to_string(self) -> str:
        return terms_label(self.terms)


@dataclass(frozen=True)
class PropensityFit:
    """Fitted logistic propensity model."""

    basis: BasisSpec
    alpha: np.ndarray
    fitted_pi1: np.ndarray
    n_iter: int
    max_score: float
    term_labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        pi = np.asarray(self.fitted_pi1, dtype=float)
        # guard float saturation so downstream ratios stay finite pre-clip
        pi = np.clip(pi, 1e-12, 1.0 - 1e-12)
        pi.flags.writeable = False
        object.__setattr__(self, "fitted_pi1", pi)


def _weighted_loglik(eta: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    # log expit(eta) = -log1p(exp(-eta)) computed stably in both tails
    return float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))


def fit_logistic(
    design: np.ndarray,
    response: np.ndarray,
    case_weights: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, int, float]:
    """Case-weighted logistic MLE by Newton-Raphson with step halving.

    Args:
        design: (n, q) matrix; a leading intercept column is the caller's
            responsibility.
        response: binary 0/1 vector, shape (n,).
        case_weights: nonnegative weights, default all ones. Zero-weight rows
            are inert.

    Returns:
        (alpha, fitted_p, n_iter, max_score): coefficients on the original
        column scale, fitted probabilities, Newton iterations used, and the
        final max absolute score component.

    Raises:
        SingularDesignError: design rank deficient on the weighted sample.
        SeparationError: coefficients diverging (quasi-separated data).
    """
    Z = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    n, q = Z.shape
    w = np.ones(n) if case_weights is None else np.asarray(case_weights, dtype=float)
    if np.any(w < 0):
        raise SchemaError("case weights must be nonnegative")
    wsum = w.sum()
    if wsum <= 0:
        raise SingularDesignError("all case weights are zero")

    # standardize non-constant columns on the weighted sample; keeps Newton
    # well-scaled and makes the |alpha|>30 separation guard meaningful
    mean = (w @ Z) / wsum
    var = (w @ (Z - mean) ** 2) / wsum
    sd = np.sqrt(var)
    is_const = sd <= 1e-12
    scale = np.where(is_const, 1.0, sd)
    center = np.where(is_const, 0.0, mean)
    ones_col = np.where(np.all(Z == 1.0, axis=0))[0]
    if ones_col.size == 0:
        # no intercept column to absorb the centering constant
        center = np.zeros_like(center)
    Zs = (Z - center) / scale

    active = w > 0
    if np.linalg.matrix_rank(Zs[active] * np.sqrt(w[active, None])) < q:
        raise SingularDesignError("propensity design is rank deficient on the weighted sample")

    beta = np.zeros(q)
    eta = Zs @ beta
    ll = _weighted_loglik(eta, y, w)
    max_score = np.inf
    for it in range(1, _MAX_ITER + 1):
        mu = expit(eta)
        score = Zs.T @ (w * (y - mu))
        max_score = float(np.max(np.abs(score)))
        if max_score < _SCORE_TOL:
            break
        h_diag = w * mu * (1.0 - mu)
        H = Zs.T @ (Zs * h_diag[:, None])
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, score, rcond=None)[0]
        new_beta = beta + step
        new_eta = Zs @ new_beta
        new_ll = _weighted_loglik(new_eta, y, w)
        halvings = 0
        while new_ll < ll and halvings < 40:
            step *= 0.5
            new_beta = beta + step
            new_eta = Zs @ new_beta
            new_ll = _weighted_loglik(new_eta, y, w)
            halvings += 1
        if np.max(np.abs(new_beta)) > _MAX_ABS_STD_COEF:
            raise SeparationError(
                "logistic coefficients diverging (|alpha| > "
                f"{_MAX_ABS_STD_COEF:g} on the standardized design); "
                "data are likely separated"
            )
        rel_change = abs(new_ll - ll) / (abs(ll) + 1e-12)
        beta, eta, ll = new_beta, new_eta, new_ll
        if rel_change < _LL_REL_TOL:
            mu = expit(eta)
            max_score = float(np.max(np.abs(Zs.T @ (w * (y - mu)))))
            break
    else:
        raise SeparationError(f"logistic fit did not converge in {_MAX_ITER} iterations")

    alpha = beta / scale
    shift = float(np.sum(beta * center / scale))
    if ones_col.size:
        alpha[ones_col[0]] -= shift
    fitted = expit(Z @ alpha)
    return alpha, fitted, it, max_score


def fit_propensity(
    data: Dataset,
    basis: BasisSpec,
    case_weights: Optional[np.ndarray] = None,
) -> PropensityFit:
    """Fit P(A=1 | X) = expit(alpha' b(X)) for the given basis."""
    design = basis.build(data)
    alpha, fitted, n_iter, max_score = fit_logistic(design, data.a, case_weights)
    return PropensityFit(
        basis=basis,
        alpha=alpha,
        fitted_pi1=fitted,
        n_iter=n_iter,
        max_score=max_score,
        term_labels=basis.labels(),
    )


def ipw_weights(
    fit_or_pi1,
    a: np.ndarray,
    clip: Tuple[float, float] = DEFAULT_CLIP,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-arm inverse-probability weights (omega_0, omega_1).

    omega_1i = A_i / pi1(X_i), omega_0i = (1 - A_i) / (1 - pi1(X_i)), with
    pi1 clipped to ``clip`` before inversion.
    """
    pi1 = fit_or_pi1.fitted_pi1 if isinstance(fit_or_pi1, PropensityFit) else np.asarray(fit_or_pi1)
    lo, hi = clip
    if not 0.0 < lo < hi < 1.0:
        raise SchemaError(f"clip interval must satisfy 0 < lo < hi < 1, got {clip}")
    pi1 = np.clip(pi1, lo, hi)
    a = np.asarray(a)
    w1 = np.where(a == 1, 1.0 / pi1, 0.0)
    w0 = np.where(a == 0, 1.0 / (1.0 - pi1), 0.0)
    return w0, w1
