"""Logistic propensity fitting checked against a brute-force likelihood grid."""

import numpy as np
import pytest
from scipy.special import expit

from surropte.data import Dataset
from surropte.errors import SchemaError, SeparationError, SingularDesignError
from surropte.propensity import (
    DEFAULT_CLIP,
    BasisSpec,
    fit_logistic,
    fit_propensity,
    ipw_weights,
)


def _oracle_data():
    rng = np.random.default_rng(42)
    n = 80
    x = rng.normal(size=n)
    y = (rng.random(n) < expit(0.3 - 0.8 * x)).astype(float)
    return x, y


def _grid_argmax(x, y):
    """Two-parameter MLE located by successively refined likelihood grids.

    Shares no code with the Newton fit: the log-likelihood is written out
    directly and maximized by exhaustive evaluation, 61 points per axis,
    halving windows 3.0 -> 0.2 -> 0.02 so the final spacing (6.7e-4) sits
    well inside the comparison tolerance.
    """
    center = np.zeros(2)
    for half in (3.0, 0.2, 0.02):
        a0s = np.linspace(center[0] - half, center[0] + half, 61)
        a1s = np.linspace(center[1] - half, center[1] + half, 61)
        A0, A1 = np.meshgrid(a0s, a1s, indexing="ij")
        eta = A0[..., None] + A1[..., None] * x[None, None, :]
        ll = np.sum(y[None, None, :] * eta - np.logaddexp(0.0, eta), axis=-1)
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        center = np.array([a0s[i], a1s[j]])
    return center


class TestGridOracle:
    def test_newton_matches_likelihood_grid(self):
        x, y = _oracle_data()
        oracle = _grid_argmax(x, y)
        Z = np.column_stack([np.ones(x.size), x])
        alpha, fitted, n_iter, max_score = fit_logistic(Z, y)
        assert np.all(np.abs(alpha - oracle) < 2e-3)
        assert max_score < 1e-8

    def test_pinned_coefficients(self):
        # frozen from the grid comparison above; catches silent regressions
        x, y = _oracle_data()
        Z = np.column_stack([np.ones(x.size), x])
        alpha, _, _, _ = fit_logistic(Z, y)
        assert np.allclose(alpha, [0.56248008, -0.68168253], atol=1e-6)

    def test_score_equations_hold_at_optimum(self):
        x, y = _oracle_data()
        Z = np.column_stack([np.ones(x.size), x])
        alpha, fitted, _, _ = fit_logistic(Z, y)
        score = Z.T @ (y - fitted)
        assert np.max(np.abs(score)) < 1e-6


class TestCaseWeights:
    def test_integer_weights_equal_duplicated_rows(self):
        rng = np.random.default_rng(7)
        n = 60
        x = rng.normal(size=(n, 2))
        y = (rng.random(n) < expit(0.2 + 0.5 * x[:, 0] - 0.3 * x[:, 1])).astype(float)
        w = rng.integers(1, 4, size=n).astype(float)

        Z = np.column_stack([np.ones(n), x])
        alpha_w, _, _, _ = fit_logistic(Z, y, case_weights=w)

        reps = w.astype(int)
        Zd = np.repeat(Z, reps, axis=0)
        yd = np.repeat(y, reps)
        alpha_d, _, _, _ = fit_logistic(Zd, yd)
        assert np.allclose(alpha_w, alpha_d, atol=1e-8)

    def test_zero_weight_rows_are_inert(self):
        rng = np.random.default_rng(11)
        n = 70
        x = rng.normal(size=n)
        y = (rng.random(n) < expit(0.1 + 0.6 * x)).astype(float)
        w = np.ones(n)
        w[:10] = 0.0

        Z = np.column_stack([np.ones(n), x])
        alpha_ref, _, _, _ = fit_logistic(Z, y, case_weights=w)

        # corrupt the zero-weight rows arbitrarily
        x2 = x.copy()
        x2[:10] = 99.0
        y2 = y.copy()
        y2[:10] = 1.0 - y2[:10]
        Z2 = np.column_stack([np.ones(n), x2])
        alpha2, _, _, _ = fit_logistic(Z2, y2, case_weights=w)
        assert np.allclose(alpha_ref, alpha2, atol=1e-10)

    def test_negative_weights_rejected(self):
        x, y = _oracle_data()
        Z = np.column_stack([np.ones(x.size), x])
        w = np.ones(x.size)
        w[3] = -0.5
        with pytest.raises(SchemaError):
            fit_logistic(Z, y, case_weights=w)

    def test_all_zero_weights_rejected(self):
        x, y = _oracle_data()
        Z = np.column_stack([np.ones(x.size), x])
        with pytest.raises(SingularDesignError):
            fit_logistic(Z, y, case_weights=np.zeros(x.size))


class TestDegenerateInputs:
    def test_separated_data_raises(self):
        x = np.linspace(-2, 2, 50)
        y = (x > 0).astype(float)
        Z = np.column_stack([np.ones(50), x])
        with pytest.raises(SeparationError):
            fit_logistic(Z, y)

    def test_duplicate_column_raises(self):
        x, y = _oracle_data()
        Z = np.column_stack([np.ones(x.size), x, x])
        with pytest.raises(SingularDesignError):
            fit_logistic(Z, y)

    def test_constant_covariate_with_intercept_raises(self):
        x, y = _oracle_data()
        Z = np.column_stack([np.ones(x.size), np.full(x.size, 2.5)])
        with pytest.raises(SingularDesignError):
            fit_logistic(Z, y)


def test_recovers_known_coefficients():
    rng = np.random.default_rng(314)
    n = 20000
    x = rng.normal(size=(n, 2))
    truth = np.array([-0.3, 0.8, -0.5])
    eta = truth[0] + x @ truth[1:]
    y = (rng.random(n) < expit(eta)).astype(float)
    Z = np.column_stack([np.ones(n), x])
    alpha, _, _, _ = fit_logistic(Z, y)
    assert np.all(np.abs(alpha - truth) < 0.06)


def test_no_intercept_design_fits_slope_only():
    rng = np.random.default_rng(5)
    n = 300
    x = rng.normal(size=n)
    y = (rng.random(n) < expit(1.1 * x)).astype(float)
    alpha, fitted, _, _ = fit_logistic(x[:, None], y)
    assert alpha.shape == (1,)
    assert np.allclose(fitted, expit(x * alpha[0]))


class TestBasisSpec:
    def test_from_string_and_labels(self):
        b = BasisSpec.from_string("x1, x2, x1*x2")
        assert b.labels() == ("(intercept)", "x1", "x2", "x1*x2")

    def test_linear_helper(self):
        b = BasisSpec.linear(["x1", "x3"])
        assert b.to_string() == "x1, x3"

    def test_build_shapes(self, small_data):
        b = BasisSpec.from_string("x1, x2")
        Z = b.build(small_data)
        assert Z.shape == (small_data.n, 3)
        assert np.all(Z[:, 0] == 1.0)
        assert np.allclose(Z[:, 1], small_data.column("x1"))

    def test_empty_no_intercept_rejected(self, small_data):
        b = BasisSpec(terms=(), intercept=False)
        with pytest.raises(SchemaError):
            b.build(small_data)

    def test_intercept_only_build(self, small_data):
        b = BasisSpec(terms=())
        Z = b.build(small_data)
        assert Z.shape == (small_data.n, 1)


def test_fit_propensity_wires_basis(small_data):
    fit = fit_propensity(small_data, BasisSpec.from_string("x1, x2"))
    assert fit.alpha.shape == (3,)
    assert fit.fitted_pi1.shape == (small_data.n,)
    assert np.all((fit.fitted_pi1 > 0) & (fit.fitted_pi1 < 1))
    assert fit.term_labels == ("(intercept)", "x1", "x2")
    assert not fit.fitted_pi1.flags.writeable


class TestIpwWeights:
    def test_structure(self):
        pi = np.array([0.2, 0.5, 0.8, 0.4])
        a = np.array([1, 0, 1, 0])
        w0, w1 = ipw_weights(pi, a)
        assert np.allclose(w1, [5.0, 0.0, 1.25, 0.0])
        assert np.allclose(w0, [0.0, 2.0, 0.0, 1.0 / 0.6])

    def test_clipping_applied(self):
        pi = np.array([0.001, 0.999])
        a = np.array([1, 0])
        w0, w1 = ipw_weights(pi, a, clip=(0.05, 0.95))
        assert w1[0] == pytest.approx(1.0 / 0.05)
        assert w0[1] == pytest.approx(1.0 / 0.05)

    def test_default_clip_bounds(self):
        assert DEFAULT_CLIP == (0.01, 0.99)

    @pytest.mark.parametrize("clip", [(0.0, 0.9), (0.5, 0.5), (0.6, 0.4), (0.1, 1.0)])
    def test_bad_clip_rejected(self, clip):
        with pytest.raises(SchemaError):
            ipw_weights(np.array([0.5]), np.array([1]), clip=clip)

    def test_accepts_fit_object(self, small_data):
        fit = fit_propensity(small_data, BasisSpec.from_string("x1, x2"))
        w0, w1 = ipw_weights(fit, small_data.a)
        assert np.all(w1[small_data.a == 0] == 0.0)
        assert np.all(w0[small_data.a == 1] == 0.0)
        assert np.all(w1[small_data.a == 1] > 0)
