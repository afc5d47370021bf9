"""Perturbation resampling: weight law, determinism, and interval contracts."""

import numpy as np
import pytest

from surropte.errors import ResamplingUnstableError
from surropte.kernels import Grid
from surropte.pipeline import estimate_ipw
from surropte.resampling import (
    PerturbationConfig,
    PteReport,
    perturb_weights,
    replicates_frame,
    run_resampling,
)

from conftest import make_dataset

PS = "x1, x2"


class TestPerturbWeights:
    def test_mean_is_exactly_one(self):
        rng = np.random.default_rng(0)
        for n in (5, 100, 1000):
            v = perturb_weights(n, rng)
            assert v.mean() == pytest.approx(1.0, abs=1e-12)
            assert np.all(v >= 0)

    def test_variance_near_unit_exponential(self):
        rng = np.random.default_rng(1)
        v = perturb_weights(100_000, rng)
        assert 0.98 < v.var() < 1.02

    def test_empty_draw_rejected(self):
        with pytest.raises(ValueError):
            perturb_weights(0, np.random.default_rng(0))


class TestConfigValidation:
    def test_b_floor(self):
        with pytest.raises(ValueError):
            PerturbationConfig(B=1)

    @pytest.mark.parametrize("level", [0.0, 1.0, -0.2, 1.7])
    def test_ci_level_bounds(self, level):
        with pytest.raises(ValueError):
            PerturbationConfig(B=10, ci_level=level)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            PerturbationConfig(B=10, ci_method="bootstrap-t")

    def test_unknown_distribution(self):
        with pytest.raises(ValueError):
            PerturbationConfig(B=10, distribution="gamma")


@pytest.fixture(scope="module")
def rdata():
    return make_dataset(n=150, seed=6)


class TestRunResampling:
    def test_unit_weights_reproduce_base(self, rdata):
        pc = PerturbationConfig(B=4, seed=1)
        rep = run_resampling(
            rdata, "ipw", pc, ps_basis=PS,
            weight_sampler=lambda n, rng: np.ones(n),
        )
        base = rep.point.pte
        assert np.allclose(rep.replicates[:, 2], base, atol=1e-12)
        assert rep.se_pte == pytest.approx(0.0, abs=1e-12)
        assert rep.n_failed == 0

    def test_seeded_runs_are_identical(self, rdata):
        pc = PerturbationConfig(B=12, seed=77)
        r1 = run_resampling(rdata, "ipw", pc, ps_basis=PS)
        r2 = run_resampling(rdata, "ipw", pc, ps_basis=PS)
        assert np.array_equal(r1.replicates, r2.replicates)
        assert r1.ci_pte == r2.ci_pte
        assert r1.statuses == r2.statuses

    def test_seed_changes_replicates(self, rdata):
        r1 = run_resampling(rdata, "ipw", PerturbationConfig(B=6, seed=1), ps_basis=PS)
        r2 = run_resampling(rdata, "ipw", PerturbationConfig(B=6, seed=2), ps_basis=PS)
        assert not np.array_equal(r1.replicates, r2.replicates)

    def test_precomputed_base_matches_internal_fit(self, rdata):
        pc = PerturbationConfig(B=6, seed=3)
        base = estimate_ipw(rdata, PS)
        r1 = run_resampling(rdata, "ipw", pc, base=base, ps_basis=PS)
        r2 = run_resampling(rdata, "ipw", pc, ps_basis=PS)
        assert np.array_equal(r1.replicates, r2.replicates)
        assert r1.point.pte == r2.point.pte

    def test_normal_interval_from_base_and_spread(self, rdata):
        pc = PerturbationConfig(B=24, seed=9)
        rep = run_resampling(rdata, "ipw", pc, ps_basis=PS)
        ok = np.isfinite(rep.replicates[:, 2])
        se = rep.replicates[ok, 2].std(ddof=1)
        assert rep.se_pte == pytest.approx(se, abs=1e-12)
        half = 1.959963984540054 * se
        assert rep.ci_pte[0] == pytest.approx(rep.point.pte - half, abs=1e-10)
        assert rep.ci_pte[1] == pytest.approx(rep.point.pte + half, abs=1e-10)

    def test_percentile_interval_from_quantiles(self, rdata):
        pc = PerturbationConfig(B=24, seed=9, ci_method="percentile", ci_level=0.9)
        rep = run_resampling(rdata, "ipw", pc, ps_basis=PS)
        ok = np.isfinite(rep.replicates[:, 2])
        lo, hi = np.quantile(rep.replicates[ok, 2], [0.05, 0.95])
        assert rep.ci_pte == (pytest.approx(lo, abs=1e-12), pytest.approx(hi, abs=1e-12))
        assert rep.ci_pte[0] <= rep.ci_pte[1]

    def test_minimal_replicate_count(self, rdata):
        rep = run_resampling(rdata, "ipw", PerturbationConfig(B=2, seed=5), ps_basis=PS)
        assert rep.replicates.shape == (2, 3)

    def test_collect_g_stores_curves_on_base_grid(self, rdata):
        pc = PerturbationConfig(B=3, seed=4)
        base = estimate_ipw(rdata, PS)
        rep = run_resampling(rdata, "ipw", pc, base=base, collect_g=True, ps_basis=PS)
        assert rep.g_replicates.shape == (3, base.grid.points.size)
        ok = np.isfinite(rep.replicates[:, 2])
        assert np.all(np.isfinite(rep.g_replicates[ok]))

    def test_without_collect_g_no_curves(self, rdata):
        rep = run_resampling(rdata, "ipw", PerturbationConfig(B=2, seed=4), ps_basis=PS)
        assert rep.g_replicates is None

    def test_unknown_estimator_rejected(self, rdata):
        with pytest.raises(ValueError):
            run_resampling(rdata, "gmm", PerturbationConfig(B=2, seed=0), ps_basis=PS)


class TestFailureHandling:
    @staticmethod
    def _sampler_failing_on(bad_reps):
        # zeroing out one treatment arm forces a recoverable estimation error
        def sampler(n, rng):
            v = perturb_weights(n, rng)
            b = sampler.calls
            sampler.calls += 1
            if b in bad_reps:
                v = np.zeros(n)
                v[:2] = 1.0
            return v

        sampler.calls = 0
        return sampler

    def test_failed_replicates_dropped_and_counted(self, rdata):
        pc = PerturbationConfig(B=10, seed=13)
        rep = run_resampling(
            rdata, "ipw", pc, ps_basis=PS,
            weight_sampler=self._sampler_failing_on({2, 7}),
        )
        assert rep.n_failed == 2
        assert rep.n_ok == 8
        assert np.isnan(rep.replicates[2, 2]) and np.isnan(rep.replicates[7, 2])
        assert sum(s != "ok" for s in rep.statuses) == 2

    def test_too_many_failures_abort(self, rdata):
        pc = PerturbationConfig(B=10, seed=13)
        with pytest.raises(ResamplingUnstableError):
            run_resampling(
                rdata, "ipw", pc, ps_basis=PS,
                weight_sampler=self._sampler_failing_on({1, 3, 5, 7, 9}),
            )


class TestReportShape:
    def test_inverted_interval_rejected(self):
        from surropte.ipw import EffectEstimates

        eff = EffectEstimates(
            delta=1.0, delta_g=0.5, pte=0.5,
            mu0=0.0, mu1=1.0, mu0_g=0.0, mu1_g=0.5,
        )
        with pytest.raises(ValueError):
            PteReport(
                point=eff, se_pte=0.1, se_delta=0.1, se_delta_g=0.1,
                ci_pte=(0.7, 0.3), replicates=np.zeros((2, 3)),
                statuses=("ok", "ok"), n_failed=0,
            )

    def test_replicates_frame_columns(self, rdata):
        rep = run_resampling(rdata, "ipw", PerturbationConfig(B=5, seed=2), ps_basis=PS)
        frame = replicates_frame(rep)
        assert list(frame.columns) == ["rep", "delta", "delta_g", "pte", "status"]
        assert len(frame) == 5
        assert (frame["status"] == "ok").sum() == rep.n_ok
