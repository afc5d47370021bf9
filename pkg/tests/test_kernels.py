import numpy as np
import pytest

from surropte.errors import (
    DimensionError,
    InvalidBandwidthError,
    SampleTooSmallError,
)
from surropte.kernels import (
    Grid,
    KernelConfig,
    default_bandwidth,
    gaussian_kernel,
    kernel_matrix,
    scaled_bandwidth,
    trapezoid,
)


class TestBandwidthRule:
    def test_pinned_values(self):
        # undersmoothed rule at the two benchmark sample sizes
        assert abs(default_bandwidth(1000, 0.11) - 0.12455) < 2e-4
        assert abs(default_bandwidth(400, 0.11) - 0.16557) < 2e-4

    def test_formula(self):
        for n in (50, 400, 1000, 10_000):
            for c0 in (0.05, 0.11, 0.2):
                assert default_bandwidth(n, c0) == pytest.approx(
                    1.06 * n ** (-0.2 - c0), rel=1e-12
                )

    def test_scott_reduction_at_zero(self):
        assert default_bandwidth(500, 0.0) == pytest.approx(1.06 * 500 ** -0.2)

    def test_monotone_in_n(self):
        values = [default_bandwidth(n) for n in (100, 200, 400, 800)]
        assert values == sorted(values, reverse=True)

    def test_tiny_sample_rejected(self):
        with pytest.raises(SampleTooSmallError):
            default_bandwidth(1)

    def test_scaled_multiplies_by_sd(self):
        rng = np.random.default_rng(0)
        v = rng.normal(scale=2.5, size=400)
        assert scaled_bandwidth(v) == pytest.approx(
            np.std(v) * default_bandwidth(400), rel=1e-12
        )

    def test_scaled_constant_input_rejected(self):
        with pytest.raises(InvalidBandwidthError):
            scaled_bandwidth(np.ones(50))


class TestGaussianKernel:
    def test_symmetry_and_peak(self):
        u = np.linspace(-3, 3, 101)
        k = gaussian_kernel(u, 0.7)
        assert np.allclose(k, k[::-1])
        assert k.argmax() == 50

    def test_bandwidth_scaling(self):
        u = np.linspace(-2, 2, 41)
        h = 0.37
        assert np.allclose(gaussian_kernel(u, h), gaussian_kernel(u / h, 1.0) / h)

    def test_integrates_to_one(self):
        for h in (0.3, 1.0, 2.0):
            grid = Grid.from_support(-8.0 * h, 8.0 * h, size=2001, padding=0.0)
            k = gaussian_kernel(grid.points, h)
            assert trapezoid(grid, k) == pytest.approx(1.0, abs=1e-6)

    def test_nonpositive_bandwidth_rejected(self):
        with pytest.raises(InvalidBandwidthError):
            gaussian_kernel(np.zeros(3), 0.0)


class TestKernelMatrix:
    def test_matches_pairwise_kernel(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=30)
        c = np.linspace(-2, 2, 11)
        km = kernel_matrix(v, c, 0.5)
        direct = gaussian_kernel(v[:, None] - c[None, :], 0.5)
        # identical except where the deep-tail flush zeroed subnormals
        mask = km != 0.0
        assert np.allclose(km[mask], direct[mask], rtol=1e-12)

    def test_deep_tail_flushed_to_exact_zero(self):
        km = kernel_matrix(np.array([0.0]), np.array([50.0]), 0.5)
        assert km[0, 0] == 0.0

    def test_dtype_float32(self):
        km = kernel_matrix(np.zeros(4), np.zeros(3), 1.0, dtype=np.float32)
        assert km.dtype == np.float32


class TestGrid:
    def test_from_support_padding(self):
        g = Grid.from_support(0.0, 10.0, size=101, padding=0.05)
        assert g.points[0] == pytest.approx(-0.5)
        assert g.points[-1] == pytest.approx(10.5)
        assert g.size == 101

    def test_uneven_spacing_rejected(self):
        with pytest.raises(DimensionError):
            Grid.from_points([0.0, 1.0, 3.0])

    def test_decreasing_rejected(self):
        with pytest.raises(DimensionError):
            Grid.from_points([1.0, 0.0, -1.0])

    def test_interp_constant_beyond_edges(self):
        g = Grid.from_support(0.0, 1.0, size=11, padding=0.0)
        curve = g.points ** 2
        assert g.interp(curve, -5.0) == pytest.approx(curve[0])
        assert g.interp(curve, 5.0) == pytest.approx(curve[-1])

    def test_interp_exact_on_nodes(self):
        g = Grid.from_support(-1.0, 1.0, size=21, padding=0.0)
        curve = np.sin(g.points)
        assert np.allclose(g.interp(curve, g.points), curve)


class TestTrapezoid:
    def test_linear_functions_exact(self):
        g = Grid.from_support(2.0, 7.0, size=51, padding=0.0)
        vals = 3.0 * g.points - 1.0
        exact = 0.5 * 3.0 * (49.0 - 4.0) - 5.0
        assert trapezoid(g, vals) == pytest.approx(exact, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_linearity(self, seed):
        rng = np.random.default_rng(seed)
        g = Grid.from_support(-1.0, 4.0, size=77, padding=0.0)
        f = rng.normal(size=g.size)
        h = rng.normal(size=g.size)
        a, b = rng.normal(size=2)
        combined = trapezoid(g, a * f + b * h)
        assert combined == pytest.approx(
            a * trapezoid(g, f) + b * trapezoid(g, h), rel=1e-9, abs=1e-12
        )

    def test_weights_reproduce_quadrature(self):
        rng = np.random.default_rng(9)
        g = Grid.from_support(0.0, 1.0, size=31, padding=0.0)
        vals = rng.normal(size=g.size)
        assert g.trapezoid_weights() @ vals == pytest.approx(trapezoid(g, vals))

    def test_shape_mismatch_rejected(self):
        g = Grid.from_support(0.0, 1.0, size=11, padding=0.0)
        with pytest.raises(DimensionError):
            trapezoid(g, np.zeros(10))


class TestKernelConfig:
    def test_from_surrogate_carries_bandwidth(self):
        rng = np.random.default_rng(2)
        s = rng.normal(scale=1.7, size=500)
        k = KernelConfig.from_surrogate(s, c0=0.11)
        assert k.bandwidth_h == pytest.approx(scaled_bandwidth(s, c0=0.11))
        assert k.undersmooth_c0 == 0.11

    def test_c0_range_enforced(self):
        with pytest.raises(InvalidBandwidthError):
            KernelConfig(bandwidth_h=0.1, undersmooth_c0=0.31)
        with pytest.raises(InvalidBandwidthError):
            KernelConfig(bandwidth_h=0.1, undersmooth_c0=0.0)

    def test_grid_size_must_be_odd(self):
        with pytest.raises(InvalidBandwidthError):
            KernelConfig(bandwidth_h=0.1, grid_size=100)
        with pytest.raises(InvalidBandwidthError):
            KernelConfig(bandwidth_h=0.1, grid_size=49)

    def test_make_grid_covers_sample(self):
        rng = np.random.default_rng(3)
        s = rng.normal(size=200)
        k = KernelConfig.from_surrogate(s)
        g = k.make_grid(s)
        assert g.points[0] < s.min() and g.points[-1] > s.max()
        assert g.size == k.grid_size
