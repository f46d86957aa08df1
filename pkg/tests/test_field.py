import numpy as np
import pytest
from scipy import integrate, special

from rwns.errors import ConfigError, GridMismatch, PeriodizationError
from rwns.field import (
    ComplexField,
    KernelFamily,
    KernelSpec,
    ModelParams,
    Nonlinearity,
    PeriodicGrid,
    RealField,
    kernel_density,
    kernel_fourier,
    kernel_multiplier,
    kernel_second_moment,
    sample_kernel,
)

FAMILIES = list(KernelFamily)


def quad_fourier_1d(spec, k):
    # even kernel: K^(k) = 2 int_0^inf cos(kz) K(z) dz
    upper = spec.shape if spec.family is KernelFamily.TOPHAT else 40 * spec.shape
    val, _ = integrate.quad(lambda z: 2 * np.cos(k * z) * kernel_density(spec, z), 0, upper, limit=400)
    return val


def quad_fourier_2d(spec, k):
    upper = spec.shape if spec.family is KernelFamily.TOPHAT else 40 * spec.shape
    f = lambda r: 2 * np.pi * r * special.j0(k * r) * kernel_density(spec, r, 2)
    val, _ = integrate.quad(f, 0, upper, limit=400)
    return val


def quad_moment(spec, dim):
    upper = spec.shape if spec.family is KernelFamily.TOPHAT else 60 * spec.shape
    if dim == 1:
        f = lambda z: 2 * z**2 * kernel_density(spec, z)
    else:
        f = lambda r: 2 * np.pi * r**3 * kernel_density(spec, r, 2)
    val, _ = integrate.quad(f, 0, upper, limit=400)
    return val


class TestGrid:
    def test_derived_quantities(self):
        g = PeriodicGrid(1, 16, 8.0)
        assert g.dx * g.n == g.length
        assert g.dk == pytest.approx(2 * np.pi / 8.0)
        k = np.sort(g.wavenumbers)
        assert k[0] == pytest.approx(-8 * g.dk)
        assert k[-1] == pytest.approx(7 * g.dk)
        # symmetric except the Nyquist mode
        assert np.allclose(k[1:], -k[1:][::-1])

    @pytest.mark.parametrize("n", [4, 12, 100])
    def test_rejects_bad_n(self, n):
        with pytest.raises(ConfigError):
            PeriodicGrid(1, n, 1.0)

    def test_rejects_dim_and_length(self):
        with pytest.raises(ConfigError):
            PeriodicGrid(3, 8, 1.0)
        with pytest.raises(ConfigError):
            PeriodicGrid(1, 8, 0.0)

    def test_lattice_index(self):
        g = PeriodicGrid(1, 32, 2 * np.pi)
        assert g.lattice_index(3.0) == 3
        assert g.wavenumbers[g.lattice_index(-5.0)] == pytest.approx(-5.0)
        assert g.lattice_index(0.5) is None
        assert g.lattice_index(40.0) is None

    def test_2d_shapes(self):
        g = PeriodicGrid(2, 8, 4.0)
        assert g.shape == (8, 8)
        assert g.k2.shape == (8, 8)
        assert g.cell == pytest.approx(g.dx**2)


class TestFields:
    def test_length_and_finiteness(self):
        g = PeriodicGrid(1, 8, 1.0)
        with pytest.raises(GridMismatch):
            ComplexField(g, np.zeros(7))
        bad = np.zeros(8, dtype=complex)
        bad[3] = np.nan
        with pytest.raises(ValueError):
            ComplexField(g, bad)
        with pytest.raises(ValueError):
            RealField(g, np.full(8, np.inf))

    def test_values_are_read_only(self):
        g = PeriodicGrid(1, 8, 1.0)
        f = ComplexField(g, np.ones(8))
        with pytest.raises(ValueError):
            f.values[0] = 2.0


class TestKernelFourier:
    @pytest.mark.parametrize(
        "family, shape, k, expected",
        [
            ("gaussian", 1.0, 0.0, 1.0),
            ("gaussian", 1.0, 1.0, np.exp(-0.5)),
            ("exponential", 1.0, 2.0, 0.2),
            ("tophat", 1.0, np.pi, 0.0),
        ],
    )
    def test_examples(self, family, shape, k, expected):
        assert kernel_fourier(KernelSpec(family, shape), k) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("family", FAMILIES)
    @pytest.mark.parametrize("k", [0.3, 1.0, 2.5])
    def test_matches_quadrature_1d(self, family, k):
        spec = KernelSpec(family, 1.3, 0.7)
        assert kernel_fourier(spec, k) == pytest.approx(quad_fourier_1d(spec, k), abs=1e-9)

    @pytest.mark.parametrize("family", FAMILIES)
    @pytest.mark.parametrize("k", [0.4, 1.7])
    def test_matches_quadrature_2d(self, family, k):
        spec = KernelSpec(family, 0.9)
        assert kernel_fourier(spec, k, dim=2) == pytest.approx(quad_fourier_2d(spec, k), abs=1e-8)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_mass_even_bounded(self, family):
        spec = KernelSpec(family, 0.8, 2.5)
        k = np.linspace(0, 20, 401)
        vals = kernel_fourier(spec, k)
        assert kernel_fourier(spec, 0.0) == pytest.approx(2.5, rel=1e-12)
        assert np.array_equal(vals, kernel_fourier(spec, -k))
        assert np.all(np.abs(vals) <= 2.5 * (1 + 1e-15))


class TestSecondMoment:
    @pytest.mark.parametrize(
        "family, shape, expected",
        [("gaussian", 2.0, 4.0), ("tophat", 1.0, 1 / 3), ("exponential", 1.0, 2.0)],
    )
    def test_examples(self, family, shape, expected):
        assert kernel_second_moment(KernelSpec(family, shape)) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_zero_mass(self, family):
        assert kernel_second_moment(KernelSpec(family, 1.0, 0.0)) == 0.0

    @pytest.mark.parametrize("family", FAMILIES)
    @pytest.mark.parametrize("dim", [1, 2])
    def test_matches_quadrature(self, family, dim):
        spec = KernelSpec(family, 0.7)
        assert kernel_second_moment(spec, dim) == pytest.approx(quad_moment(spec, dim), rel=1e-8)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_small_k_expansion(self, family):
        spec = KernelSpec(family, 1.2)
        mu2 = kernel_second_moment(spec)
        for x in (0.002, 0.005, 0.01):
            k = x / spec.shape
            lhs = abs(spec.mass - kernel_fourier(spec, k) - k**2 * mu2 / 2)
            assert lhs <= 1e-4 * k**2 * mu2

    # next-order coefficients c4 in mass - K^ = x^2 mu2/(2 s^2) - c4 x^4, x = k s
    @pytest.mark.parametrize("family, c4", [("gaussian", 1 / 8), ("exponential", 1.0), ("tophat", 1 / 120)])
    def test_small_k_remainder_is_quartic(self, family, c4):
        spec = KernelSpec(family, 1.2)
        mu2 = kernel_second_moment(spec)
        for x in (0.01, 0.02, 0.05):
            k = x / spec.shape
            rem = spec.mass - kernel_fourier(spec, k) - k**2 * mu2 / 2
            assert rem == pytest.approx(-c4 * x**4, rel=0.02)


class TestSampleKernel:
    def test_gaussian_sum(self):
        g = PeriodicGrid(1, 256, 40.0)
        kv = sample_kernel(KernelSpec("gaussian", 1.0), g)
        assert kv.values.sum() * g.dx == pytest.approx(1.0, rel=1e-8)

    def test_gaussian_matches_pointwise_image_sum(self):
        g = PeriodicGrid(1, 256, 40.0)
        spec = KernelSpec("gaussian", 1.0)
        z = g.x
        direct = sum(kernel_density(spec, z + m * g.length) for m in range(-3, 4))
        assert np.max(np.abs(sample_kernel(spec, g).values - direct)) < 1e-12

    def test_zero_mass(self):
        g = PeriodicGrid(1, 64, 40.0)
        assert np.all(sample_kernel(KernelSpec("tophat", 1.0, 0.0), g).values == 0)

    def test_wide_kernel_rejected(self):
        with pytest.raises(PeriodizationError):
            sample_kernel(KernelSpec("gaussian", 15.0), PeriodicGrid(1, 256, 40.0))

    @pytest.mark.parametrize("family", FAMILIES)
    @pytest.mark.parametrize("dim", [1, 2])
    def test_poisson_consistency(self, family, dim):
        g = PeriodicGrid(dim, 64, 40.0)
        spec = KernelSpec(family, 1.1, 0.6)
        dft = np.fft.fftn(sample_kernel(spec, g).values).real * g.cell
        assert np.allclose(dft, kernel_multiplier(spec, g), rtol=1e-6, atol=1e-12)


class TestModelParams:
    def test_weight_floor(self):
        g = PeriodicGrid(1, 8, 1.0)
        with pytest.raises(ConfigError):
            ModelParams(w=RealField(g, np.linspace(-1, 1, 8)))
        with pytest.raises(ConfigError):
            ModelParams(w=0.0)

    def test_mixed_grids(self):
        a, b = PeriodicGrid(1, 8, 1.0), PeriodicGrid(1, 16, 1.0)
        with pytest.raises(GridMismatch):
            ModelParams(w=RealField.constant(a, 1.0), u=RealField.constant(b, 0.0))

    def test_heterogeneous_w0_is_mean(self):
        g = PeriodicGrid(1, 8, 1.0)
        w = RealField(g, 1 + 0.5 * np.cos(2 * np.pi * g.x))
        p = ModelParams(w=w)
        assert not p.homogeneous
        assert p.w0 == pytest.approx(1.0)
        assert p.w_min == pytest.approx(0.5)

    def test_subcritical_bound(self):
        Nonlinearity(5.0).check_subcritical(2)
        with pytest.raises(ConfigError):
            Nonlinearity(-1.0)

    def test_kernel_spec_validation(self):
        with pytest.raises(ConfigError):
            KernelSpec("gaussian", 0.0)
        with pytest.raises(ConfigError):
            KernelSpec("gaussian", 1.0, -1.0)
        with pytest.raises(ConfigError):
            KernelSpec("lorentzian", 1.0)
