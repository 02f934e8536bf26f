import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.exceptions.lab import GridError, LedgerError
from app.schemas.fields import Grid, SpectralVectorField
from app.services.spectral import SpectralServices

exponent_strategy = st.floats(min_value=1.0, max_value=8.0, allow_nan=False, allow_infinity=False)


def _wave(grid: Grid, mx: int, my: int = 0) -> np.ndarray:
    x, y = grid.coordinates
    k = grid.fundamental
    return np.cos(k * (mx * x + my * y))


class TestTransforms:
    def test_roundtrip_recovers_samples(self, grid32, rng):
        values = rng.standard_normal((32, 32))
        field = SpectralServices.fft_forward(values, grid32)
        np.testing.assert_allclose(SpectralServices.fft_inverse(field), values, rtol=0, atol=1e-12)

    def test_forward_normalization(self, grid32):
        constant = SpectralServices.fft_forward(np.ones((32, 32)), grid32)
        assert constant.modes[0, 0] == pytest.approx(1.0)
        wave = SpectralServices.fft_forward(_wave(grid32, 1), grid32)
        assert wave.modes[1, 0] == pytest.approx(0.5)
        assert wave.modes[-1, 0] == pytest.approx(0.5)

    def test_parseval(self, grid32, rng):
        values = rng.standard_normal((32, 32))
        field = SpectralServices.fft_forward(values, grid32)
        assert np.sum(np.abs(field.modes) ** 2) == pytest.approx(np.mean(values**2), rel=1e-12)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(GridError):
            SpectralServices.fft_forward(np.zeros((12, 12)))

    def test_rejects_non_square(self):
        with pytest.raises(GridError):
            SpectralServices.fft_forward(np.zeros((16, 32)))

    def test_rejects_grid_mismatch(self, grid64):
        with pytest.raises(GridError):
            SpectralServices.fft_forward(np.zeros((32, 32)), grid64)

    def test_dealias_zeroes_modes_beyond_cutoff(self, grid32, rng):
        field = SpectralServices.from_physical(rng.standard_normal((32, 32)), grid32)
        outside = ~grid32.wavenumbers.dealias_mask
        assert field.dealiased
        assert np.all(field.modes[outside] == 0)


class TestDifferentialOperators:
    def test_gradient_of_cosine(self, grid32):
        x, _ = grid32.coordinates
        k = 3 * grid32.fundamental
        field = SpectralServices.from_physical(np.cos(k * x), grid32)
        gx, gy = SpectralServices.to_physical(SpectralServices.grad(field))
        np.testing.assert_allclose(gx, -k * np.sin(k * x), atol=1e-12)
        np.testing.assert_allclose(gy, 0.0, atol=1e-12)

    def test_div_perp_grad_vanishes(self, random_field, grid32):
        psi = random_field(grid32)
        div = SpectralServices.div(SpectralServices.perp_grad(psi))
        assert SpectralServices.lp_norm(div) <= 1e-13 * SpectralServices.lp_norm(SpectralServices.laplacian(psi))

    def test_curl_grad_vanishes(self, random_field, grid32):
        phi = random_field(grid32)
        curl = SpectralServices.curl2d(SpectralServices.grad(phi))
        assert SpectralServices.lp_norm(curl) <= 1e-13 * SpectralServices.lp_norm(SpectralServices.laplacian(phi))

    def test_inverse_laplacian_of_mean_free_field(self, random_field, grid32):
        f = random_field(grid32)
        back = SpectralServices.laplacian(SpectralServices.inv_laplacian(f))
        np.testing.assert_allclose(back.modes, f.modes, atol=1e-14)

    def test_inverse_laplacian_drops_mean(self, grid32):
        f = SpectralServices.from_physical(np.ones((32, 32)) + _wave(grid32, 1), grid32)
        solved = SpectralServices.inv_laplacian(f)
        assert solved.modes[0, 0] == 0


class TestLeray:
    def test_projection_is_idempotent(self, random_vector, grid32):
        pv = SpectralServices.leray_P(random_vector(grid32))
        again = SpectralServices.leray_P(pv)
        assert SpectralServices.lp_norm(again - pv) <= 1e-12 * SpectralServices.lp_norm(pv)

    def test_projection_is_divergence_free(self, random_vector, grid32):
        v = random_vector(grid32)
        div = SpectralServices.div(SpectralServices.leray_P(v))
        assert SpectralServices.lp_norm(div) <= 1e-12 * SpectralServices.lp_norm(SpectralServices.div(v))

    def test_parts_sum_to_field(self, random_vector, grid32):
        v = random_vector(grid32)
        total = SpectralServices.leray_P(v) + SpectralServices.leray_Q(v)
        np.testing.assert_allclose(total.x.modes, v.x.modes, atol=1e-15)
        np.testing.assert_allclose(total.y.modes, v.y.modes, atol=1e-15)

    def test_gradient_has_no_solenoidal_part(self, random_field, grid32):
        grad = SpectralServices.grad(random_field(grid32))
        assert SpectralServices.lp_norm(SpectralServices.leray_P(grad)) <= 1e-12 * SpectralServices.lp_norm(grad)


class TestNorms:
    def test_product_of_low_modes_is_exact(self, grid32):
        a = SpectralServices.from_physical(_wave(grid32, 1), grid32)
        b = SpectralServices.from_physical(_wave(grid32, 0, 2), grid32)
        product = SpectralServices.to_physical(SpectralServices.multiply(a, b))
        np.testing.assert_allclose(product, _wave(grid32, 1) * _wave(grid32, 0, 2), atol=1e-13)

    def test_sup_norm_of_cosine(self, grid32):
        field = SpectralServices.from_physical(_wave(grid32, 2), grid32)
        assert SpectralServices.lp_norm(field, np.inf) == pytest.approx(1.0)

    @given(p=exponent_strategy)
    @settings(max_examples=25, deadline=None)
    def test_constant_field_norm(self, p):
        grid = Grid(n=16, box_length=4.0)
        field = SpectralServices.fft_forward(np.full((16, 16), 2.0), grid)
        assert SpectralServices.lp_norm(field, p) == pytest.approx(2.0 * 16.0 ** (1.0 / p), rel=1e-12)

    def test_vector_norm_is_pointwise_euclidean(self, grid32):
        ones = SpectralServices.fft_forward(np.ones((32, 32)), grid32)
        vector = SpectralVectorField(x=ones.scale(3.0), y=ones.scale(4.0))
        assert SpectralServices.lp_norm(vector, np.inf) == pytest.approx(5.0)

    def test_rejects_p_below_one(self, grid32):
        with pytest.raises(ValueError):
            SpectralServices.lp_norm_samples(np.ones((32, 32)), grid32, 0.5)


class TestMixedTimeNorm:
    def test_constant_series(self):
        times = np.linspace(0.0, 2.0, 11)
        assert SpectralServices.mixed_time_norm(times, [3.0] * 11, 4) == pytest.approx(3.0 * 2.0**0.25)

    def test_sup_in_time(self):
        assert SpectralServices.mixed_time_norm([0.0, 1.0, 2.0], [1.0, 5.0, 2.0], math.inf) == 5.0

    @pytest.mark.parametrize(
        "times, values",
        [([], []), ([0.0, 1.0], [1.0]), ([0.0], [1.0]), ([1.0, 0.0], [1.0, 1.0])],
    )
    def test_rejects_bad_series(self, times, values):
        with pytest.raises(LedgerError):
            SpectralServices.mixed_time_norm(times, values, 2)
