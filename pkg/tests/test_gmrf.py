import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmrfprox import (
    GmrfPrior,
    GridShape,
    ImproperPriorError,
    NeighborhoodKernel,
    ShapeError,
    gmrf_quadratic,
    precision_spectrum,
    sample_gmrf,
)
from gmrfprox.spectral import fft2_forward

from conftest import random_kernel
from oracles import dense_precision, dense_quadratic

RING = NeighborhoodKernel(((0, 1), (0, -1)), (1.0, 1.0))


def test_lambda_must_be_nonnegative():
    with pytest.raises(ValueError):
        GmrfPrior(NeighborhoodKernel(), -1.0)


def test_prior_dict_round_trip(texture_kernels):
    prior = GmrfPrior(texture_kernels[0], 0.05)
    assert GmrfPrior.from_dict(prior.to_dict()) == prior


class TestPrecisionSpectrum:
    def test_empty_kernel(self):
        m = precision_spectrum(GmrfPrior(NeighborhoodKernel(), 2.0), (3, 3)).values
        np.testing.assert_allclose(m, 2.0)

    def test_ring(self):
        m = precision_spectrum(GmrfPrior(RING, 1.0), (1, 4)).values.ravel()
        np.testing.assert_allclose(m, [1, 1, 9, 1], atol=1e-12)

    def test_texture_priors_match_dense(self, texture_kernels):
        shape = (8, 8)
        for k in texture_kernels:
            prior = GmrfPrior(k, 0.05)
            m = precision_spectrum(prior, shape).values
            assert np.all(m >= 0)
            dense = np.linalg.eigvalsh(dense_precision(prior, shape))
            np.testing.assert_allclose(np.sort(m.ravel()), dense, rtol=1e-9, atol=1e-10)

    def test_first_texture_stencil_has_dc_null(self, texture_kernels):
        m = precision_spectrum(GmrfPrior(texture_kernels[0], 0.05), (16, 16)).values
        assert m[0, 0] < 1e-15

    @pytest.mark.parametrize("rows", range(1, 9))
    @pytest.mark.parametrize("cols", range(2, 9))
    def test_dense_agreement_all_small_grids(self, rows, cols):
        rng = np.random.default_rng(rows * 100 + cols)
        prior = GmrfPrior(random_kernel(rng, (rows, cols)), rng.uniform(0.05, 2))
        m = np.sort(precision_spectrum(prior, (rows, cols)).values.ravel())
        dense = np.linalg.eigvalsh(dense_precision(prior, (rows, cols)))
        scale = max(1.0, dense.max())
        assert np.max(np.abs(m - dense)) <= 1e-9 * scale

    def test_offset_order_irrelevant(self, rng):
        k = random_kernel(rng, (6, 6))
        perm = rng.permutation(k.q)
        shuffled = NeighborhoodKernel(
            tuple(k.offsets[i] for i in perm), tuple(k.weights[i] for i in perm)
        )
        a = precision_spectrum(GmrfPrior(k, 0.7), (6, 6)).values
        b = precision_spectrum(GmrfPrior(shuffled, 0.7), (6, 6)).values
        np.testing.assert_allclose(a, b, atol=1e-14)


class TestQuadratic:
    def test_zero_field(self, texture_kernels):
        assert gmrf_quadratic(GmrfPrior(texture_kernels[1], 0.3), np.zeros(16), (4, 4)) == 0.0

    def test_empty_kernel_is_ridge(self, rng):
        h = rng.standard_normal(12)
        value = gmrf_quadratic(GmrfPrior(NeighborhoodKernel(), 1.5), h, (3, 4))
        assert value == pytest.approx(0.75 * h @ h, rel=1e-12)

    def test_texture_kernel_matches_dense(self, rng, texture_kernels):
        prior = GmrfPrior(texture_kernels[0], 0.05)
        h = rng.standard_normal(16)
        expected = dense_quadratic(prior, h, (4, 4))
        assert gmrf_quadratic(prior, h, (4, 4)) == pytest.approx(expected, rel=1e-10)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            gmrf_quadratic(GmrfPrior(RING, 1.0), np.zeros(5), (2, 2))

    @pytest.mark.parametrize("rows", range(1, 9))
    @pytest.mark.parametrize("cols", range(2, 9))
    def test_dense_agreement_all_small_grids(self, rows, cols):
        rng = np.random.default_rng(7 * rows + 1000 * cols)
        prior = GmrfPrior(random_kernel(rng, (rows, cols)), rng.uniform(0.05, 2))
        h = rng.standard_normal(rows * cols)
        expected = dense_quadratic(prior, h, (rows, cols))
        assert gmrf_quadratic(prior, h, (rows, cols)) == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_zero_iff_in_null_space(self, texture_kernels):
        # a constant field lies in the null space of the DC-null prior
        prior = GmrfPrior(texture_kernels[0], 0.05)
        assert gmrf_quadratic(prior, np.full(64, 3.0), (8, 8)) < 1e-24
        assert gmrf_quadratic(prior, np.arange(64.0), (8, 8)) > 0


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    lam=st.floats(0.01, 10),
    alpha=st.floats(0.1, 10),
)
def test_quadratic_scaling(seed, lam, alpha):
    rng = np.random.default_rng(seed)
    shape = (5, 4)
    k = random_kernel(rng, shape)
    h = rng.standard_normal(shape[0] * shape[1])
    base = gmrf_quadratic(GmrfPrior(k, lam), h, shape)
    assert base >= 0
    assert gmrf_quadratic(GmrfPrior(k, 2 * lam), h, shape) == pytest.approx(2 * base, rel=1e-12, abs=1e-300)
    assert gmrf_quadratic(GmrfPrior(k, lam), alpha * h, shape) == pytest.approx(
        alpha**2 * base, rel=1e-10, abs=1e-300
    )


class TestSampler:
    def test_deterministic(self, texture_kernels):
        prior = GmrfPrior(texture_kernels[1], 0.05)
        a = sample_gmrf(prior, (16, 16), seed=3)
        b = sample_gmrf(prior, (16, 16), seed=3)
        assert np.array_equal(a, b)
        assert a.shape == (256,)

    def test_distinct_seeds_differ(self, texture_kernels):
        prior = GmrfPrior(texture_kernels[1], 0.05)
        assert not np.array_equal(sample_gmrf(prior, (8, 8), 1), sample_gmrf(prior, (8, 8), 2))

    def test_improper_prior_rejected(self, texture_kernels):
        with pytest.raises(ImproperPriorError):
            sample_gmrf(GmrfPrior(texture_kernels[0], 0.05), (8, 8), seed=0)
        with pytest.raises(ImproperPriorError):
            sample_gmrf(GmrfPrior(RING, 0.0), (4, 4), seed=0)

    def test_drop_dc_accepts_dc_null(self, texture_kernels):
        h = sample_gmrf(GmrfPrior(texture_kernels[0], 0.05), (8, 8), seed=0, drop_dc=True)
        assert abs(h.mean()) < 1e-12

    def test_dc_variance_matches_spectrum(self, texture_kernels):
        prior = GmrfPrior(texture_kernels[1], 0.05)
        shape = GridShape(8, 8)
        m = precision_spectrum(prior, shape).values
        rng = np.random.default_rng(11)
        draws = np.array([sample_gmrf(prior, shape, rng) for _ in range(10_000)])
        # unitary DFT coefficient at DC has variance 1 / m[0]
        dc = fft2_forward(draws.reshape(-1, 8, 8))[:, 0, 0].real / np.sqrt(shape.n)
        assert np.var(dc) == pytest.approx(1.0 / m[0, 0], rel=0.05)

    def test_white_noise_variance(self):
        lam = 4.0
        prior = GmrfPrior(NeighborhoodKernel(), lam)
        rng = np.random.default_rng(5)
        draws = np.array([sample_gmrf(prior, (8, 8), rng) for _ in range(10_000)])
        per_pixel = draws.var(axis=0)
        np.testing.assert_allclose(per_pixel, 1.0 / lam, rtol=0.05)

    def test_covariance_matches_inverse_precision(self, texture_kernels):
        prior = GmrfPrior(texture_kernels[2], 0.5)
        shape = (4, 4)
        rng = np.random.default_rng(2)
        draws = np.array([sample_gmrf(prior, shape, rng) for _ in range(40_000)])
        cov = np.cov(draws.T)
        expected = np.linalg.inv(dense_precision(prior, shape))
        assert np.linalg.norm(cov - expected) <= 0.05 * np.linalg.norm(expected)
