import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthmri import GenConfig
from synthmri.intensity import (
    BiasParams,
    ContrastHyperprior,
    GmmParams,
    apply_bias,
    bias_from_params,
    gamma_normalize,
    gaussian_blur,
    gaussian_kernel_1d,
    relabel_to_background,
    sample_bias,
    sample_gmm_image,
    sample_gmm_params,
    sample_gmm_params_rule,
    strip_extracerebral,
)
from synthmri.phantoms import make_two_region_labels
from synthmri.volume import LabelMap, Volume


class TestGmmParams:
    def test_table_default_ranges(self, rng):
        g = sample_gmm_params([0, 1, 2, 3], GenConfig(), rng)
        for k in (0, 1, 2, 3):
            assert 25 <= g.means[k] <= 225
            assert 5 <= g.stds[k] <= 25

    def test_degenerate_ranges_deterministic(self):
        cfg = GenConfig(a_mu=100, b_mu=100, a_sigma=7, b_sigma=7)
        for seed in (0, 5):
            g = sample_gmm_params([0, 2], cfg, np.random.default_rng(seed))
            assert g.means == {0: 100.0, 2: 100.0}
            assert g.stds == {0: 7.0, 2: 7.0}

    def test_mean_of_many_draws(self):
        r = np.random.default_rng(42)
        draws = [sample_gmm_params([1], GenConfig(), r).means[1] for _ in range(10_000)]
        se = (200 / math.sqrt(12)) / math.sqrt(10_000)
        assert abs(np.mean(draws) - 125.0) < 5 * se

    def test_background_gets_its_own_draw(self, rng):
        g = sample_gmm_params([0, 1], GenConfig(), rng)
        assert 0 in g.means and 0 in g.stds

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            GmmParams(means={1: 10.0}, stds={1: -1.0})


class TestRuleSampling:
    def prior(self, name="t1", mu=(100.0, 10.0), sig=(8.0, 2.0)):
        return ContrastHyperprior(
            name=name, entries={0: (*mu, *sig), 1: (*mu, *sig)}
        )

    def test_zero_std_hits_means_exactly(self, rng):
        p = ContrastHyperprior(name="x", entries={0: (40.0, 0.0, 3.0, 0.0)})
        name, g = sample_gmm_params_rule([p], rng)
        assert name == "x"
        assert g.means[0] == 40.0 and g.stds[0] == 3.0

    def test_single_contrast_always_chosen(self, rng):
        priors = [self.prior("only")]
        for _ in range(20):
            name, _ = sample_gmm_params_rule(priors, rng)
            assert name == "only"

    def test_mean_of_many_draws(self):
        r = np.random.default_rng(3)
        priors = [self.prior()]
        draws = [sample_gmm_params_rule(priors, r)[1].means[0] for _ in range(10_000)]
        assert abs(np.mean(draws) - 100.0) < 5 * 10.0 / math.sqrt(10_000)

    def test_sigma_clamped_nonnegative(self):
        p = ContrastHyperprior(name="x", entries={0: (100.0, 1.0, 0.0, 5.0)})
        r = np.random.default_rng(0)
        stds = [sample_gmm_params_rule([p], r)[1].stds[0] for _ in range(200)]
        assert min(stds) == 0.0  # clamping visibly active

    def test_empty_prior_set_rejected(self, rng):
        with pytest.raises(ValueError, match="no contrast"):
            sample_gmm_params_rule([], rng)


class TestGmmImage:
    def test_zero_sigma_piecewise_constant(self, phantom32, rng):
        g = GmmParams(
            means={k: 10.0 * k for k in phantom32.label_set},
            stds={k: 0.0 for k in phantom32.label_set},
        )
        img = sample_gmm_image(phantom32, g, rng)
        np.testing.assert_array_equal(
            img.data, (10.0 * phantom32.labels).astype(np.float32)
        )

    def test_region_statistics(self):
        m = LabelMap(np.ones((100, 100, 100), dtype=np.int32))
        g = GmmParams(means={1: 100.0}, stds={1: 10.0})
        img = sample_gmm_image(m, g, np.random.default_rng(7))
        assert abs(float(img.data.mean()) - 100.0) < 0.05
        assert float(img.data.std()) == pytest.approx(10.0, rel=0.01)

    def test_bimodal_histogram(self):
        m = make_two_region_labels((32, 32, 32))
        g = GmmParams(means={1: 50.0, 2: 150.0}, stds={1: 10.0, 2: 10.0})
        img = sample_gmm_image(m, g, np.random.default_rng(0))
        x = img.data.ravel()
        low = np.count_nonzero(np.abs(x - 50) < 30)
        high = np.count_nonzero(np.abs(x - 150) < 30)
        mid = np.count_nonzero((x > 90) & (x < 110))
        assert low > 0.45 * x.size and high > 0.45 * x.size
        assert mid < 0.01 * x.size

    def test_missing_label_rejected(self, phantom32, rng):
        g = GmmParams(means={0: 1.0}, stds={0: 1.0})
        with pytest.raises(ValueError, match="no GMM parameters"):
            sample_gmm_image(phantom32, g, rng)


class TestBlur:
    def test_sigma_zero_identity(self, rng):
        v = Volume(rng.standard_normal((8, 8, 8)).astype(np.float32))
        assert gaussian_blur(v, 0.0) is v

    def test_constant_unchanged(self):
        v = Volume(np.full((10, 10, 10), 4.5, dtype=np.float32))
        out = gaussian_blur(v, 1.7)
        np.testing.assert_allclose(out.data, 4.5, atol=1e-5)

    def test_small_sigma_three_tap_kernel(self):
        k = gaussian_kernel_1d(0.3)
        side = math.exp(-1.0 / (2 * 0.3**2))
        expect = np.array([side, 1.0, side]) / (1.0 + 2 * side)
        np.testing.assert_allclose(k, expect, rtol=1e-12)
        assert k[1] == pytest.approx(0.99233, abs=1e-4)

    def test_impulse_response_separable(self):
        data = np.zeros((9, 9, 9), dtype=np.float32)
        data[4, 4, 4] = 1.0
        out = gaussian_blur(Volume(data), 0.3)
        k = gaussian_kernel_1d(0.3)
        assert out.data[4, 4, 4] == pytest.approx(k[1] ** 3, rel=1e-5)
        assert out.data[3, 4, 4] == pytest.approx(k[0] * k[1] * k[1], rel=1e-5)

    def test_kernel_sums_to_one(self):
        for sigma in (0.1, 0.3, 1.0, 2.5):
            assert gaussian_kernel_1d(sigma).sum() == pytest.approx(1.0, abs=1e-12)

    def test_no_overshoot(self, rng):
        v = Volume(rng.standard_normal((12, 12, 12)).astype(np.float32))
        out = gaussian_blur(v, 1.0)
        assert out.data.min() >= v.data.min() - 1e-5
        assert out.data.max() <= v.data.max() + 1e-5


class TestBias:
    def test_zero_sigma_is_unit_field(self, rng):
        b = sample_bias(GenConfig(sigma_b=0.0), (16, 16, 16), rng)
        np.testing.assert_array_equal(b.data, np.ones((16, 16, 16), dtype=np.float32))

    def test_constant_grid_exponentiates(self):
        params = BiasParams(grid=np.full((4, 4, 4), 0.5, dtype=np.float32), sigma_b=0.5)
        b = bias_from_params(params, (16, 16, 16))
        np.testing.assert_allclose(b.data, math.exp(0.5), rtol=1e-6)

    def test_log_bias_within_coarse_bounds(self, rng):
        cfg = GenConfig()  # c_B=4, sigma_b=0.5
        from synthmri.intensity import sample_bias_params

        params = sample_bias_params(cfg, rng)
        assert params.grid.shape == (4, 4, 4)
        b = bias_from_params(params, (22, 22, 22))
        logb = np.log(b.data)
        assert logb.min() >= params.grid.min() - 1e-5
        assert logb.max() <= params.grid.max() + 1e-5

    def test_strictly_positive(self, rng):
        b = sample_bias(GenConfig(sigma_b=2.0), (16, 16, 16), rng)
        assert b.data.min() > 0

    def test_apply_bias(self):
        v = Volume(np.full((4, 4, 4), 2.0, dtype=np.float32))
        b = Volume(np.full((4, 4, 4), math.exp(0.5), dtype=np.float32))
        out = apply_bias(v, b)
        np.testing.assert_allclose(out.data, 2 * math.exp(0.5), rtol=1e-6)
        np.testing.assert_array_equal(
            apply_bias(Volume(np.zeros((4, 4, 4), np.float32)), b).data, 0.0
        )

    def test_apply_bias_errors(self):
        v = Volume(np.ones((4, 4, 4), dtype=np.float32))
        with pytest.raises(ValueError, match="dim mismatch"):
            apply_bias(v, Volume(np.ones((5, 5, 5), dtype=np.float32)))
        with pytest.raises(ValueError, match="strictly positive"):
            apply_bias(v, Volume(np.zeros((4, 4, 4), dtype=np.float32)))


class TestGammaNormalize:
    def test_gamma_zero_is_minmax(self):
        v = Volume(np.array([[[10.0, 30.0, 50.0]]], dtype=np.float32).reshape(3, 1, 1))
        out = gamma_normalize(v, 0.0)
        np.testing.assert_allclose(out.data.ravel(), [0.0, 0.5, 1.0], atol=1e-7)

    def test_range_is_unit_interval(self, rng):
        v = Volume(rng.standard_normal((8, 8, 8)).astype(np.float32))
        out = gamma_normalize(v, 0.21)
        assert out.data.min() == 0.0
        assert out.data.max() == 1.0

    def test_log_two_gamma(self):
        v = Volume(np.array([0.0, 50.0, 100.0], dtype=np.float32).reshape(3, 1, 1))
        out = gamma_normalize(v, math.log(2.0))
        np.testing.assert_allclose(out.data.ravel(), [0.0, 0.25, 1.0], atol=1e-6)

    def test_constant_maps_to_zeros(self):
        v = Volume(np.full((4, 4, 4), 7.0, dtype=np.float32))
        out = gamma_normalize(v, 0.2)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_idempotent_at_gamma_zero(self, rng):
        v = gamma_normalize(Volume(rng.standard_normal((6, 6, 6)).astype(np.float32)), 0.0)
        again = gamma_normalize(v, 0.0)
        np.testing.assert_allclose(again.data, v.data, atol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-0.3, 0.3), st.integers(0, 2**31 - 1))
    def test_monotone(self, gamma, seed):
        r = np.random.default_rng(seed)
        v = Volume(r.uniform(0, 100, size=(4, 4, 4)).astype(np.float32))
        out = gamma_normalize(v, gamma)
        a = v.data.ravel()
        b = out.data.ravel()
        order = np.argsort(a, kind="stable")
        assert np.all(np.diff(b[order]) >= -1e-7)


class TestStrip:
    def test_p_zero_never_strips(self, phantom32):
        r = np.random.default_rng(0)
        for _ in range(20):
            out = strip_extracerebral(phantom32, [1], r, p_strip=0.0)
            assert out.label_set == phantom32.label_set

    def test_p_one_always_strips(self, phantom32):
        r = np.random.default_rng(0)
        out = strip_extracerebral(phantom32, [1], r, p_strip=1.0)
        assert 1 not in out.label_set
        assert set(out.label_set) <= set(phantom32.label_set)

    def test_strip_frequency(self):
        m = LabelMap(np.arange(8, dtype=np.int32).reshape(2, 2, 2))
        r = np.random.default_rng(123)
        hits = sum(
            1 not in strip_extracerebral(m, [1], r, p_strip=0.2).label_set
            for _ in range(10_000)
        )
        assert 0.18 <= hits / 10_000 <= 0.22

    def test_relabel_keeps_other_labels(self, phantom32):
        out = relabel_to_background(phantom32, [1])
        keep = np.asarray(phantom32.labels != 1)
        np.testing.assert_array_equal(out.labels[keep], phantom32.labels[keep])
        assert np.all(out.labels[~keep] == 0)
