import math

import numpy as np
import pytest
from scipy import integrate, stats

from convex_shape_seg.modules.grid import BinaryField
from convex_shape_seg.modules.region_force import (
    GaussianMixture,
    build_force,
    fit_gmm,
    force_from_posterior,
    gmm_density,
    init_models,
    posterior_field,
    posterior_p0,
    refit_models,
)


def _clusters(generator, means, std, n):
    return np.concatenate([generator.normal(m, std, size=(n, len(m))) for m in means])


# ------------------ EM ------------------


def test_two_cluster_recovery():
    generator = np.random.default_rng(0)
    samples = _clusters(generator, [[50.0], [200.0]], 5.0, 500)
    model = fit_gmm(samples, 2, seed=0)

    order = np.argsort(model.means[:, 0])
    np.testing.assert_allclose(model.means[order, 0], [50.0, 200.0], atol=2.0)
    np.testing.assert_allclose(model.weights[order], [0.5, 0.5], atol=0.05)
    np.testing.assert_allclose(np.sqrt(model.covariances[order, 0, 0]), [5.0, 5.0], rtol=0.2)
    assert model.weights.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(20))
def test_em_log_likelihood_is_monotone(seed):
    generator = np.random.default_rng(100 + seed)
    centers = generator.uniform(0, 255, size=(3, 3))
    samples = _clusters(generator, centers, generator.uniform(5, 30), 200)
    model = fit_gmm(samples, 3, seed=seed)

    history = np.array(model.log_likelihood_history)
    assert len(history) >= 2
    assert np.all(np.diff(history) >= -1e-8)


def test_fit_is_deterministic_for_a_seed():
    generator = np.random.default_rng(3)
    samples = _clusters(generator, [[0.0, 0.0], [10.0, 10.0]], 2.0, 100)
    a = fit_gmm(samples, 2, seed=5)
    b = fit_gmm(samples, 2, seed=5)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.covariances, b.covariances)


def test_covariances_stay_positive_definite_on_flat_data():
    samples = np.full((100, 3), 128.0)
    samples[:50] += 1.0
    model = fit_gmm(samples, 3, seed=0)
    for cov in model.covariances:
        assert np.linalg.eigvalsh(cov).min() > 0
    assert np.all(np.isfinite(model.log_density(samples)))


def test_insufficient_samples():
    with pytest.raises(ValueError, match="insufficient samples for K components"):
        fit_gmm(np.zeros((15, 1)), 2)


def test_single_gaussian_density():
    model = GaussianMixture(np.array([1.0]), np.array([[0.0]]), np.array([[[1.0]]]))
    assert gmm_density(model, 0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi))
    assert gmm_density(model, [1.0]) == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi))


# ------------------ posterior and force ------------------


def test_posterior_p0():
    assert posterior_p0(3.0, 1.0) == pytest.approx(0.75)
    assert posterior_p0(1.0, 1.0, gamma0=3.0, gamma1=1.0) == pytest.approx(0.75)
    assert posterior_p0(0.0, 0.0) == 0.5


def test_posterior_field_handles_underflow():
    log_g0 = np.array([-2000.0, 0.0, -np.inf])
    log_g1 = np.array([-2001.0, -np.inf, -np.inf])
    p0 = posterior_field(log_g0, log_g1)
    assert p0[0] == pytest.approx(math.e / (1 + math.e))
    assert p0[1] == 1.0
    assert p0[2] == 0.5


def test_force_values():
    f, f0, f1 = force_from_posterior(np.array([0.9, 0.5, 1.0]))
    assert f[0] == pytest.approx(1.0986, abs=1e-4)
    assert f[1] == pytest.approx(0.0)
    assert f[2] == pytest.approx(0.5 * -math.log(1e-6))
    assert f0[2] == 0.0


def test_force_increases_with_p0():
    p0 = np.linspace(0.0, 1.0, 101)
    f, _, _ = force_from_posterior(p0)
    assert np.all(np.diff(f) > 0)


@pytest.mark.parametrize("p_floor", [0.0, 0.5, 0.7])
def test_force_rejects_bad_floor(p_floor):
    with pytest.raises(ValueError):
        force_from_posterior(np.array([0.5]), p_floor=p_floor)


def test_build_force_on_two_tone_image(two_tone_image):
    image, obj = two_tone_image
    fg = fit_gmm(image[obj], 2, seed=0)
    bg = fit_gmm(image[~obj], 3, seed=0)
    force = build_force(image, fg, bg)

    p0, p1 = force.p0.values, force.p1.values
    np.testing.assert_allclose(p0 + p1, 1.0, rtol=0, atol=1e-15)
    # object pixels push towards u = 0, background pixels towards u = 1
    assert np.median(force.f.values[obj]) > 0
    assert np.median(force.f.values[~obj]) < 0
    assert force.f.shape == (64, 64)


# ------------------ initialization and refresh ------------------


def test_init_models_from_hull(two_tone_image, disc_field):
    image, _ = two_tone_image
    hull_u = disc_field(64, 64, 31.5, 31.5, 10)
    fg, bg = init_models(image, hull_u, s=8, K0=2, K1=3)
    assert fg.n_components == 2 and bg.n_components == 3
    assert fg.weights @ fg.means[:, 0] > 150
    # pixels farther than 8 from the hull all lie outside the true disc
    assert bg.means.max() < 100


def test_init_models_without_background():
    image = np.zeros((16, 16, 1))
    whole = BinaryField(np.zeros((16, 16), dtype=np.uint8))
    with pytest.raises(ValueError, match="smaller s"):
        init_models(image, whole, s=5)


def test_refit_skips_tiny_regions(two_tone_image):
    image, _ = two_tone_image
    values = np.ones((64, 64), dtype=np.uint8)
    values[0, :5] = 0
    assert refit_models(image, BinaryField(values)) is None


def test_refit_from_partition(two_tone_image):
    image, obj = two_tone_image
    models = refit_models(image, BinaryField.from_object_mask(obj))
    assert models is not None
    fg, bg = models
    # an M step keeps the weighted mean at the sample mean
    assert fg.weights @ fg.means[:, 0] == pytest.approx(image[obj].mean(), abs=1e-6)


def test_single_component_matches_sample_statistics():
    generator = np.random.default_rng(21)
    samples = generator.multivariate_normal([10.0, -5.0], [[4.0, 1.0], [1.0, 2.0]], size=400)
    model = fit_gmm(samples, 1)
    np.testing.assert_allclose(model.means[0], samples.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(model.covariances[0], np.cov(samples.T, bias=True), rtol=0.2)


def test_standard_normal_peak_in_three_channels():
    model = GaussianMixture(np.array([1.0]), np.zeros((1, 3)), np.eye(3)[None])
    assert gmm_density(model, [0.0, 0.0, 0.0]) == pytest.approx((2 * math.pi) ** -1.5)


def test_posterior_edge_cases():
    assert posterior_p0(2.0, 1.0) == pytest.approx(2 / 3)
    assert posterior_p0(1.0, 1.0) == 0.5
    assert posterior_p0(5.0, 1.0, gamma0=0.0) == 0.0


def test_zero_margin_uses_every_pixel_off_the_hull(two_tone_image, disc_field):
    image, _ = two_tone_image
    hull_u = disc_field(64, 64, 31.5, 31.5, 10)
    fg, bg = init_models(image, hull_u, s=0.0)
    # weighted means equal the sample means of both regions
    off_hull = image[~hull_u.object_mask]
    assert bg.weights @ bg.means[:, 0] == pytest.approx(off_hull.mean(), abs=1e-6)


# ------------------ density and posterior invariants ------------------


def _two_component_model():
    return GaussianMixture(
        weights=np.array([0.3, 0.7]),
        means=np.array([[50.0], [200.0]]),
        covariances=np.array([[[100.0]], [[400.0]]]),
    )


def test_one_channel_density_integrates_to_one():
    model = _two_component_model()
    total, _ = integrate.quad(lambda x: gmm_density(model, x), -200.0, 500.0, points=[50.0, 200.0], limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_mixture_is_the_weighted_sum_of_its_components():
    model = GaussianMixture(
        weights=np.array([0.3, 0.7]),
        means=np.array([[0.0, 0.0], [10.0, -5.0]]),
        covariances=np.array([np.eye(2), [[4.0, 1.0], [1.0, 2.0]]]),
    )
    colors = np.random.default_rng(4).uniform(-10.0, 20.0, size=(200, 2))
    expected = 0.3 * stats.multivariate_normal(model.means[0], model.covariances[0]).pdf(
        colors
    ) + 0.7 * stats.multivariate_normal(model.means[1], model.covariances[1]).pdf(colors)
    np.testing.assert_allclose(model.density(colors), expected, rtol=1e-10, atol=1e-300)


@pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0, 1e4])
def test_joint_prior_scaling_leaves_the_posterior_unchanged(scale):
    for g0, g1, gamma0, gamma1 in [(2.0, 1.0, 1.0, 1.0), (0.01, 3.0, 0.2, 0.9), (1e-5, 1e-7, 2.0, 0.5)]:
        assert posterior_p0(g0, g1, scale * gamma0, scale * gamma1) == pytest.approx(
            posterior_p0(g0, g1, gamma0, gamma1), abs=1e-12
        )
    log_g0 = np.log(np.array([0.2, 1e-30, 4.0]))
    log_g1 = np.log(np.array([0.7, 1e-29, 1e-3]))
    np.testing.assert_allclose(
        posterior_field(log_g0, log_g1, scale * 0.4, scale * 1.5),
        posterior_field(log_g0, log_g1, 0.4, 1.5),
        atol=1e-12,
    )
