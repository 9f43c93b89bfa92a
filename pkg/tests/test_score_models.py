"""Score fields: analytic mixture, decoder/encoder/latent networks, embeddings.

All hand-rolled gradients are validated against central finite differences on
randomized parameter vectors (fresh nets have zero-initialized output layers,
which would make the checks vacuous).
"""

import numpy as np
import pytest
from scipy.special import logsumexp

from smoothdiff import (
    GaussianMixtureScore,
    InvalidInputError,
    InvalidParameterError,
    LatentScoreNet,
    MlpScoreNet,
    ModelBundle,
    ModelConfig,
    PointEncoder,
    DiffusionSchedule,
    build_models,
    decoder_score,
    encoder_forward,
    gmm_perturbed_score,
    latent_score,
    reparameterize,
    time_embedding,
)

from conftest import numeric_grad

SCHEDULE = DiffusionSchedule()


def perturbed_log_pdf(model, x, t):
    """Independent oracle: log density of the diffused mixture at time t."""
    a = SCHEDULE.drift_coef(t)
    b = SCHEDULE.diffusion_std(t)
    var = a * a * model.sigma0**2 + b * b
    terms = []
    for w, mu in zip(model.weights, model.means):
        r2 = np.sum((x - a * mu) ** 2)
        terms.append(np.log(w) - 0.5 * r2 / var - 1.5 * np.log(2 * np.pi * var))
    return logsumexp(terms)


@pytest.fixture
def gmm():
    means = np.array([[2.0, 0.0, 0.0], [-2.0, 0.0, 0.0], [0.0, 2.0, 1.0]])
    return GaussianMixtureScore(
        means=means, sigma0=0.3, weights=np.array([0.5, 0.3, 0.2]), schedule=SCHEDULE
    )


# ------------------------------------------------------------------ GMM


def test_gmm_single_component_closed_form():
    mu = np.array([[1.0, -1.0, 0.5]])
    model = GaussianMixtureScore(
        means=mu, sigma0=0.2, weights=np.array([1.0]), schedule=SCHEDULE
    )
    x = np.array([[0.3, 0.7, -0.2]])
    t = 0.45
    a, b = SCHEDULE.drift_coef(t), SCHEDULE.diffusion_std(t)
    var = a * a * 0.04 + b * b
    expected = -(x - a * mu) / var
    assert np.allclose(model.evaluate(x, None, t), expected, rtol=1e-13)


def test_gmm_score_is_gradient_of_log_pdf(gmm, rng):
    for t in (0.05, 0.4, 0.95):
        x = rng.standard_normal((1, 3))
        s = gmm.evaluate(x, None, t)
        fd = numeric_grad(lambda y: perturbed_log_pdf(gmm, y, t), x.copy(), eps=1e-6)
        assert np.max(np.abs(s - fd)) < 1e-7


def test_gmm_symmetric_mixture_zero_score_at_origin():
    means = np.array([[1.5, 0.0, 0.0], [-1.5, 0.0, 0.0]])
    model = GaussianMixtureScore(
        means=means, sigma0=0.25, weights=np.array([0.5, 0.5]), schedule=SCHEDULE
    )
    s = model.evaluate(np.zeros((1, 3)), None, 0.3)
    assert np.max(np.abs(s)) < 1e-14


def test_gmm_input_vjp_matches_directional_fd(gmm, rng):
    x = rng.standard_normal((2, 3))
    v = rng.standard_normal((2, 3))
    t = 0.5
    got = gmm.input_vjp(x, None, t, v)
    eps = 1e-6
    # the perturbed-density Hessian is symmetric, so the VJP equals the JVP
    fd = (gmm.evaluate(x + eps * v, None, t) - gmm.evaluate(x - eps * v, None, t)) / (2 * eps)
    assert np.max(np.abs(got - fd)) < 1e-6


def test_gmm_helper_and_1d_input(gmm):
    x = np.array([0.1, 0.2, 0.3])
    t = 0.7
    via_helper = gmm_perturbed_score(gmm, x, t)
    direct = gmm.evaluate(x[None, :], None, t)
    assert np.array_equal(np.atleast_2d(via_helper), direct)


# ------------------------------------------------------------ embeddings


def test_time_embedding_structure():
    dim = 16
    emb = time_embedding(0.37, dim)
    assert emb.shape == (dim,)
    freqs = np.exp(np.linspace(0.0, np.log(1000.0), dim // 2))
    assert np.allclose(emb[: dim // 2], np.sin(0.37 * freqs))
    assert np.allclose(emb[dim // 2 :], np.cos(0.37 * freqs))
    with pytest.raises(InvalidParameterError):
        time_embedding(0.5, 9)


def test_time_embedding_distinguishes_times():
    a = time_embedding(0.1, 32)
    b = time_embedding(0.9, 32)
    assert np.linalg.norm(a - b) > 0.1


# --------------------------------------------------------------- decoder


def test_fresh_decoder_outputs_zero():
    net = MlpScoreNet(latent_dim=4, width=8, n_blocks=2, temb_dim=4, rng=np.random.default_rng(0))
    out = net.evaluate(np.ones((5, 3)), np.ones(4), 0.5)
    assert np.array_equal(out, np.zeros((5, 3)))


def test_decoder_param_gradient_matches_fd(tiny_bundle, rng):
    net = tiny_bundle.decoder
    xt = rng.standard_normal((4, 3))
    z = rng.standard_normal(6)
    v = rng.standard_normal((4, 3))
    t = 0.6

    _, cache = net.forward(xt, z, t)
    g, _, _ = net.backward(cache, v)

    def scalar(params):
        net.params[:] = params
        out, _ = net.forward(xt, z, t)
        return float(np.sum(out * v))

    base = net.params.copy()
    fd = numeric_grad(scalar, base.copy(), eps=1e-6)
    net.params[:] = base
    assert np.max(np.abs(g - fd)) < 1e-7


def test_decoder_input_gradients_match_fd(tiny_bundle, rng):
    net = tiny_bundle.decoder
    xt = rng.standard_normal((3, 3))
    z = rng.standard_normal(6)
    v = rng.standard_normal((3, 3))
    t = 0.35

    _, cache = net.forward(xt, z, t)
    _, dx, dz = net.backward(cache, v)

    fd_x = numeric_grad(
        lambda y: float(np.sum(net.forward(y, z, t)[0] * v)), xt.copy(), eps=1e-6
    )
    fd_z = numeric_grad(
        lambda w: float(np.sum(net.forward(xt, w, t)[0] * v)), z.copy(), eps=1e-6
    )
    assert np.max(np.abs(dx - fd_x)) < 1e-7
    assert np.max(np.abs(dz - fd_z)) < 1e-7
    # input_vjp is the same quantity as backward's dx
    assert np.allclose(net.input_vjp(xt, z, t, v), dx, rtol=1e-12)


def test_decoder_permutation_equivariance(tiny_bundle, rng):
    net = tiny_bundle.decoder
    xt = rng.standard_normal((8, 3))
    z = rng.standard_normal(6)
    perm = rng.permutation(8)
    a = net.evaluate(xt, z, 0.5)[perm]
    b = net.evaluate(xt[perm], z, 0.5)
    assert np.array_equal(a, b)


def test_decoder_score_helper(tiny_bundle, rng):
    net = tiny_bundle.decoder
    xt = rng.standard_normal((4, 3))
    z = rng.standard_normal(6)
    assert np.array_equal(decoder_score(net, xt, z, 0.5), net.evaluate(xt, z, 0.5))


# --------------------------------------------------------------- encoder


def test_encoder_permutation_invariance(tiny_bundle, rng):
    enc = tiny_bundle.encoder
    cloud = rng.standard_normal((10, 3))
    m1, lv1 = encoder_forward(enc, cloud)
    m2, lv2 = encoder_forward(enc, cloud[rng.permutation(10)])
    assert np.array_equal(m1, m2)
    assert np.array_equal(lv1, lv2)


def test_encoder_duplication_idempotent(tiny_bundle, rng):
    # max-pooling over per-point features ignores multiplicity
    enc = tiny_bundle.encoder
    cloud = rng.standard_normal((6, 3))
    doubled = np.concatenate([cloud, cloud], axis=0)
    m1, lv1 = encoder_forward(enc, cloud)
    m2, lv2 = encoder_forward(enc, doubled)
    assert np.array_equal(m1, m2)
    assert np.array_equal(lv1, lv2)


def test_encoder_logvar_bounded(tiny_bundle, rng):
    enc = tiny_bundle.encoder
    for scale in (0.01, 1.0, 100.0):
        _, lv = encoder_forward(enc, scale * rng.standard_normal((12, 3)))
        assert np.all(lv >= -20.0) and np.all(lv <= 4.0)


def test_encoder_param_gradient_matches_fd(tiny_bundle, rng):
    enc = tiny_bundle.encoder
    cloud = rng.standard_normal((5, 3))
    v1 = rng.standard_normal(6)
    v2 = rng.standard_normal(6)

    _, _, cache = enc.forward(cloud)
    g = enc.backward(cache, v1, v2)

    def scalar(params):
        enc.params[:] = params
        m, lv, _ = enc.forward(cloud)
        return float(np.dot(m, v1) + np.dot(lv, v2))

    base = enc.params.copy()
    fd = numeric_grad(scalar, base.copy(), eps=1e-6)
    enc.params[:] = base
    assert np.max(np.abs(g - fd)) < 1e-7


# ---------------------------------------------------------------- latent


def test_latent_param_and_input_gradients(tiny_bundle, rng):
    net = tiny_bundle.latent
    zt = rng.standard_normal(6)
    v = rng.standard_normal(6)
    t = 0.55

    _, cache = net.forward(zt, t)
    g, dzt = net.backward(cache, v)

    def scalar(params):
        net.params[:] = params
        out, _ = net.forward(zt, t)
        return float(np.dot(out, v))

    base = net.params.copy()
    fd = numeric_grad(scalar, base.copy(), eps=1e-6)
    net.params[:] = base
    assert np.max(np.abs(g - fd)) < 1e-7

    fd_z = numeric_grad(
        lambda w: float(np.dot(net.forward(w, t)[0], v)), zt.copy(), eps=1e-6
    )
    assert np.max(np.abs(dzt - fd_z)) < 1e-7
    assert np.array_equal(latent_score(net, zt, t), net.evaluate(zt, None, t))


def test_fresh_latent_outputs_zero():
    net = LatentScoreNet(latent_dim=4, width=8, n_blocks=2, temb_dim=4, rng=np.random.default_rng(0))
    assert np.array_equal(net.evaluate(np.ones(4), None, 0.5), np.zeros(4))


# ------------------------------------------------------------- assembly


def test_reparameterize_closed_form_and_moments(rng):
    mean = np.array([1.0, -2.0, 0.5])
    logvar = np.array([0.0, np.log(4.0), np.log(0.25)])
    noise = rng.standard_normal(3)
    z = reparameterize(mean, logvar, noise)
    assert np.allclose(z, mean + np.exp(0.5 * logvar) * noise, rtol=1e-15)
    draws = np.stack([reparameterize(mean, logvar, rng.standard_normal(3)) for _ in range(20000)])
    assert np.max(np.abs(draws.mean(axis=0) - mean)) < 0.05
    assert np.max(np.abs(draws.std(axis=0) - np.exp(0.5 * logvar))) < 0.05


def test_build_models_deterministic_and_consistent(tiny_model_config):
    b1 = build_models(tiny_model_config, seed=5)
    b2 = build_models(tiny_model_config, seed=5)
    assert np.array_equal(b1.decoder.params, b2.decoder.params)
    assert np.array_equal(b1.encoder.params, b2.encoder.params)
    assert np.array_equal(b1.latent.params, b2.latent.params)
    b3 = build_models(tiny_model_config, seed=6)
    assert not np.array_equal(b1.decoder.params, b3.decoder.params)


def test_bundle_rejects_mismatched_latent_dims():
    enc = PointEncoder(latent_dim=4, feature_width=8, rng=np.random.default_rng(0))
    dec = MlpScoreNet(latent_dim=4, width=8, n_blocks=1, temb_dim=4, rng=np.random.default_rng(1))
    lat = LatentScoreNet(latent_dim=5, width=8, n_blocks=1, temb_dim=4, rng=np.random.default_rng(2))
    with pytest.raises(InvalidInputError):
        ModelBundle(encoder=enc, decoder=dec, latent=lat)
