"""Joint training of encoder, decoder score net, and latent score net.

One denoising step per cloud per epoch: draw a single diffusion time, perturb
both the cloud and its reparameterized latent code, and regress both score
nets against the conditional score targets. The objective per cloud is

    recon + latent - entropy

where the two denoising terms carry the g(t)^2 / 2 likelihood weighting and
the entropy of the Gaussian posterior keeps the encoder from collapsing.
Optimization is plain Adam over three flat parameter vectors, one per
network, each with its own learning rate.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, NumericalAbortError
from .geometry import PointCloud
from .score_models import reparameterize

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 32
    lr_encoder: float = 2e-3
    lr_decoder: float = 2e-4
    lr_latent: float = 1e-4
    seed: int = 0
    # Sampling times below t_floor make the 1/b(t)^2 target variance explode.
    t_floor: float = 1e-3
    lr_constant_epochs: int = 1000
    lr_decay_epochs: int = 1000
    entropy_mode: str = "closed_form"

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")
        for name in ("lr_encoder", "lr_decoder", "lr_latent"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0")
        if not 0.0 < self.t_floor < 1.0:
            raise InvalidParameterError("t_floor must lie in (0, 1)")
        if self.lr_constant_epochs < 0 or self.lr_decay_epochs < 1:
            raise InvalidParameterError("invalid learning-rate schedule lengths")
        if self.entropy_mode not in ("closed_form", "monte_carlo"):
            raise InvalidParameterError(
                f"entropy_mode must be closed_form or monte_carlo, got "
                f"{self.entropy_mode!r}"
            )


@dataclass(frozen=True)
class LossReport:
    epoch: int
    recon: float
    latent: float
    entropy: float

    @property
    def total(self):
        return self.recon + self.latent - self.entropy


class Adam(object):
    """Standard Adam with bias correction, acting on one flat vector."""

    def __init__(self, n_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params, grad, lr_scale=1.0):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= (self.lr * lr_scale) * m_hat / (np.sqrt(v_hat) + self.eps)


def lr_factor(epoch, constant_epochs, decay_epochs):
    """Learning-rate multiplier: flat, then linear decay toward zero."""
    if epoch < constant_epochs:
        return 1.0
    return max(0.0, 1.0 - (epoch - constant_epochs) / float(decay_epochs))


def recon_dsm_loss(net, x0, z, t, noise, schedule):
    """Denoising score-matching loss for the conditional point score net.

    Perturbs x0 to time t with the given noise, regresses the net's score
    against the conditional target, weights by g(t)^2 / 2, and averages the
    per-point squared residual norms.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    xt = schedule.perturb(x0, t, noise)
    target = schedule.conditional_score_target(x0, xt, t)
    resid = np.asarray(net.evaluate(xt, z, t), dtype=np.float64) - target
    return 0.5 * schedule.beta(t) * float(np.mean(np.sum(resid * resid, axis=-1)))


def latent_dsm_loss(net, z0, t, noise, schedule):
    """Denoising score-matching loss along the d-dimensional latent path.

    Same construction as recon_dsm_loss but the whole code is one sample, so
    the squared residual norm is not averaged over a points axis.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    zt = schedule.perturb(z0, t, noise)
    target = schedule.conditional_score_target(z0, zt, t)
    resid = np.asarray(net.evaluate(zt, None, t), dtype=np.float64) - target
    return 0.5 * schedule.beta(t) * float(np.dot(resid, resid))


def entropy_term(mean, logvar):
    """Differential entropy of N(mean, diag exp(logvar)), closed form."""
    logvar = np.asarray(logvar, dtype=np.float64)
    return 0.5 * float(np.sum(logvar + LOG_2PI + 1.0))


def entropy_term_mc(mean, logvar, noise):
    """Single-sample estimate -log q(z0) at z0 = mean + exp(logvar/2) noise.

    Shares the reparameterization noise with the training draw; its gradient
    with respect to (mean, logvar) matches the closed form exactly because
    (z0 - mean)^2 / var reduces to noise^2.
    """
    logvar = np.asarray(logvar, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    return 0.5 * float(np.sum(logvar + LOG_2PI + noise * noise))


def _cloud_losses(bundle, points, schedule, config, rng):
    """Forward and backward for one cloud. Returns losses and flat grads."""
    n = points.shape[0]
    d = bundle.latent_dim

    t = rng.uniform(config.t_floor, 1.0)
    eps_z = rng.standard_normal(d)
    noise_x = rng.standard_normal((n, 3))
    noise_z = rng.standard_normal(d)

    mean, logvar, enc_cache = bundle.encoder.forward(points)
    z0 = reparameterize(mean, logvar, eps_z)

    a = schedule.drift_coef(t)
    b = schedule.diffusion_std(t)
    g2 = schedule.beta(t)

    xt = a * points + b * noise_x
    target_x = -noise_x / b
    s_x, dec_cache = bundle.decoder.forward(xt, z0, t)
    r_x = s_x - target_x
    loss_x = 0.5 * g2 * float(np.mean(np.sum(r_x * r_x, axis=-1)))

    zt = a * z0 + b * noise_z
    target_z = -noise_z / b
    s_z, lat_cache = bundle.latent.forward(zt, t)
    r_z = s_z - target_z
    loss_z = 0.5 * g2 * float(np.dot(r_z, r_z))

    if config.entropy_mode == "monte_carlo":
        ent = entropy_term_mc(mean, logvar, eps_z)
    else:
        ent = entropy_term(mean, logvar)

    g_dec, _, dz_dec = bundle.decoder.backward(dec_cache, (g2 / n) * r_x)
    g_lat, dzt = bundle.latent.backward(lat_cache, g2 * r_z)
    dz0 = dz_dec + a * dzt
    dmean = dz0
    # d(total)/dlogvar: reparameterization path plus -1/2 from the entropy.
    dlogvar = dz0 * eps_z * 0.5 * np.exp(0.5 * logvar) - 0.5
    g_enc = bundle.encoder.backward(enc_cache, dmean, dlogvar)

    return loss_x, loss_z, ent, g_enc, g_dec, g_lat


def train_step(bundle, batch, schedule, config, rng, optimizers, lr_scale=1.0,
               epoch=0):
    """One optimization step over a batch of clouds.

    Per-cloud random draws happen in batch order from the supplied generator,
    so a fixed seed fixes the whole step. Gradients are averaged over the
    batch and applied with three independent Adam states (encoder, decoder,
    latent), each scaled by lr_scale.
    """
    if len(batch) == 0:
        raise InvalidInputError("batch must contain at least one cloud")
    n_b = len(batch)
    sums = np.zeros(3)
    acc_enc = np.zeros(bundle.encoder.n_params)
    acc_dec = np.zeros(bundle.decoder.n_params)
    acc_lat = np.zeros(bundle.latent.n_params)
    for cloud in batch:
        pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
        loss_x, loss_z, ent, g_enc, g_dec, g_lat = _cloud_losses(
            bundle, pts, schedule, config, rng
        )
        sums += (loss_x, loss_z, ent)
        acc_enc += g_enc
        acc_dec += g_dec
        acc_lat += g_lat
    sums /= n_b
    if not np.all(np.isfinite(sums)):
        raise NumericalAbortError(
            f"non-finite loss at epoch {epoch}: recon={sums[0]}, "
            f"latent={sums[1]}, entropy={sums[2]}"
        )
    optimizers["encoder"].step(bundle.encoder.params, acc_enc / n_b, lr_scale)
    optimizers["decoder"].step(bundle.decoder.params, acc_dec / n_b, lr_scale)
    optimizers["latent"].step(bundle.latent.params, acc_lat / n_b, lr_scale)
    return LossReport(
        epoch=epoch, recon=float(sums[0]), latent=float(sums[1]), entropy=float(sums[2])
    )


def make_optimizers(bundle, config):
    return {
        "encoder": Adam(bundle.encoder.n_params, config.lr_encoder),
        "decoder": Adam(bundle.decoder.n_params, config.lr_decoder),
        "latent": Adam(bundle.latent.n_params, config.lr_latent),
    }


def _write_loss_rows(path, reports, append):
    header = not append or not os.path.exists(path)
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(["epoch", "recon", "latent", "entropy", "total"])
        for r in reports:
            writer.writerow(
                [r.epoch, repr(r.recon), repr(r.latent), repr(r.entropy), repr(r.total)]
            )


def train(bundle, dataset, schedule, config, loss_path=None, start_epoch=0,
          log_every=0):
    """Run epochs start_epoch..config.epochs-1, mutating bundle in place.

    Each epoch reshuffles the dataset under a per-epoch generator derived
    from (config.seed, epoch), so resuming at an epoch boundary replays the
    exact noise stream a fresh run would have used (optimizer moments do
    restart from zero on resume). Loss rows are appended to
    loss_path when start_epoch > 0, otherwise the file is rewritten with a
    header. Returns the list of per-epoch LossReports produced by this call.
    """
    if len(dataset) < 2:
        raise InvalidInputError("training needs at least two clouds")
    sizes = {c.n_points if isinstance(c, PointCloud) else len(c) for c in dataset}
    if len(sizes) != 1:
        raise InvalidInputError(f"clouds must share one point count, got {sizes}")
    if not 0 <= start_epoch < config.epochs:
        raise InvalidParameterError(
            f"start_epoch {start_epoch} outside [0, {config.epochs})"
        )

    optimizers = make_optimizers(bundle, config)
    reports = []
    for epoch in range(start_epoch, config.epochs):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(config.seed, epoch)))
        perm = rng.permutation(len(dataset))
        scale = lr_factor(epoch, config.lr_constant_epochs, config.lr_decay_epochs)
        epoch_sums = np.zeros(3)
        for lo in range(0, len(perm), config.batch_size):
            batch = [dataset[i] for i in perm[lo : lo + config.batch_size]]
            rep = train_step(
                bundle, batch, schedule, config, rng, optimizers, scale, epoch
            )
            epoch_sums += np.array([rep.recon, rep.latent, rep.entropy]) * len(batch)
        epoch_sums /= len(dataset)
        report = LossReport(
            epoch=epoch,
            recon=float(epoch_sums[0]),
            latent=float(epoch_sums[1]),
            entropy=float(epoch_sums[2]),
        )
        reports.append(report)
        if loss_path is not None:
            _write_loss_rows(loss_path, [report], append=(epoch > 0))
        if log_every and (epoch % log_every == 0 or epoch == config.epochs - 1):
            print(
                f"epoch {epoch}: recon={report.recon:.4f} latent={report.latent:.4f} "
                f"entropy={report.entropy:.4f} total={report.total:.4f}"
            )
    return reports
