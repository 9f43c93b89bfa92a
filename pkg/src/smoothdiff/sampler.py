"""Reverse-time generation with optional graph-smoothness guidance.

The sampler integrates the reverse SDE with Euler-Maruyama from t = 1 down
to a small positive floor. At each guided step the state is denoised with
Tweedie's identity, a k-NN graph Laplacian is built from that denoised
estimate, and the gradient of trace(Xhat^T L Xhat) with respect to the noisy
state is subtracted with strength alpha. Two chain rules are offered:
"frozen_score" ignores the score field's own dependence on the state, and
"exact_chain" includes it through a vector-Jacobian product (fields that
cannot differentiate themselves raise the unsupported-mode error).
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidInputError,
    InvalidParameterError,
    NumericalAbortError,
)
from .geometry import (
    PointCloud,
    build_knn_graph,
    build_laplacian,
    smoothness,
    smoothness_gradient,
)
from .sde import EPS_T

CONSTRAINT_MODES = ("off", "frozen_score", "exact_chain")


@dataclass(frozen=True)
class SamplerConfig:
    """Reverse-chain settings.

    The default alpha is sized for the default 1000-step chain; the
    correction is applied once per step without a dt factor, so halving
    n_steps roughly halves the total constraint effect.
    """

    n_steps: int = 1000
    alpha: float = 1e-4
    knn_k: int = 30
    graph_refresh_stride: int = 1
    constraint_mode: str = "frozen_score"
    seed: int = 0
    t_floor: float = EPS_T
    # Constraint applies only while t <= t_constraint; 1.0 means always.
    t_constraint: float = 1.0
    terminal_denoise: bool = False
    record_trajectory: bool = False

    def __post_init__(self):
        if self.n_steps < 1:
            raise InvalidParameterError("n_steps must be >= 1")
        if self.alpha < 0:
            raise InvalidParameterError("alpha must be >= 0")
        if self.knn_k < 1:
            raise InvalidParameterError("knn_k must be >= 1")
        if self.graph_refresh_stride < 1:
            raise InvalidParameterError("graph_refresh_stride must be >= 1")
        if self.constraint_mode not in CONSTRAINT_MODES:
            raise InvalidParameterError(
                f"constraint_mode must be one of {CONSTRAINT_MODES}, "
                f"got {self.constraint_mode!r}"
            )
        if not 0.0 < self.t_floor < 1.0:
            raise InvalidParameterError("t_floor must lie in (0, 1)")
        if not 0.0 < self.t_constraint <= 1.0:
            raise InvalidParameterError("t_constraint must lie in (0, 1]")

    @property
    def constrained(self):
        return self.constraint_mode != "off" and self.alpha > 0.0


@dataclass(frozen=True)
class Trajectory:
    """Diagnostic record of one chain: strictly decreasing times and the
    smoothness of the Tweedie-denoised estimate at each step.

    Holds n_steps + 1 rows; the final row measures the returned cloud itself
    (after any terminal denoise) on a fresh graph at t_floor.
    """

    step: np.ndarray
    t: np.ndarray
    smoothness: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "t", "smoothness"])
            for k, tk, sk in zip(self.step, self.t, self.smoothness):
                writer.writerow([int(k), repr(float(tk)), repr(float(sk))])


def tweedie_denoise(xt, score, t, schedule):
    """Posterior-mean estimate of the clean state: (xt + b^2 score) / a."""
    xt = np.asarray(xt, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    if xt.shape != score.shape:
        raise InvalidInputError("state and score shapes differ")
    a = schedule.drift_coef(t)
    b = schedule.diffusion_std(t)
    return (xt + b * b * score) / a


def _euler_step(x, score, t, dt, schedule, noise):
    g = schedule.sde_diffusion(t)
    drift = schedule.sde_drift(x, t) - g * g * score
    out = x - drift * dt + g * np.sqrt(dt) * noise
    if not np.all(np.isfinite(out)):
        raise NumericalAbortError(f"non-finite state after reverse step at t={t}")
    return out


def reverse_step(x, field, z, t, dt, schedule, noise):
    """One unconstrained Euler-Maruyama step of the reverse SDE."""
    x = np.asarray(x, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x.shape != noise.shape:
        raise InvalidInputError("state and noise shapes must match")
    if dt <= 0:
        raise InvalidParameterError("dt must be positive")
    score = np.asarray(field.evaluate(x, z, t), dtype=np.float64)
    if score.shape != x.shape:
        raise InvalidInputError("score shape does not match the state")
    return _euler_step(x, score, t, dt, schedule, noise)


def constraint_gradient(xt, field, z, t, laplacian, mode, schedule, score=None):
    """Gradient of trace(Xhat^T L Xhat) with respect to the noisy state.

    With Xhat = (xt + b^2 s(xt)) / a the exact chain rule gives
    (G + b^2 J_s^T G) / a where G = 2 L Xhat; "frozen_score" keeps only the
    first term. Returns zeros for mode "off". Passing a precomputed score
    skips one field evaluation.
    """
    xt = np.asarray(xt, dtype=np.float64)
    if mode not in CONSTRAINT_MODES:
        raise InvalidParameterError(
            f"constraint_mode must be one of {CONSTRAINT_MODES}, got {mode!r}"
        )
    if mode == "off":
        return np.zeros_like(xt)
    if score is None:
        score = field.evaluate(xt, z, t)
    a = schedule.drift_coef(t)
    b = schedule.diffusion_std(t)
    xhat = tweedie_denoise(xt, score, t, schedule)
    g_hat = smoothness_gradient(xhat, laplacian)
    if mode == "frozen_score":
        return g_hat / a
    vjp = field.input_vjp(xt, z, t, g_hat)
    return (g_hat + b * b * vjp) / a


def constrained_reverse_step(x, field, z, t, dt, schedule, config, noise,
                             laplacian=None):
    """Reverse step plus the smoothness correction when it is active.

    When no Laplacian is supplied and the constraint is active, one is built
    from the Tweedie-denoised state at the sampler's knn_k. With alpha = 0 or
    mode "off" the result is bitwise identical to reverse_step.
    """
    x = np.asarray(x, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    score = np.asarray(field.evaluate(x, z, t), dtype=np.float64)
    out = _euler_step(x, score, t, dt, schedule, noise)
    if config.constrained and t <= config.t_constraint:
        if laplacian is None:
            xhat = tweedie_denoise(x, score, t, schedule)
            laplacian = build_laplacian(build_knn_graph(xhat, config.knn_k))
        grad = constraint_gradient(
            x, field, z, t, laplacian, config.constraint_mode, schedule, score=score
        )
        out = out - config.alpha * grad
    return out


def sample_latent(field, schedule, config, rng):
    """Unconstrained reverse chain in latent space; returns the final code."""
    zt = rng.standard_normal(field.latent_dim)
    dt = (1.0 - config.t_floor) / config.n_steps
    for k in range(config.n_steps):
        t = 1.0 - k * dt
        zt = reverse_step(zt, field, None, t, dt, schedule,
                          rng.standard_normal(field.latent_dim))
    return zt


def generate(field, schedule, config, n_clouds, n_points, latent_field=None,
             latents=None):
    """Sample n_clouds point clouds of n_points each.

    Latent codes come from, in order of precedence: the explicit latents
    array (n_clouds, d), a reverse chain over latent_field, or None for
    fields that need no conditioning. Each cloud draws from an independent
    child stream of config.seed.

    Returns (clouds, trajectories); trajectories is None unless
    config.record_trajectory is set.
    """
    if n_clouds < 1 or n_points < 1:
        raise InvalidParameterError("n_clouds and n_points must be >= 1")
    needs_graph = config.constrained or config.record_trajectory
    if needs_graph and n_points < config.knn_k + 1:
        raise InvalidParameterError(
            f"graph construction needs n_points > knn_k ({config.knn_k})"
        )
    if latents is not None:
        latents = np.asarray(latents, dtype=np.float64)
        if latents.ndim != 2 or latents.shape[0] != n_clouds:
            raise InvalidInputError(
                f"latents must be ({n_clouds}, d), got {latents.shape}"
            )

    dt = (1.0 - config.t_floor) / config.n_steps
    streams = np.random.SeedSequence(config.seed).spawn(n_clouds)
    clouds = []
    trajectories = [] if config.record_trajectory else None

    for i in range(n_clouds):
        rng = np.random.default_rng(streams[i])
        if latents is not None:
            z = latents[i]
        elif latent_field is not None:
            z = sample_latent(latent_field, schedule, config, rng)
        else:
            z = None

        x = rng.standard_normal((n_points, 3))
        lap = None
        rows = []
        for k in range(config.n_steps):
            t = 1.0 - k * dt
            score = np.asarray(field.evaluate(x, z, t), dtype=np.float64)
            active = config.constrained and t <= config.t_constraint
            if active or config.record_trajectory:
                xhat = tweedie_denoise(x, score, t, schedule)
                if lap is None or k % config.graph_refresh_stride == 0:
                    lap = build_laplacian(build_knn_graph(xhat, config.knn_k))
                if config.record_trajectory:
                    rows.append((k, t, smoothness(xhat, lap)))
            x_next = _euler_step(x, score, t, dt, schedule,
                                 rng.standard_normal((n_points, 3)))
            if active:
                grad = constraint_gradient(
                    x, field, z, t, lap, config.constraint_mode, schedule,
                    score=score,
                )
                x_next = x_next - config.alpha * grad
            x = x_next
            if not np.all(np.isfinite(x)):
                raise NumericalAbortError(f"non-finite state at step {k}")
        if config.terminal_denoise:
            score = field.evaluate(x, z, config.t_floor)
            x = tweedie_denoise(x, score, config.t_floor, schedule)
        if config.record_trajectory:
            lap = build_laplacian(build_knn_graph(x, config.knn_k))
            rows.append((config.n_steps, config.t_floor, smoothness(x, lap)))
            arr = np.array(rows, dtype=np.float64)
            trajectories.append(
                Trajectory(
                    step=arr[:, 0].astype(np.int64), t=arr[:, 1], smoothness=arr[:, 2]
                )
            )
        clouds.append(PointCloud(x))
    return clouds, trajectories
