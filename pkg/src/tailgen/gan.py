"""Stage 2: adversarial refinement of the synthetic pool.

A critic scores joint rows (trained only on real rare rows vs generator
output) under the Wasserstein objective plus a gradient penalty on random
interpolates; the generator maps each Stage-1 row to a refined row and is
trained against the critic score plus a kernel two-sample (MMD^2) term
toward the real rare batch. After training, the refined pool is simply the
generator applied to every seed row.

Loss surfaces are differentiated analytically (see nn.py for the
second-order path through the penalty). The kernel bandwidth is fixed per
evaluation: when the median heuristic is active it is recomputed from the
current combined batch each generator step and then held constant inside
the gradient, the usual detached-median convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .data import RngStream
from .errors import (
    BadBandwidth,
    BatchTooSmall,
    DivergedTraining,
    InsufficientData,
    ShapeMismatch,
    TooFewRows,
)
from . import nn
from .nn import Mlp
from .smogn import REFINED, NOISE_SEEDED, SyntheticPool

HIDDEN_WIDTHS = (128, 256, 128)


@dataclass(frozen=True)
class GanConfig:
    """Training knobs. bandwidth None selects the median heuristic."""

    lambda_gp: float = 10.0
    alpha: float = 1.0
    critic_steps_per_gen: int = 5
    batch_size: int = 64
    iterations: int = 2000
    critic_lr: float = 1e-4
    # the generator starts at identity and only needs a light touch; larger
    # rates make its output oscillate around the target distribution
    gen_lr: float = 2e-5
    beta1: float = 0.0
    beta2: float = 0.9
    adam_epsilon: float = 1e-8
    bandwidth: float | None = None

    def __post_init__(self):
        if self.lambda_gp < 0 or self.alpha < 0:
            raise ValueError("lambda_gp and alpha must be >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.critic_steps_per_gen < 1:
            raise ValueError("critic_steps_per_gen must be >= 1")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise BadBandwidth(f"fixed bandwidth must be > 0, got {self.bandwidth}")

    def to_dict(self) -> dict:
        return {
            "lambda_gp": self.lambda_gp,
            "alpha": self.alpha,
            "critic_steps_per_gen": self.critic_steps_per_gen,
            "batch_size": self.batch_size,
            "iterations": self.iterations,
            "critic_lr": self.critic_lr,
            "gen_lr": self.gen_lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_epsilon": self.adam_epsilon,
            "bandwidth": self.bandwidth,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GanConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown GanConfig keys: {sorted(unknown)}")
        return cls(**payload)


@dataclass
class TrainHistory:
    """Per-generator-iteration loss traces."""

    critic_loss: list[float] = field(default_factory=list)
    gen_loss: list[float] = field(default_factory=list)
    mmd2: list[float] = field(default_factory=list)
    gradient_penalty: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.gen_loss)


def median_bandwidth(batch: np.ndarray) -> float:
    """Median of the strictly positive pairwise distances; 1.0 if none."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] < 2:
        raise TooFewRows("median bandwidth needs at least 2 rows")
    d = pdist(batch)
    pos = d[d > 0.0]
    if pos.size == 0:
        return 1.0
    return float(np.median(pos))


def _resolve_bandwidth(config: GanConfig, combined: np.ndarray) -> float:
    if config.bandwidth is not None:
        return config.bandwidth
    return median_bandwidth(combined)


def _gaussian_kernel(sq_dists: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-sq_dists / (2.0 * sigma * sigma))


def mmd2_unbiased(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """Unbiased squared MMD with a Gaussian kernel; may be negative."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, m = x.shape[0], y.shape[0]
    if n < 2 or m < 2:
        raise BatchTooSmall(f"need >= 2 rows on each side, got {n} and {m}")
    if sigma <= 0:
        raise BadBandwidth(f"bandwidth must be > 0, got {sigma}")
    k_xx = _gaussian_kernel(cdist(x, x, "sqeuclidean"), sigma)
    k_yy = _gaussian_kernel(cdist(y, y, "sqeuclidean"), sigma)
    k_xy = _gaussian_kernel(cdist(x, y, "sqeuclidean"), sigma)
    term_x = (k_xx.sum() - np.trace(k_xx)) / (n * (n - 1))
    term_y = (k_yy.sum() - np.trace(k_yy)) / (m * (m - 1))
    cross = 2.0 * k_xy.sum() / (n * m)
    return float(term_x + term_y - cross)


def _mmd2_and_grad_wrt_x(
    x: np.ndarray, y: np.ndarray, sigma: float
) -> tuple[float, np.ndarray]:
    """MMD^2(x, y) and its gradient with respect to the x rows."""
    n, m = x.shape[0], y.shape[0]
    if n < 2 or m < 2:
        raise BatchTooSmall(f"need >= 2 rows on each side, got {n} and {m}")
    k_xx = _gaussian_kernel(cdist(x, x, "sqeuclidean"), sigma)
    np.fill_diagonal(k_xx, 0.0)
    k_yy = _gaussian_kernel(cdist(y, y, "sqeuclidean"), sigma)
    k_xy = _gaussian_kernel(cdist(x, y, "sqeuclidean"), sigma)

    value = (
        k_xx.sum() / (n * (n - 1))
        + (k_yy.sum() - np.trace(k_yy)) / (m * (m - 1))
        - 2.0 * k_xy.sum() / (n * m)
    )
    sig2 = sigma * sigma
    # d k(u,v)/du = -k(u,v) (u - v) / sigma^2
    row_xx = k_xx.sum(axis=1)
    grad_self = (-2.0 / (n * (n - 1) * sig2)) * (row_xx[:, None] * x - k_xx @ x)
    row_xy = k_xy.sum(axis=1)
    grad_cross = (2.0 / (n * m * sig2)) * (row_xy[:, None] * x - k_xy @ y)
    return float(value), grad_self + grad_cross


def _draw_eps(rng: RngStream, n: int) -> np.ndarray:
    return rng.generator().uniform(0.0, 1.0, size=n)


def _interpolates(
    real: np.ndarray, fake: np.ndarray, eps: np.ndarray
) -> np.ndarray:
    return eps[:, None] * real + (1.0 - eps)[:, None] * fake


def gradient_penalty(
    critic: Mlp, real_batch: np.ndarray, fake_batch: np.ndarray, rng: RngStream
) -> float:
    """Mean squared deviation of the critic's gradient norm from 1 on interpolates."""
    real = np.asarray(real_batch, dtype=np.float64)
    fake = np.asarray(fake_batch, dtype=np.float64)
    if real.shape != fake.shape:
        raise ShapeMismatch(
            f"real batch {real.shape} and fake batch {fake.shape} must match"
        )
    eps = _draw_eps(rng, real.shape[0])
    u_hat = _interpolates(real, fake, eps)
    g = nn.input_gradients(critic, u_hat)
    norms = np.sqrt(np.sum(g * g, axis=1))
    return float(np.mean((norms - 1.0) ** 2))


def critic_loss(
    critic: Mlp,
    generator: Mlp,
    real_batch: np.ndarray,
    seed_batch: np.ndarray,
    config: GanConfig,
    rng: RngStream,
) -> float:
    """mean D(G(x)) - mean D(z) + lambda_gp * penalty, one rng draw for eps."""
    fake = nn.forward(generator, np.asarray(seed_batch, dtype=np.float64))
    real = np.asarray(real_batch, dtype=np.float64)
    wass = float(np.mean(nn.forward(critic, fake)) - np.mean(nn.forward(critic, real)))
    if config.lambda_gp == 0.0:
        return wass
    return wass + config.lambda_gp * gradient_penalty(critic, real, fake, rng)


def generator_loss(
    critic: Mlp,
    generator: Mlp,
    seed_batch: np.ndarray,
    real_batch: np.ndarray,
    config: GanConfig,
) -> float:
    """-mean D(G(x)) + alpha * MMD^2(G(x), z) at the configured bandwidth."""
    fake = nn.forward(generator, np.asarray(seed_batch, dtype=np.float64))
    real = np.asarray(real_batch, dtype=np.float64)
    adv = -float(np.mean(nn.forward(critic, fake)))
    if config.alpha == 0.0:
        return adv
    sigma = _resolve_bandwidth(config, np.vstack([fake, real]))
    return adv + config.alpha * mmd2_unbiased(fake, real, sigma)


def critic_grads(
    critic: Mlp,
    generator: Mlp,
    real_batch: np.ndarray,
    seed_batch: np.ndarray,
    config: GanConfig,
    eps: np.ndarray,
) -> tuple[float, list[np.ndarray], float]:
    """Critic loss value, its parameter gradients, and the penalty value.

    eps holds the interpolation draws so value and gradient share them.
    """
    real = np.asarray(real_batch, dtype=np.float64)
    fake = nn.forward(generator, np.asarray(seed_batch, dtype=np.float64))
    if real.shape != fake.shape:
        raise ShapeMismatch(
            f"real batch {real.shape} and fake batch {fake.shape} must match"
        )
    n = real.shape[0]

    stacked = np.vstack([fake, real])
    cache = nn.forward_cache(critic, stacked)
    d_out = np.concatenate([np.full((n, 1), 1.0 / n), np.full((n, 1), -1.0 / n)])
    grads = nn.param_grads_from_output(critic, cache, d_out)
    wass = float(np.mean(cache.output[:n]) - np.mean(cache.output[n:]))

    gp_value = 0.0
    if config.lambda_gp != 0.0:
        u_hat = _interpolates(real, fake, eps)
        gp_value, gp_grads, _ = nn.grad_norm_penalty_and_grads(critic, u_hat)
        grads = nn.add_scaled(grads, gp_grads, config.lambda_gp)
    return wass + config.lambda_gp * gp_value, grads, gp_value


def generator_grads(
    critic: Mlp,
    generator: Mlp,
    seed_batch: np.ndarray,
    real_batch: np.ndarray,
    config: GanConfig,
    sigma: float | None = None,
) -> tuple[float, list[np.ndarray], float]:
    """Generator loss value, parameter gradients, and the MMD^2 value.

    sigma overrides the configured bandwidth (the training loop resolves
    the median heuristic once per step and passes it here).
    """
    seeds = np.asarray(seed_batch, dtype=np.float64)
    real = np.asarray(real_batch, dtype=np.float64)
    cache = nn.forward_cache(generator, seeds)
    fake = cache.output
    n = fake.shape[0]

    crit_scores = nn.forward(critic, fake)
    adv = -float(np.mean(crit_scores))
    d_fake = -nn.input_gradients(critic, fake) / n

    mmd_value = 0.0
    if config.alpha != 0.0:
        if sigma is None:
            sigma = _resolve_bandwidth(config, np.vstack([fake, real]))
        mmd_value, mmd_grad = _mmd2_and_grad_wrt_x(fake, real, sigma)
        d_fake = d_fake + config.alpha * mmd_grad

    grads = nn.param_grads_from_output(generator, cache, d_fake)
    return adv + config.alpha * mmd_value, grads, mmd_value


def init_refiner(widths, rng: RngStream, noise: float = 0.05) -> Mlp:
    """Generator initialized as a near-identity map.

    The refiner's job is to nudge seed rows, so training starts from
    "change nothing": x is carried through the ReLU stack as the pair
    (relu(x), relu(-x)) and reassembled at the output, which reproduces x
    exactly; a small random component on top breaks symmetry so every
    unit receives gradient.
    """
    widths = tuple(int(w) for w in widths)
    d = widths[0]
    if widths[-1] != d:
        raise BadWidths("refiner output width must equal its input width")
    if any(w < 2 * d for w in widths[1:-1]):
        raise BadWidths(f"refiner hidden widths must be >= {2 * d}")
    net = nn.init_mlp(widths, rng)
    ws = [noise * w for w in net.weights]
    bs = [b.copy() for b in net.biases]
    # identity skeleton: first layer splits signs, middle layers pass the
    # 2d carrier channels through, last layer recombines them
    ws[0][: 2 * d, :] = 0.0
    ws[0][:d, :] += np.eye(d)
    ws[0][d : 2 * d, :] -= np.eye(d)
    for layer in range(1, len(ws) - 1):
        ws[layer][: 2 * d, : 2 * d] = np.eye(2 * d)
    ws[-1][:, : 2 * d] = 0.0
    ws[-1][:, :d] += np.eye(d)
    ws[-1][:, d : 2 * d] -= np.eye(d)
    return Mlp(widths, tuple(ws), tuple(bs))


def noise_pool(n_rows: int, dim: int, rng: RngStream) -> SyntheticPool:
    """Standard-normal seed rows for refinement without a Stage-1 pool."""
    rows = rng.generator().normal(0.0, 1.0, size=(n_rows, dim))
    return SyntheticPool(
        rows=rows,
        provenance=np.array([NOISE_SEEDED] * n_rows, dtype=object),
        seed_index=np.full(n_rows, -1, dtype=np.int64),
    )


def train(
    real_rare: np.ndarray | SyntheticPool,
    seed_pool: SyntheticPool,
    config: GanConfig,
    rng: RngStream,
) -> tuple[Mlp, Mlp, TrainHistory]:
    """Alternate critic/generator updates over joint rows in scaled units.

    real_rare is the (n, d) matrix of real rare joint rows. Mini-batches
    are drawn with replacement so tiny rare sets still work. Every
    generator update appends one history record; a non-finite loss aborts
    with the partial history attached to the raised error.
    """
    real = np.asarray(
        real_rare.rows if isinstance(real_rare, SyntheticPool) else real_rare,
        dtype=np.float64,
    )
    seeds = seed_pool.rows
    if real.ndim != 2 or real.shape[0] < 2 or seeds.shape[0] < 2:
        raise InsufficientData("need at least 2 real rows and 2 seed rows")
    if real.shape[1] != seeds.shape[1]:
        raise ShapeMismatch(
            f"real dim {real.shape[1]} != seed dim {seeds.shape[1]}"
        )
    d = real.shape[1]
    batch = max(2, min(config.batch_size, max(real.shape[0], seeds.shape[0])))

    generator = init_refiner((d, *HIDDEN_WIDTHS, d), rng.derive(1))
    critic = nn.init_mlp((d, *HIDDEN_WIDTHS, 1), rng.derive(2))
    gen_opt = nn.adam_init(
        generator.params(), config.gen_lr, config.beta1, config.beta2, config.adam_epsilon
    )
    critic_opt = nn.adam_init(
        critic.params(), config.critic_lr, config.beta1, config.beta2, config.adam_epsilon
    )

    draw = rng.derive(3).generator()
    history = TrainHistory()

    # adversarial training oscillates rather than converges; averaging the
    # generator over the tail of the run lands on the oscillation centre
    avg_start = config.iterations - max(1, config.iterations // 2)
    avg_params: list[np.ndarray] | None = None
    avg_count = 0

    for iteration in range(config.iterations):
        c_loss = gp_value = 0.0
        for _ in range(config.critic_steps_per_gen):
            real_idx = draw.integers(0, real.shape[0], size=batch)
            seed_idx = draw.integers(0, seeds.shape[0], size=batch)
            eps = draw.uniform(0.0, 1.0, size=batch)
            c_loss, c_grads, gp_value = critic_grads(
                critic, generator, real[real_idx], seeds[seed_idx], config, eps
            )
            if not np.isfinite(c_loss):
                raise DivergedTraining(
                    f"critic loss became non-finite at iteration {len(history)}",
                    history,
                )
            new_params, critic_opt = nn.adam_step(critic_opt, critic.params(), c_grads)
            critic = critic.with_params(new_params)

        seed_idx = draw.integers(0, seeds.shape[0], size=batch)
        real_idx = draw.integers(0, real.shape[0], size=batch)
        seed_batch = seeds[seed_idx]
        real_batch = real[real_idx]
        sigma = None
        if config.alpha != 0.0:
            fake = nn.forward(generator, seed_batch)
            sigma = _resolve_bandwidth(config, np.vstack([fake, real_batch]))
        g_loss, g_grads, mmd_value = generator_grads(
            critic, generator, seed_batch, real_batch, config, sigma
        )
        if not np.isfinite(g_loss):
            raise DivergedTraining(
                f"generator loss became non-finite at iteration {len(history)}",
                history,
            )
        new_params, gen_opt = nn.adam_step(gen_opt, generator.params(), g_grads)
        generator = generator.with_params(new_params)

        if iteration >= avg_start:
            if avg_params is None:
                avg_params = [p.copy() for p in new_params]
            else:
                avg_params = [a + p for a, p in zip(avg_params, new_params)]
            avg_count += 1

        history.critic_loss.append(float(c_loss))
        history.gen_loss.append(float(g_loss))
        history.mmd2.append(float(mmd_value))
        history.gradient_penalty.append(float(gp_value))

    if avg_params is not None and avg_count > 0:
        generator = generator.with_params([p / avg_count for p in avg_params])
    return generator, critic, history


def refine(generator: Mlp, seed_pool: SyntheticPool) -> SyntheticPool:
    """One generator pass over every seed row; provenance becomes 'refined'."""
    if seed_pool.rows.shape[1] != generator.widths[0]:
        raise ShapeMismatch(
            f"pool dim {seed_pool.rows.shape[1]} != generator input "
            f"width {generator.widths[0]}"
        )
    out = nn.forward(generator, seed_pool.rows)
    return SyntheticPool(
        rows=out,
        provenance=np.array([REFINED] * seed_pool.n_rows, dtype=object),
        seed_index=seed_pool.seed_index.copy(),
    )


def history_rows(history: TrainHistory) -> list[tuple]:
    """(iteration, critic_loss, gen_loss, mmd2, gp) tuples for CSV export."""
    return [
        (i, history.critic_loss[i], history.gen_loss[i], history.mmd2[i],
         history.gradient_penalty[i])
        for i in range(len(history))
    ]
