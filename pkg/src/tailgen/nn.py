"""Fixed-architecture MLP engine: forward, backprop, input gradients,
the double-backward needed by the gradient-norm penalty, and Adam.

Everything is float64 numpy. Networks are affine layers with ReLU on all
hidden layers and identity on the output; the ReLU subgradient at exactly
zero is defined as zero so results are deterministic.

The only second-order consumer in this codebase is the penalty on the
critic's input-gradient norm, so instead of a general tape there is one
closed-form routine for it. For a fixed ReLU activation pattern the
network is linear, the input gradient g is multilinear in the weights, and
d(v . g)/dW_l works out to outer(delta_l, c_{l-1}) where delta is the usual
input-gradient backward chain and c is the forward chain of v through the
mask-linearized network. Bias gradients on that path are zero almost
everywhere (masks are locally constant), matching what reverse-mode
autodiff yields for piecewise-linear nets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RngStream
from .errors import BadWidths, NonScalarOutput, ShapeMismatch

CHECKPOINT_VERSION = "mlp-v1"


@dataclass(frozen=True)
class Mlp:
    """Weights/biases for one fully connected net.

    weights[l] has shape (widths[l+1], widths[l]); biases[l] has length
    widths[l+1]. ReLU on hidden layers, identity on the last.
    """

    widths: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list[np.ndarray]:
        """Flat parameter list, layer order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def with_params(self, params: list[np.ndarray]) -> "Mlp":
        ws, bs = [], []
        for layer in range(self.n_layers):
            ws.append(np.asarray(params[2 * layer], dtype=np.float64))
            bs.append(np.asarray(params[2 * layer + 1], dtype=np.float64))
        return Mlp(self.widths, tuple(ws), tuple(bs))


def init_mlp(widths, rng: RngStream) -> Mlp:
    """Glorot-uniform weights (half-width sqrt(6/(fan_in+fan_out))), zero biases."""
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise BadWidths(f"widths must have >= 2 entries, all >= 1: {widths}")
    gen = rng.generator()
    ws, bs = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(gen.uniform(-limit, limit, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return Mlp(widths, tuple(ws), tuple(bs))


def forward(net: Mlp, batch: np.ndarray) -> np.ndarray:
    """Layer-by-layer affine + ReLU; identity on the output layer."""
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.widths[0]:
        raise ShapeMismatch(
            f"batch must be (n, {net.widths[0]}), got {a.shape}"
        )
    last = net.n_layers - 1
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w.T + b
        if layer != last:
            a = np.maximum(a, 0.0)
    return a


@dataclass(frozen=True)
class ForwardCache:
    """Activations and ReLU masks kept for a backward pass."""

    inputs: np.ndarray
    activations: list[np.ndarray]  # post-ReLU activations of hidden layers
    masks: list[np.ndarray]  # 1.0 where pre-activation > 0
    output: np.ndarray


def forward_cache(net: Mlp, batch: np.ndarray) -> ForwardCache:
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.widths[0]:
        raise ShapeMismatch(f"batch must be (n, {net.widths[0]}), got {a.shape}")
    acts, masks = [], []
    last = net.n_layers - 1
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        if layer != last:
            m = (z > 0.0).astype(np.float64)
            a = z * m
            acts.append(a)
            masks.append(m)
        else:
            a = z
    return ForwardCache(
        inputs=np.asarray(batch, dtype=np.float64),
        activations=acts,
        masks=masks,
        output=a,
    )


def param_grads_from_output(
    net: Mlp, cache: ForwardCache, d_out: np.ndarray
) -> list[np.ndarray]:
    """Backprop d(loss)/d(params) given d(loss)/d(output) per row.

    d_out has shape (n, widths[-1]); any 1/n scaling is the caller's job.
    Returns gradients in the same layout as Mlp.params().
    """
    delta = np.asarray(d_out, dtype=np.float64)
    if delta.shape != cache.output.shape:
        raise ShapeMismatch(
            f"d_out shape {delta.shape} != output shape {cache.output.shape}"
        )
    grads: list[np.ndarray | None] = [None] * (2 * net.n_layers)
    for layer in range(net.n_layers - 1, -1, -1):
        a_prev = cache.inputs if layer == 0 else cache.activations[layer - 1]
        grads[2 * layer] = delta.T @ a_prev
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ net.weights[layer]) * cache.masks[layer - 1]
    return grads  # type: ignore[return-value]


def _input_grad_chain(net: Mlp, cache: ForwardCache) -> list[np.ndarray]:
    """Backward sensitivities d(output)/d(z_l) for a scalar-output net.

    Returns [D_1, ..., D_L] where D_L is all-ones (n, 1) and
    D_{l-1} = (D_l @ W_l) * mask_{l-1}.
    """
    n = cache.output.shape[0]
    chain = [np.ones((n, 1))]
    for layer in range(net.n_layers - 1, 0, -1):
        d = (chain[0] @ net.weights[layer]) * cache.masks[layer - 1]
        chain.insert(0, d)
    return chain


def input_gradients(net: Mlp, batch: np.ndarray) -> np.ndarray:
    """d(scalar output)/d(input) for every batch row, by reverse accumulation."""
    if net.widths[-1] != 1:
        raise NonScalarOutput(
            f"input gradients need a scalar-output net, got width {net.widths[-1]}"
        )
    cache = forward_cache(net, batch)
    chain = _input_grad_chain(net, cache)
    return chain[0] @ net.weights[0]


def input_gradient(net: Mlp, point: np.ndarray) -> np.ndarray:
    """Single-point convenience wrapper around input_gradients."""
    point = np.asarray(point, dtype=np.float64)
    return input_gradients(net, point[None, :])[0]


def grad_norm_penalty_and_grads(
    net: Mlp, points: np.ndarray, norm_eps: float = 1e-12
) -> tuple[float, list[np.ndarray], np.ndarray]:
    """mean((||grad_u D(u)|| - 1)^2) over rows, with d(penalty)/d(params).

    Returns (penalty, grads, per-row gradient norms). norm_eps guards the
    non-differentiable point at zero gradient norm (derivative taken as 0).
    """
    if net.widths[-1] != 1:
        raise NonScalarOutput("gradient penalty needs a scalar-output critic")
    cache = forward_cache(net, points)
    chain = _input_grad_chain(net, cache)
    g = chain[0] @ net.weights[0]  # (n, d)
    norms = np.sqrt(np.sum(g * g, axis=1))
    n = g.shape[0]
    penalty = float(np.mean((norms - 1.0) ** 2))

    safe = np.where(norms > norm_eps, norms, 1.0)
    coeff = np.where(norms > norm_eps, 2.0 * (norms - 1.0) / (n * safe), 0.0)
    v = g * coeff[:, None]  # v_i = d(penalty)/d(g_i)

    # forward chain of v through the mask-linearized network
    c = v
    c_chain = [c]
    for layer in range(net.n_layers - 1):
        c = (c @ net.weights[layer].T) * cache.masks[layer]
        c_chain.append(c)

    grads: list[np.ndarray] = []
    for layer in range(net.n_layers):
        grads.append(chain[layer].T @ c_chain[layer])
        grads.append(np.zeros_like(net.biases[layer]))
    return penalty, grads, norms


def zero_grads(net: Mlp) -> list[np.ndarray]:
    return [np.zeros_like(p) for p in net.params()]


def add_scaled(
    acc: list[np.ndarray], grads: list[np.ndarray], scale: float = 1.0
) -> list[np.ndarray]:
    return [a + scale * g for a, g in zip(acc, grads)]


@dataclass(frozen=True)
class AdamState:
    """Moments and step counter for bias-corrected Adam."""

    first_moment: tuple[np.ndarray, ...]
    second_moment: tuple[np.ndarray, ...]
    step_count: int
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float


def adam_init(
    params: list[np.ndarray],
    learning_rate: float = 1e-4,
    beta1: float = 0.0,
    beta2: float = 0.9,
    epsilon: float = 1e-8,
) -> AdamState:
    """Fresh optimizer state; defaults follow common adversarial-training practice."""
    return AdamState(
        first_moment=tuple(np.zeros_like(p) for p in params),
        second_moment=tuple(np.zeros_like(p) for p in params),
        step_count=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(
    state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns (new params, new state)."""
    if len(params) != len(state.first_moment) or len(grads) != len(params):
        raise ShapeMismatch("parameter/gradient/state layouts disagree")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ShapeMismatch(f"param shape {p.shape} != grad shape {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    next_state = AdamState(
        first_moment=tuple(new_m),
        second_moment=tuple(new_v),
        step_count=t,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_p, next_state


def mlp_to_dict(net: Mlp) -> dict:
    """Checkpoint payload: widths plus flat row-major arrays in layer order."""
    return {
        "version": CHECKPOINT_VERSION,
        "widths": list(net.widths),
        "weights": [w.reshape(-1).tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def mlp_from_dict(payload: dict) -> Mlp:
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version {payload.get('version')!r}"
        )
    widths = tuple(int(w) for w in payload["widths"])
    ws, bs = [], []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        w = np.asarray(payload["weights"][i], dtype=np.float64).reshape(fan_out, fan_in)
        b = np.asarray(payload["biases"][i], dtype=np.float64)
        if b.shape != (fan_out,):
            raise ValueError(f"layer {i} bias has wrong length")
        ws.append(w)
        bs.append(b)
    return Mlp(widths, tuple(ws), tuple(bs))
