"""Shared oracles for gradient tests: central finite differences over
every parameter of a network, and a scale-aware relative comparison."""

import numpy as np


def finite_diff_param_grads(value_fn, net, h=1e-4):
    """Central differences of value_fn(net) w.r.t. every parameter."""
    params = [p.copy() for p in net.params()]
    grads = []
    for pi in range(len(params)):
        g = np.zeros_like(params[pi])
        flat_p = params[pi].reshape(-1)
        flat_g = g.reshape(-1)
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + h
            up = value_fn(net.with_params(params))
            flat_p[j] = orig - h
            down = value_fn(net.with_params(params))
            flat_p[j] = orig
            flat_g[j] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, fd, floor=1e-3):
    """Worst relative disagreement across all parameters.

    Components far below the gradient's scale are compared against the
    floor, since central differences bottom out around 1e-7 absolute.
    """
    worst = 0.0
    for a, f in zip(analytic, fd):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


def min_preactivation_margin(net, batch):
    """Smallest |pre-activation| over hidden layers; guards ReLU kinks."""
    a = np.asarray(batch, dtype=float)
    margin = np.inf
    last = net.n_layers - 1
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        if layer != last:
            margin = min(margin, float(np.min(np.abs(z))))
            a = np.maximum(z, 0.0)
        else:
            a = z
    return margin


def sample_away_from_kinks(stream, shape, margin_nets, tol=1e-3, tries=50):
    """Draw a standard-normal batch whose pre-activations clear tol.

    margin_nets maps each candidate batch to the list of (net, batch)
    pairs that must stay off the kinks; deterministic given the stream.
    """
    for attempt in range(tries):
        batch = stream.derive(attempt).generator().normal(size=shape)
        if all(
            min_preactivation_margin(net, b) > tol
            for net, b in margin_nets(batch)
        ):
            return batch
    raise AssertionError(f"no kink-free batch found in {tries} tries")
