"""Fully connected networks with hand-written backpropagation."""

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear")


def orthogonal(rng, shape, gain, dtype):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).astype(dtype)


def init_mlp(rng, sizes, out_gain, dtype=np.float32):
    """Orthogonal weights (gain sqrt(2) on hidden layers), zero biases.

    Returns a list of ``(W, b)`` with ``W`` of shape ``(fan_in, fan_out)``.
    """
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        layers.append((orthogonal(rng, (fan_in, fan_out), gain, dtype), np.zeros(fan_out, dtype=dtype)))
    return layers


def mlp_forward(x, layers, out_activation="linear"):
    """Forward pass through ReLU hidden layers.

    Returns the output and a cache for :func:`mlp_backward`.
    """
    acts = [x]
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if i < last:
            h = np.maximum(z, 0)
        elif out_activation == "tanh":
            h = np.tanh(z)
        elif out_activation == "linear":
            h = z
        else:
            raise ValueError(f"unknown activation {out_activation!r}")
        acts.append(h)
    return h, acts


def mlp_backward(acts, layers, grad_out, out_activation="linear"):
    """Gradients ``[(dW, db), ...]`` given d(loss)/d(output)."""
    grads = [None] * len(layers)
    g = grad_out
    if out_activation == "tanh":
        g = g * (1 - acts[-1] ** 2)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        h_in = acts[i]
        grads[i] = (h_in.T @ g, g.sum(axis=0))
        if i > 0:
            g = (g @ w.T) * (acts[i] > 0)
    return grads
