"""Six-layer feed-forward projection network with hand-written backprop.

Kept dependency-free (numpy only) so analytic gradients can be checked
against finite differences parameter by parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfig

DEFAULT_HIDDEN = (256, 256, 128, 64, 32)


_ACTIVATIONS = {
    "relu": (lambda a: np.maximum(a, 0.0), lambda a: (a > 0).astype(float)),
    "tanh": (np.tanh, lambda a: 1.0 - np.tanh(a) ** 2),
}


@dataclass
class Network:
    """Fully connected d -> hidden... -> 2 network, configurable units
    between layers (rectifier by default), linear output."""

    weights: list  # list of (W, b) arrays
    input_dim: int
    hidden: tuple[int, ...]
    seed: int
    nonlinearity: str = "relu"

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray, cache: bool = False):
        """Map (n, d) inputs to (n, 2) coordinates.

        With cache=True also returns per-layer (input, pre-activation) pairs
        for backward().
        """
        act, _ = _ACTIVATIONS[self.nonlinearity]
        z = np.asarray(x, dtype=float)
        caches = []
        for i, (w, b) in enumerate(self.weights):
            a = z @ w + b
            if cache:
                caches.append((z, a))
            z = a if i == len(self.weights) - 1 else act(a)
        return (z, caches) if cache else z

    def backward(self, caches: list, d_out: np.ndarray) -> list:
        """Gradients of sum(d_out * output) w.r.t. every (W, b)."""
        _, act_grad = _ACTIVATIONS[self.nonlinearity]
        grads = [None] * self.n_layers
        delta = np.asarray(d_out, dtype=float)  # d/d(pre-activation) of last layer
        for i in range(self.n_layers - 1, -1, -1):
            w, _ = self.weights[i]
            z_in, _pre = caches[i]
            grads[i] = (z_in.T @ delta, delta.sum(axis=0))
            if i > 0:
                _, pre_prev = caches[i - 1]
                delta = (delta @ w.T) * act_grad(pre_prev)
        return grads

    def flatten_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()])
                               for w, b in self.weights])

    def set_flat_params(self, vec: np.ndarray) -> None:
        pos = 0
        for i, (w, b) in enumerate(self.weights):
            nw, nb = w.size, b.size
            self.weights[i] = (vec[pos:pos + nw].reshape(w.shape).copy(),
                               vec[pos + nw:pos + nw + nb].copy())
            pos += nw + nb

    def copy(self) -> "Network":
        return Network(weights=[(w.copy(), b.copy()) for w, b in self.weights],
                       input_dim=self.input_dim, hidden=self.hidden, seed=self.seed,
                       nonlinearity=self.nonlinearity)


def init_network(d: int, hidden: tuple[int, ...] = DEFAULT_HIDDEN, seed: int = 0,
                 gain: float = 2.449489742783178, nonlinearity: str = "relu") -> Network:
    """Scaled-uniform fan-in initialization, deterministic per seed.

    The default gain (sqrt(6)) keeps rectifier activations from shrinking
    layer over layer, so output points start well away from the origin where
    the cosine objective is ill-conditioned.
    """
    if d < 1:
        raise BadConfig(f"input dimension must be >= 1, got {d}")
    if nonlinearity not in _ACTIVATIONS:
        raise BadConfig(f"unknown nonlinearity '{nonlinearity}', "
                        f"expected one of {sorted(_ACTIVATIONS)}")
    hidden = tuple(int(h) for h in hidden)
    if len(hidden) != 5:
        raise BadConfig(f"expected 5 hidden widths (six layers total), got {len(hidden)}")
    if any(h < 1 for h in hidden):
        raise BadConfig(f"hidden widths must be positive, got {hidden}")
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = [d, *hidden, 2]
    weights = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = gain / np.sqrt(fan_in)
        w = rng.uniform(-scale, scale, size=(fan_in, fan_out))
        # small positive hidden bias: keeps narrow nets from going fully
        # dead, which would pin output points onto the origin
        b = np.full(fan_out, 0.01) if i < len(sizes) - 2 else np.zeros(fan_out)
        weights.append((w, b))
    return Network(weights=weights, input_dim=d, hidden=hidden, seed=seed,
                   nonlinearity=nonlinearity)


@dataclass
class Adam:
    """Per-parameter adaptive step optimizer."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, network: Network, grads: list) -> None:
        if not self.m:
            self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in network.weights]
            self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in network.weights]
        self.t += 1
        b1t = 1 - self.beta1 ** self.t
        b2t = 1 - self.beta2 ** self.t
        for i, ((gw, gb), (w, b)) in enumerate(zip(grads, network.weights)):
            mw, mb = self.m[i]
            vw, vb = self.v[i]
            mw = self.beta1 * mw + (1 - self.beta1) * gw
            mb = self.beta1 * mb + (1 - self.beta1) * gb
            vw = self.beta2 * vw + (1 - self.beta2) * gw * gw
            vb = self.beta2 * vb + (1 - self.beta2) * gb * gb
            self.m[i] = (mw, mb)
            self.v[i] = (vw, vb)
            w = w - self.lr * (mw / b1t) / (np.sqrt(vw / b2t) + self.eps)
            b = b - self.lr * (mb / b1t) / (np.sqrt(vb / b2t) + self.eps)
            network.weights[i] = (w, b)
