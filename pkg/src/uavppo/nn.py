"""Dense networks with hand-written reverse-mode gradients, policy heads and Adam.

Everything is float64. Inputs are either a single vector or a
``(batch, features)`` matrix; outputs follow the same convention.
"""
from __future__ import annotations

import json
from typing import List, Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear", "softplus")
CHECKPOINT_VERSION = 1
LOG_2PI = np.log(2.0 * np.pi)


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "softplus":
        return softplus(z)
    return z


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(float)
    if name == "softplus":
        return sigmoid(z)
    return None


def orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """Fully connected network.

    ``weights[i]`` has shape ``(out, in)``. ``forward`` caches what
    ``backward`` needs; ``backward`` returns gradients in :meth:`params`
    order and leaves the input gradient in ``self.input_grad``.
    """

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], activations: Sequence[str]):
        if not (len(weights) == len(biases) == len(activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for i, act in enumerate(activations):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
            if biases[i].shape != (weights[i].shape[0],):
                raise ValueError(f"bias {i} does not match weight rows")
            if i and weights[i].shape[1] != weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input does not chain with layer {i - 1}")
        self.weights = [np.array(w, dtype=float, order="C") for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self.activations = list(activations)
        self._cache = None
        self.input_grad = None

    @classmethod
    def build(cls, sizes: Sequence[int], rng: np.random.Generator, hidden_act: str = "tanh",
              out_act: str = "linear", out_gain: float = 1.0) -> "Mlp":
        weights, biases, acts = [], [], []
        n_layers = len(sizes) - 1
        for i in range(n_layers):
            last = i == n_layers - 1
            weights.append(orthogonal(rng, sizes[i + 1], sizes[i], out_gain if last else np.sqrt(2.0)))
            biases.append(np.zeros(sizes[i + 1]))
            acts.append(out_act if last else hidden_act)
        return cls(weights, biases, acts)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def sizes(self) -> List[int]:
        return [self.in_dim] + [w.shape[0] for w in self.weights]

    def params(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.weights, self.biases, self.activations)

    def load_params(self, other: "Mlp") -> None:
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.in_dim:
            raise ValueError(f"expected input dim {self.in_dim}, got {h.shape[1]}")
        cache = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ w.T + b
            a = _act(act, z)
            cache.append((h, z, a))
            h = a
        self._cache = (cache, single)
        return h[0] if single else h

    def backward(self, grad_out) -> List[np.ndarray]:
        if self._cache is None:
            raise RuntimeError("backward() needs a preceding forward()")
        cache, single = self._cache
        g = np.asarray(grad_out, dtype=float)
        if single:
            g = g[None, :]
        grads = []
        for (h, z, a), w, act in zip(reversed(cache), reversed(self.weights), reversed(self.activations)):
            d = _act_grad(act, z, a)
            if d is not None:
                g = g * d
            grads.append(g.sum(axis=0))
            grads.append(g.T @ h)
            g = g @ w
        self.input_grad = g[0] if single else g
        return grads[::-1]

    def infer(self, x) -> np.ndarray:
        """Forward pass that leaves the backward cache untouched."""
        saved = self._cache
        out = self.forward(x)
        self._cache = saved
        return out


def zeros_like_params(net: Mlp) -> List[np.ndarray]:
    return [np.zeros_like(p) for p in net.params()]


# -- categorical head -------------------------------------------------------

def log_softmax(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def categorical_entropy(logits, logp=None):
    logp = log_softmax(logits) if logp is None else logp
    return -np.sum(np.exp(logp) * logp, axis=-1)


def categorical_entropy_grad(logits, logp=None):
    """d entropy / d logits. Pass ``logp`` when the log-softmax is already known."""
    logp = log_softmax(logits) if logp is None else logp
    p = np.exp(logp)
    h = -np.sum(p * logp, axis=-1, keepdims=True)
    return -p * (logp + h)


def categorical_sample_eps_greedy(probs, eps: float, rng: np.random.Generator) -> int:
    """Sample from ``probs`` with probability ``1 - eps``, else uniformly."""
    probs = np.asarray(probs, dtype=float)
    if rng.random() < eps:
        return int(rng.integers(len(probs)))
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(probs) - 1))


# -- Gaussian head ----------------------------------------------------------

def gaussian_params(raw, sigma_floor: float):
    """Map raw network output ``[m_x, m_y, s_x, s_y]`` to ``(mu, sigma)``.

    ``mu = tanh(m)`` stays inside the unit action box; ``sigma = softplus(s) + floor``.
    """
    raw = np.asarray(raw, dtype=float)
    return np.tanh(raw[..., :2]), softplus(raw[..., 2:]) + sigma_floor


def gaussian_logprob(mu, sigma, action):
    """Sum over axes of independent Normal log-densities."""
    u = (np.asarray(action) - mu) / sigma
    return np.sum(-0.5 * u * u - np.log(sigma) - 0.5 * LOG_2PI, axis=-1)


def gaussian_logprob_grads(mu, sigma, action):
    """Gradients of :func:`gaussian_logprob` w.r.t. ``mu`` and ``sigma``."""
    u = (np.asarray(action) - mu) / sigma
    return u / sigma, (u * u - 1.0) / sigma


def gaussian_entropy(sigma):
    return np.sum(np.log(sigma) + 0.5 * (LOG_2PI + 1.0), axis=-1)


def gaussian_raw_grad(raw, d_mu, d_sigma):
    """Chain ``(d_mu, d_sigma)`` back to the raw head output."""
    raw = np.asarray(raw, dtype=float)
    mu = np.tanh(raw[..., :2])
    return np.concatenate([d_mu * (1.0 - mu * mu), d_sigma * sigmoid(raw[..., 2:])], axis=-1)


# -- optimiser --------------------------------------------------------------

class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float = None) -> None:
        if len(params) != len(self.m):
            raise ValueError("parameter list does not match optimiser state")
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        step = lr * np.sqrt(c2) / c1
        eps_hat = self.eps * np.sqrt(c2)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v)
            denom += eps_hat
            np.divide(m, denom, out=denom)
            denom *= step
            p -= denom

    def state_arrays(self, prefix: str) -> dict:
        out = {f"{prefix}t": np.array(self.t)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}m{i}"] = m
            out[f"{prefix}v{i}"] = v
        return out

    def load_state_arrays(self, data, prefix: str) -> None:
        self.t = int(data[f"{prefix}t"])
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            _copy_checked(m, data[f"{prefix}m{i}"], f"{prefix}m{i}")
            _copy_checked(v, data[f"{prefix}v{i}"], f"{prefix}v{i}")


def adam_step(net: Mlp, grads: Sequence[np.ndarray], lr: float, state: Adam) -> Mlp:
    state.step(net.params(), grads, lr)
    return net


# -- checkpoints ------------------------------------------------------------

def _copy_checked(dst: np.ndarray, src: np.ndarray, name: str) -> None:
    if dst.shape != src.shape:
        raise ValueError(f"shape mismatch for {name}: checkpoint {src.shape}, expected {dst.shape}")
    dst[...] = src


def net_arrays(net: Mlp, prefix: str = "") -> dict:
    out = {f"{prefix}meta": np.array(json.dumps({
        "version": CHECKPOINT_VERSION, "sizes": net.sizes, "activations": net.activations}))}
    for i, p in enumerate(net.params()):
        out[f"{prefix}p{i}"] = p
    return out


def load_net_arrays(net: Mlp, data, prefix: str = "") -> None:
    meta = json.loads(str(data[f"{prefix}meta"]))
    if meta["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    if meta["sizes"] != net.sizes or meta["activations"] != net.activations:
        raise ValueError(f"checkpoint layout {meta['sizes']} does not match network {net.sizes}")
    for i, p in enumerate(net.params()):
        _copy_checked(p, data[f"{prefix}p{i}"], f"{prefix}p{i}")


def save_mlp(net: Mlp, path) -> None:
    np.savez(path, **net_arrays(net))


def load_mlp(path) -> Mlp:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        sizes = meta["sizes"]
        net = Mlp([np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
                  [np.zeros(o) for o in sizes[1:]], meta["activations"])
        load_net_arrays(net, data)
    return net
