"""Small MLP classifier with hand-written reverse-mode gradients.

The encoder maps inputs through the hidden stack to an embedding (the last
encoder layer is linear so embeddings are not confined to one orthant);
a linear head maps embeddings to class logits.  ``backward`` accepts
gradients at the logits, at the embedding, or both, which is how the
classification terms and the embedding-space contrastive term share one
parameter update.

All heavy array work goes through the kernel backend; this module owns the
wiring, the optimizer, and the evaluation-time parameter shadow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import ConfigError

ACTIVATIONS = ("relu", "leaky_relu", "tanh")


@dataclass(frozen=True)
class Architecture:
    """Layer plan: input -> hidden stack -> embedding -> classes.

    The activation sits after every hidden layer; the embedding layer and
    the head are linear.
    """

    input_dim: int
    hidden: tuple[int, ...]
    embed_dim: int
    num_classes: int
    activation: str = "leaky_relu"
    leaky_slope: float = 0.1

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden, self.embed_dim)
        if any(d < 1 for d in dims) or self.num_classes < 2:
            raise ConfigError(f"bad layer dims {dims} / classes {self.num_classes}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not 0.0 <= self.leaky_slope < 1.0:
            raise ConfigError(f"leaky slope must lie in [0, 1), got {self.leaky_slope}")

    @property
    def encoder_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.embed_dim)


@dataclass
class ForwardCache:
    """Everything backward needs: inputs, per-layer pre/post activations,
    the embedding, logits, and softmax probabilities."""

    x: np.ndarray
    pres: list[np.ndarray]
    posts: list[np.ndarray]
    embedding: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


class Network:
    """Parameters live in ``params`` as [W0, b0, W1, b1, ..., Whead, bhead]."""

    def __init__(self, arch: Architecture, rng: np.random.Generator):
        self.arch = arch
        self.params: list[np.ndarray] = []
        dims = arch.encoder_dims
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            self._init_layer(fan_in, fan_out, rng)
        self._init_layer(arch.embed_dim, arch.num_classes, rng)

    def _init_layer(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(fan_in)
        self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @classmethod
    def from_params(cls, arch: Architecture, params: list[np.ndarray]) -> "Network":
        net = cls.__new__(cls)
        net.arch = arch
        net.params = [np.array(p, dtype=np.float64) for p in params]
        return net

    # -- activation dispatch -------------------------------------------------

    def _act(self, pre: np.ndarray) -> np.ndarray:
        kind = self.arch.activation
        if kind == "tanh":
            return K.tanh_forward(pre)
        slope = 0.0 if kind == "relu" else self.arch.leaky_slope
        return K.leaky_relu(pre, slope)

    def _act_grad(self, pre: np.ndarray, post: np.ndarray, d: np.ndarray) -> np.ndarray:
        kind = self.arch.activation
        if kind == "tanh":
            return K.tanh_grad(post, d)
        slope = 0.0 if kind == "relu" else self.arch.leaky_slope
        return K.leaky_relu_grad(pre, d, slope)

    # -- forward / backward --------------------------------------------------

    @property
    def _num_encoder_layers(self) -> int:
        return len(self.arch.encoder_dims) - 1

    def forward(self, x: np.ndarray) -> ForwardCache:
        h = np.ascontiguousarray(x, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.arch.input_dim:
            raise ValueError(f"expected (n, {self.arch.input_dim}) input, got shape {h.shape}")
        pres: list[np.ndarray] = []
        posts: list[np.ndarray] = []
        n_layers = self._num_encoder_layers
        for layer in range(n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            pre = K.affine(h, w, b)
            post = self._act(pre) if layer < n_layers - 1 else pre
            pres.append(pre)
            posts.append(post)
            h = post
        wh, bh = self.params[-2], self.params[-1]
        logits = K.affine(h, wh, bh)
        probs = K.softmax(logits)
        return ForwardCache(x=np.ascontiguousarray(x, dtype=np.float64), pres=pres,
                            posts=posts, embedding=h, logits=logits, probs=probs)

    def backward(
        self,
        cache: ForwardCache,
        d_logits: np.ndarray | None = None,
        d_embedding: np.ndarray | None = None,
    ) -> list[np.ndarray]:
        """Parameter gradients for upstream gradients injected at the logits
        and/or directly at the embedding.  Returns a list aligned with
        ``params``."""
        if d_logits is None and d_embedding is None:
            raise ValueError("backward needs d_logits and/or d_embedding")
        grads = [np.zeros_like(p) for p in self.params]
        d_emb = np.zeros_like(cache.embedding)
        if d_logits is not None:
            dx, dw, db = K.affine_grads(cache.embedding, self.params[-2], d_logits)
            grads[-2] = dw
            grads[-1] = db
            d_emb = d_emb + dx
        if d_embedding is not None:
            d_emb = d_emb + d_embedding

        n_layers = self._num_encoder_layers
        d_post = d_emb
        for layer in reversed(range(n_layers)):
            # embedding layer is linear; hidden layers fold in the activation
            d_pre = (
                d_post
                if layer == n_layers - 1
                else self._act_grad(cache.pres[layer], cache.posts[layer], d_post)
            )
            layer_in = cache.x if layer == 0 else cache.posts[layer - 1]
            dx, dw, db = K.affine_grads(layer_in, self.params[2 * layer], d_pre)
            grads[2 * layer] = dw
            grads[2 * layer + 1] = db
            d_post = dx
        return grads

    # -- flat parameter views (optimizer-free code paths, checkpoints) -------

    def param_vector(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_param_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        offset = 0
        for p in self.params:
            p[...] = vec[offset : offset + p.size].reshape(p.shape)
            offset += p.size
        if offset != vec.size:
            raise ValueError(f"parameter vector has {vec.size} entries, expected {offset}")


def add_grads(total: list[np.ndarray], extra: list[np.ndarray]) -> list[np.ndarray]:
    for t, e in zip(total, extra):
        t += e
    return total


def flatten_arrays(arrays: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrays])


class SgdMomentum:
    """Classic momentum: v <- m*v + g; p <- p - lr*v."""

    def __init__(self, params: list[np.ndarray], lr: float, momentum: float = 0.9):
        if lr <= 0.0:
            raise ConfigError(f"learning rate must be > 0, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {momentum}")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float | None = None):
        rate = self.lr if lr is None else lr
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v += g
            p -= rate * v


class EmaShadow:
    """Exponential moving average of the parameters, used at evaluation.

    shadow <- decay*shadow + (1-decay)*params after every optimizer step;
    initialized to a copy of the starting parameters.
    """

    def __init__(self, params: list[np.ndarray], decay: float = 0.999):
        # decay 0 mirrors the params, decay 1 freezes the shadow; both ends
        # are legal degenerate settings
        if not 0.0 <= decay <= 1.0:
            raise ConfigError(f"shadow decay must lie in [0, 1], got {decay}")
        self.decay = float(decay)
        self.shadow = [p.copy() for p in params]

    def update(self, params: list[np.ndarray]) -> None:
        d = self.decay
        for s, p in zip(self.shadow, params):
            s *= d
            s += (1.0 - d) * p

    def snapshot_network(self, arch: Architecture) -> Network:
        return Network.from_params(arch, self.shadow)
