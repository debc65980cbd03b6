"""Differentiable building blocks: linear layers, GELU, inverted dropout,
two-block MLPs, sinusoidal daytime embeddings, and sigmoid cross-attention.

Every primitive comes as a ``*_forward`` / ``*_backward`` pair.  The forward
returns the output together with a cache of intermediates; the backward takes
the upstream gradient plus that cache and returns exact analytical gradients
with respect to inputs and parameters.  Nothing here holds hidden state, so
concurrent forward passes over disjoint inputs sharing read-only parameters
are safe.

Arrays are float64.  All primitives accept either a single vector ``(dim,)``
or a batch ``(batch, dim)``; gradients for parameters are summed over the
batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf, expit

from .errors import ConfigurationError, ShapeError, StateError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

MINUTES_PER_DAY = 1440.0


# ---------------------------------------------------------------------------
# activations


def gelu(x):
    """Exact GELU, 0.5*x*(1 + erf(x/sqrt(2))).  Total function."""
    x = np.asarray(x, dtype=float)
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x):
    """Derivative of exact GELU: Phi(x) + x*phi(x) with Gaussian cdf/pdf."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def sigmoid(x):
    return expit(x)


# ---------------------------------------------------------------------------
# batch helpers


def _as_batch(x, name="x"):
    """Promote a vector to a 1-row batch; returns (array2d, was_vector)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ShapeError(f"{name} must be 1-D or 2-D, got shape {x.shape}")


def _like_input(y, was_vector):
    return y[0] if was_vector else y


# ---------------------------------------------------------------------------
# linear layer


@dataclass
class LinearParams:
    """Weight of shape (out, in) and bias of shape (out,)."""

    weight: np.ndarray
    bias: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def size(self) -> int:
        return self.weight.size + self.bias.size


def linear_forward(x, p: LinearParams):
    x2, vec = _as_batch(x)
    if x2.shape[1] != p.in_dim:
        raise ShapeError(
            f"linear expects input dim {p.in_dim}, got {x2.shape[1]}"
        )
    return _like_input(x2 @ p.weight.T + p.bias, vec)


def linear_backward(grad_y, x, p: LinearParams):
    """Returns (grad_x, LinearParams gradients)."""
    g2, vec = _as_batch(grad_y, "grad_y")
    x2, _ = _as_batch(x)
    grad_x = g2 @ p.weight
    grad_w = g2.T @ x2
    grad_b = g2.sum(axis=0)
    return _like_input(grad_x, vec), LinearParams(grad_w, grad_b)


# ---------------------------------------------------------------------------
# inverted dropout


def dropout_forward(x, rate: float, rng: np.random.Generator):
    """Train-mode inverted dropout.  Zeroes each coordinate with probability
    ``rate`` and scales survivors by 1/(1-rate) so the expectation matches the
    eval-mode identity.  Returns (output, mask)."""
    x = np.asarray(x, dtype=float)
    if rate == 0.0:
        return x, np.ones_like(x, dtype=bool)
    keep = rng.random(x.shape) >= rate
    return x * keep / (1.0 - rate), keep


def dropout_backward(grad_y, mask, rate: float):
    if rate == 0.0:
        return np.asarray(grad_y, dtype=float)
    return grad_y * mask / (1.0 - rate)


# ---------------------------------------------------------------------------
# two-block MLP: each block is dropout(GELU(linear(x)))


@dataclass
class MlpParams:
    lin1: LinearParams
    lin2: LinearParams

    def size(self) -> int:
        return self.lin1.size() + self.lin2.size()


@dataclass
class MlpCache:
    x: np.ndarray
    pre1: np.ndarray
    mask1: np.ndarray | None
    act1: np.ndarray  # post-dropout input to the second block
    pre2: np.ndarray
    mask2: np.ndarray | None


def mlp_forward(x, p: MlpParams, rate: float = 0.0, rng: np.random.Generator | None = None):
    """Forward through both blocks.  Train mode iff ``rng`` is given; in eval
    mode dropout is the identity and the output is deterministic."""
    x2, vec = _as_batch(x)
    pre1 = linear_forward(x2, p.lin1)
    a1 = gelu(pre1)
    if rng is not None:
        a1, mask1 = dropout_forward(a1, rate, rng)
    else:
        mask1 = None
    pre2 = linear_forward(a1, p.lin2)
    a2 = gelu(pre2)
    if rng is not None:
        a2, mask2 = dropout_forward(a2, rate, rng)
    else:
        mask2 = None
    cache = MlpCache(x=x2, pre1=pre1, mask1=mask1, act1=a1, pre2=pre2, mask2=mask2)
    return _like_input(a2, vec), (cache, vec)


def mlp_backward(grad_y, p: MlpParams, cache_and_flag, rate: float = 0.0):
    """Returns (grad_x, MlpParams gradients)."""
    if cache_and_flag is None:
        raise StateError("mlp_backward called before mlp_forward")
    cache, vec = cache_and_flag
    g, _ = _as_batch(grad_y, "grad_y")
    if cache.mask2 is not None:
        g = dropout_backward(g, cache.mask2, rate)
    g = g * gelu_grad(cache.pre2)
    grad_a1, g_lin2 = linear_backward(g, cache.act1, p.lin2)
    if cache.mask1 is not None:
        grad_a1 = dropout_backward(grad_a1, cache.mask1, rate)
    grad_pre1 = grad_a1 * gelu_grad(cache.pre1)
    grad_x, g_lin1 = linear_backward(grad_pre1, cache.x, p.lin1)
    return _like_input(grad_x, vec), MlpParams(g_lin1, g_lin2)


# ---------------------------------------------------------------------------
# sigmoid cross-attention, bare single head (no projections)


def sca_single_forward(q, k, v, scale: float):
    """sigmoid(q.k / sqrt(scale)) * v — a scalar gate in (0, 1) scaling v."""
    q2, vec = _as_batch(q, "q")
    k2, _ = _as_batch(k, "k")
    v2, _ = _as_batch(v, "v")
    if not (q2.shape == k2.shape == v2.shape):
        raise ShapeError(
            f"q, k, v must share a shape, got {q2.shape}, {k2.shape}, {v2.shape}"
        )
    if scale <= 0:
        raise ConfigurationError(f"scale must be positive, got {scale}")
    gate = sigmoid((q2 * k2).sum(axis=1) / np.sqrt(scale))
    y = gate[:, None] * v2
    cache = (q2, k2, v2, gate, scale, vec)
    return _like_input(y, vec), cache


def sca_single_backward(grad_y, cache):
    """Returns (grad_q, grad_k, grad_v)."""
    if cache is None:
        raise StateError("sca_single_backward called before forward")
    q2, k2, v2, gate, scale, vec = cache
    g, _ = _as_batch(grad_y, "grad_y")
    grad_v = gate[:, None] * g
    grad_gate = (g * v2).sum(axis=1)
    grad_logit = grad_gate * gate * (1.0 - gate) / np.sqrt(scale)
    grad_q = grad_logit[:, None] * k2
    grad_k = grad_logit[:, None] * q2
    return (
        _like_input(grad_q, vec),
        _like_input(grad_k, vec),
        _like_input(grad_v, vec),
    )


# ---------------------------------------------------------------------------
# multi-head sigmoid cross-attention with input and output projections


@dataclass
class AttentionParams:
    query: LinearParams
    key: LinearParams
    value: LinearParams
    out: LinearParams

    def size(self) -> int:
        return self.query.size() + self.key.size() + self.value.size() + self.out.size()


@dataclass
class ScaCache:
    q_in: np.ndarray
    k_in: np.ndarray
    v_in: np.ndarray
    qh: np.ndarray  # (batch, heads, head_dim)
    kh: np.ndarray
    vh: np.ndarray
    gate: np.ndarray  # (batch, heads)
    concat: np.ndarray
    vec: bool


def sca_multi_forward(q_in, k_in, v_in, p: AttentionParams, num_heads: int):
    """Project q/k/v, split into heads, gate each head independently with
    scale = head_dim, concatenate, and apply the output projection."""
    q2, vec = _as_batch(q_in, "q")
    k2, _ = _as_batch(k_in, "k")
    v2, _ = _as_batch(v_in, "v")
    n = q2.shape[1]
    if k2.shape[1] != n or v2.shape[1] != n:
        raise ShapeError("q, k, v must all have the model dimension")
    if n % num_heads != 0:
        raise ConfigurationError(
            f"embedding dim {n} is not divisible by {num_heads} heads"
        )
    h = n // num_heads
    batch = q2.shape[0]
    qh = linear_forward(q2, p.query).reshape(batch, num_heads, h)
    kh = linear_forward(k2, p.key).reshape(batch, num_heads, h)
    vh = linear_forward(v2, p.value).reshape(batch, num_heads, h)
    gate = sigmoid((qh * kh).sum(axis=2) / np.sqrt(h))
    concat = (gate[:, :, None] * vh).reshape(batch, n)
    y = linear_forward(concat, p.out)
    cache = ScaCache(q2, k2, v2, qh, kh, vh, gate, concat, vec)
    return _like_input(y, vec), cache


def sca_multi_backward(grad_y, p: AttentionParams, cache: ScaCache):
    """Returns (grad_q_in, grad_k_in, grad_v_in, AttentionParams gradients)."""
    if cache is None:
        raise StateError("sca_multi_backward called before forward")
    g, _ = _as_batch(grad_y, "grad_y")
    batch, num_heads, h = cache.qh.shape
    n = num_heads * h

    grad_concat, g_out = linear_backward(g, cache.concat, p.out)
    gc = grad_concat.reshape(batch, num_heads, h)

    grad_gate = (gc * cache.vh).sum(axis=2)
    grad_vh = cache.gate[:, :, None] * gc
    grad_logit = grad_gate * cache.gate * (1.0 - cache.gate) / np.sqrt(h)
    grad_qh = grad_logit[:, :, None] * cache.kh
    grad_kh = grad_logit[:, :, None] * cache.qh

    grad_q_in, g_query = linear_backward(grad_qh.reshape(batch, n), cache.q_in, p.query)
    grad_k_in, g_key = linear_backward(grad_kh.reshape(batch, n), cache.k_in, p.key)
    grad_v_in, g_value = linear_backward(grad_vh.reshape(batch, n), cache.v_in, p.value)

    grads = AttentionParams(g_query, g_key, g_value, g_out)
    return (
        _like_input(grad_q_in, cache.vec),
        _like_input(grad_k_in, cache.vec),
        _like_input(grad_v_in, cache.vec),
        grads,
    )


# ---------------------------------------------------------------------------
# sinusoidal daytime embedding


def daytime_embed(minute_of_day, n: int):
    """Embed a minute-of-day into n sinusoidal coordinates.

    e[2k]   = sin(pos / 10000^(2k/n))
    e[2k+1] = cos(pos / 10000^(2k/n))

    with pos = minute_of_day mod 1440, so the embedding is periodic over one
    day.  ``minute_of_day`` may be a scalar or an array; the embedding axis is
    appended last.  No trainable parameters.
    """
    if n % 2 != 0 or n <= 0:
        raise ConfigurationError(f"embedding dim must be even and positive, got {n}")
    pos = np.mod(np.asarray(minute_of_day, dtype=float), MINUTES_PER_DAY)
    freqs = np.power(10000.0, -np.arange(n // 2) * 2.0 / n)
    angles = pos[..., None] * freqs
    out = np.empty(pos.shape + (n,), dtype=float)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out
