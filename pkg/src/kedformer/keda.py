"""Knowledge-extraction attention.

Queries are ranked by a distillation measure (log-sum-exp of a query's
scaled scores minus their mean). The ``u`` highest-ranked query positions
estimate a lag-correlation curve, the ``k`` strongest lags are softmax
weighted, and the output is the weighted sum of the value sequence rolled by
each lag. Everything except the measure itself scales as ``O(L log L)``; the
measure is evaluated against a strided sample of ``ceil(c ln L_K)`` keys
inside :func:`keda_attention` so that it stays linear in ``L``.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .numerics import (
    Tensor,
    as_tensor,
    circular_correlation,
    delay_aggregate,
    matmul,
    mul,
    pad_or_truncate,
    reshape,
    softmax,
    softmax_array,
    take_along_axis,
    transpose,
)

# score-matrix budget per query chunk in gradient-free canonical attention
_CHUNK_SCORES = 1 << 22


class Variant(str, enum.Enum):
    KEDATT = "KEDatt"
    KEDATT_F = "KEDatt-f"
    CANONICAL = "canonical"


@dataclass(frozen=True)
class AttentionConfig:
    factor: float = 3.0
    heads: int = 8
    variant: Variant = Variant.KEDATT
    sample_keys: bool = True

    def __post_init__(self):
        if self.factor <= 0:
            raise ConfigurationError(f"attention factor must be positive, got {self.factor}")
        if self.heads < 1:
            raise ConfigurationError(f"head count must be positive, got {self.heads}")
        object.__setattr__(self, "variant", Variant(self.variant))

    def lag_count(self, length):
        """k = ceil(c ln L), clamped to [1, L]."""
        return _clamped_log_count(self.factor, length)

    def query_count(self, length):
        """u = ceil(c ln L_Q), clamped to [1, L_Q]."""
        return _clamped_log_count(self.factor, length)

    def to_dict(self):
        return {"factor": self.factor, "heads": self.heads, "variant": self.variant.value,
                "sample_keys": self.sample_keys}


def _clamped_log_count(factor, length):
    if length < 1:
        raise ConfigurationError(f"sequence length must be positive, got {length}")
    return int(min(max(math.ceil(factor * math.log(length)), 1), length))


_replay = None


class SelectionReplay:
    """Hold the discrete choices fixed across repeated forward passes.

    The first pass inside the ``with`` block records every query selection
    and lag set in call order; after :meth:`rewind`, later passes reuse them
    cyclically, so every full forward pass sees the recorded sequence.
    Finite-difference checks need this so that a perturbation cannot flip a
    choice and jump to a different smooth piece.
    """

    def __init__(self):
        self.choices = []
        self.cursor = None

    def __enter__(self):
        global _replay
        self._previous = _replay
        _replay = self
        return self

    def __exit__(self, *exc):
        global _replay
        _replay = self._previous

    def rewind(self):
        if self.choices:
            self.cursor = 0

    def pick(self, compute):
        if self.cursor is None:
            value = compute()
            self.choices.append(value)
            return value
        value = self.choices[self.cursor]
        self.cursor = (self.cursor + 1) % len(self.choices)
        return value


def _choose(compute):
    return compute() if _replay is None else _replay.pick(compute)


@dataclass(frozen=True)
class LagSet:
    lags: np.ndarray
    weights: Tensor


def _swap_last(x):
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def canonical_attention(Q, K, V):
    """Softmax(Q K^T / sqrt(d)) V over the last two axes.

    Without gradients the queries are processed in chunks so the score
    matrix never materialises whole; the arithmetic is still O(L_Q L_K).
    """
    Q, K, V = as_tensor(Q), as_tensor(K), as_tensor(V)
    if K.shape[-2] != V.shape[-2] or Q.shape[-1] != K.shape[-1]:
        raise DimensionError(f"attention shapes Q{Q.shape} K{K.shape} V{V.shape} are inconsistent")
    scale = 1.0 / math.sqrt(Q.shape[-1])
    if not (Q.requires_grad or K.requires_grad or V.requires_grad):
        return Tensor(_chunked_attention(Q.data, K.data, V.data, scale))
    scores = mul(matmul(Q, _swap_last(K)), scale)
    return matmul(softmax(scores, axis=-1), V)


def _chunked_attention(q, k, v, scale):
    lq, lk = q.shape[-2], k.shape[-2]
    step = max(1, _CHUNK_SCORES // lk)
    kt = np.swapaxes(k, -1, -2)
    out = np.empty(q.shape[:-1] + (v.shape[-1],))
    for start in range(0, lq, step):
        stop = min(lq, start + step)
        p = softmax_array((q[..., start:stop, :] @ kt) * scale, axis=-1)
        out[..., start:stop, :] = p @ v
    return out


def _pairwise_scores(q, k):
    # elementwise product then a reduction over d: each score is computed the
    # same way wherever its key sits, which keeps the measure permutation-exact
    return (q[..., :, None, :] * k[..., None, :, :]).sum(axis=-1) / math.sqrt(q.shape[-1])


def sparsity_measure(Q, K, key_index=None):
    """M_i = ln(sum_j exp(s_ij)) - mean_j s_ij with s_ij = q_i . k_j / sqrt(d).

    ``key_index`` restricts the keys to a subset (the sampled estimate used
    for long sequences). Returns an array of shape ``(..., L_Q)``; no
    gradient is tracked because the measure only drives a discrete choice.
    """
    q = as_tensor(Q).data
    k = as_tensor(K).data
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"query width {q.shape[-1]} != key width {k.shape[-1]}")
    if key_index is not None:
        # sampled estimate: plain matmul scores, no permutation guarantee needed
        s = (q @ np.swapaxes(k[..., key_index, :], -1, -2)) / math.sqrt(q.shape[-1])
    else:
        s = np.sort(_pairwise_scores(q, k), axis=-1)
    top = s.max(axis=-1)
    lse = np.log(np.exp(s - top[..., None]).sum(axis=-1))
    return (top - s.sum(axis=-1) / s.shape[-1]) + lse


def select_top_queries(M, u):
    """Indices of the ``u`` largest measures, ascending; ties go to the lower index."""
    M = np.asarray(M)
    length = M.shape[-1]
    if not 1 <= u <= length:
        raise ConfigurationError(f"u must lie in [1, {length}], got {u}")
    chosen = np.argsort(-M, axis=-1, kind="stable")[..., :u]
    return np.sort(chosen, axis=-1)


def lag_correlation(Q, K, selected=None):
    """Channel-averaged circular correlation estimated from selected queries.

    R(tau) = 1/(|S| d) * sum_{t in S} sum_c Q[t, c] K[(t - tau) mod L, c]
    for tau = 0..L-1. ``selected`` holds query indices with shape
    ``(..., u)``; ``None`` means every position. Differentiable in Q and K.
    """
    Q, K = as_tensor(Q), as_tensor(K)
    if Q.shape != K.shape:
        raise DimensionError(f"lag correlation needs equal shapes, got {Q.shape} and {K.shape}")
    length, width = Q.shape[-2], Q.shape[-1]
    if selected is None:
        return circular_correlation(Q, K, scale=1.0 / (length * width))
    selected = np.asarray(selected)
    if selected.shape[-1] == 0:
        raise ConfigurationError("query selection is empty")
    mask = np.zeros(Q.shape[:-1])
    np.put_along_axis(mask, selected.reshape(Q.shape[:-2] + (-1,)), 1.0, axis=-1)
    return circular_correlation(mul(Q, mask[..., None]), K, scale=1.0 / (selected.shape[-1] * width))


def top_k_lags(R, k):
    """The ``k`` lags with the largest correlation, softmax weighted.

    Ties go to the smaller lag. ``R`` may carry leading batch axes.
    """
    R = as_tensor(R)
    length = R.shape[-1]
    if not 1 <= k <= length:
        raise ConfigurationError(f"k must lie in [1, {length}], got {k}")
    lags = _choose(lambda: np.argsort(-R.data, axis=-1, kind="stable")[..., :k])
    return LagSet(lags=lags, weights=softmax(take_along_axis(R, lags, axis=-1), axis=-1))


def time_delay_aggregate(V, lag_set):
    """sum_i w_i * roll(V, tau_i), rolling along the time axis (-2)."""
    return delay_aggregate(V, lag_set.lags, lag_set.weights)


def split_heads(x, heads):
    """``(..., L, d)`` -> ``(..., heads, L, d // heads)``."""
    x = as_tensor(x)
    *lead, length, width = x.shape
    if width % heads:
        raise ConfigurationError(f"model width {width} is not divisible by {heads} heads")
    x = reshape(x, tuple(lead) + (length, heads, width // heads))
    n = len(lead)
    return transpose(x, tuple(range(n)) + (n + 1, n, n + 2))


def merge_heads(x):
    x = as_tensor(x)
    *lead, heads, length, width = x.shape
    n = len(lead)
    x = transpose(x, tuple(range(n)) + (n + 1, n, n + 2))
    return reshape(x, tuple(lead) + (length, heads * width))


def _key_sample(length, cfg):
    count = cfg.query_count(length)
    if not cfg.sample_keys or count >= length:
        return None
    return np.arange(count) * length // count


def keda_attention(Q, K, V, cfg=AttentionConfig()):
    """Multi-head attention dispatch on projected ``(..., L, d_model)`` inputs.

    Returns the concatenated head outputs; the caller applies the output
    projection. For the lag-based variants K and V are first truncated or
    zero-padded to the query length.
    """
    Q, K, V = as_tensor(Q), as_tensor(K), as_tensor(V)
    if Q.shape[-1] % cfg.heads:
        raise ConfigurationError(f"model width {Q.shape[-1]} is not divisible by {cfg.heads} heads")
    if cfg.variant is Variant.CANONICAL:
        return merge_heads(canonical_attention(split_heads(Q, cfg.heads), split_heads(K, cfg.heads),
                                               split_heads(V, cfg.heads)))
    length = Q.shape[-2]
    K = pad_or_truncate(K, length)
    V = pad_or_truncate(V, length)
    q, k, v = (split_heads(t, cfg.heads) for t in (Q, K, V))
    selected = None
    if cfg.variant is Variant.KEDATT:
        selected = _choose(lambda: select_top_queries(
            sparsity_measure(q, k, _key_sample(length, cfg)), cfg.query_count(length)))
    R = lag_correlation(q, k, selected)
    lag_set = top_k_lags(R, cfg.lag_count(length))
    return merge_heads(time_delay_aggregate(v, lag_set))
