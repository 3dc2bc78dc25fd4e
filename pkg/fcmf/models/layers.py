"""Building blocks: linear maps, normalisation, embeddings, attention, feed-forward"""

from __future__ import annotations

import numpy as np

from fcmf.models.base import Module, normal_init, parameter
from fcmf.numerics import functional as F
from fcmf.numerics.attention import scaled_dot_attention
from fcmf.numerics.tensor import Tensor


class Linear(Module):
    """y = x Wᵀ + b with W shaped (out_features, in_features)"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = normal_init(rng, (out_features, in_features))
        self.bias = parameter(np.zeros(out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, size: int, eps: float = 1e-12):
        super().__init__()
        self.weight = parameter(np.ones(size))
        self.bias = parameter(np.zeros(size))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return F.layernorm(x, self.weight, self.bias, eps=self.eps)


class Embedding(Module):
    def __init__(self, num_embeddings: int, size: int, rng: np.random.Generator):
        super().__init__()
        self.num_embeddings = num_embeddings
        self.weight = normal_init(rng, (num_embeddings, size))

    def __call__(self, ids: np.ndarray) -> Tensor:
        return F.take(self.weight, ids, axis=0)


class Dropout(Module):
    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def __call__(self, x: Tensor) -> Tensor:
        return F.dropout(x, self.p, self.training, self.rng)


class MultiHeadAttention(Module):
    """Query/key/value/output projections around scaled_dot_attention, dropout on the output

    The projections are exposed separately so callers can project a shared
    key/value block once and broadcast it.
    """

    def __init__(self, hidden_size: int, heads: int, dropout: float, rng: np.random.Generator):
        super().__init__()
        self.heads = heads
        self.query = Linear(hidden_size, hidden_size, rng)
        self.key = Linear(hidden_size, hidden_size, rng)
        self.value = Linear(hidden_size, hidden_size, rng)
        self.output = Linear(hidden_size, hidden_size, rng)
        self.dropout = Dropout(dropout)

    def attend(
        self,
        q: Tensor,
        k: Tensor,
        v: Tensor,
        mask: np.ndarray | None = None,
        bias: Tensor | None = None,
    ) -> Tensor:
        """Attention over already-projected q/k/v, then output projection and dropout"""
        context = scaled_dot_attention(q, k, v, mask=mask, heads=self.heads, bias=bias)
        return self.dropout(self.output(context))

    def __call__(
        self,
        query: Tensor,
        key: Tensor,
        value: Tensor,
        mask: np.ndarray | None = None,
        bias: Tensor | None = None,
    ) -> Tensor:
        return self.attend(self.query(query), self.key(key), self.value(value), mask=mask, bias=bias)


class FeedForward(Module):
    def __init__(self, hidden_size: int, ffn_size: int, dropout: float, rng: np.random.Generator):
        super().__init__()
        self.inner = Linear(hidden_size, ffn_size, rng)
        self.outer = Linear(ffn_size, hidden_size, rng)
        self.dropout = Dropout(dropout)

    def __call__(self, x: Tensor) -> Tensor:
        return self.dropout(self.outer(F.relu(self.inner(x))))


class EncoderLayer(Module):
    """Post-norm transformer layer: x = LN(x + MHA(x)); x = LN(x + FFN(x))"""

    def __init__(self, hidden_size: int, heads: int, ffn_size: int, dropout: float, rng: np.random.Generator):
        super().__init__()
        self.attention = MultiHeadAttention(hidden_size, heads, dropout, rng)
        self.attention_norm = LayerNorm(hidden_size)
        self.feed_forward = FeedForward(hidden_size, ffn_size, dropout, rng)
        self.output_norm = LayerNorm(hidden_size)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = self.attention_norm(F.add(x, self.attention(x, x, x, mask=mask)))
        return self.output_norm(F.add(x, self.feed_forward(x)))
