"""Text encoder - transformer over auxiliary sequences, producing H_T and H_<s>"""

from __future__ import annotations

import numpy as np

from fcmf.exceptions import DataError
from fcmf.models.base import Module
from fcmf.models.layers import Dropout, Embedding, EncoderLayer, LayerNorm
from fcmf.numerics import functional as F
from fcmf.numerics.tensor import Tensor
from fcmf.schemas.config import ModelConfig

PAD_ID = 0


class TextEncoder(Module):
    """Token + learned absolute position embeddings, then L post-norm layers

    Attributes:
        vocab_size: number of token ids accepted
        max_len: longest sequence accepted (position table size)
    """

    def __init__(self, vocab_size: int, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.vocab_size = vocab_size
        self.max_len = config.max_len
        self.token_embedding = Embedding(vocab_size, config.hidden_size, rng)
        self.position_embedding = Embedding(config.max_len, config.hidden_size, rng)
        self.embedding_norm = LayerNorm(config.hidden_size)
        self.dropout = Dropout(config.dropout)
        self.layers = [
            EncoderLayer(config.hidden_size, config.heads, config.ffn_width, config.dropout, rng)
            for _ in range(config.num_layers)
        ]

    def __call__(self, ids: np.ndarray) -> tuple[Tensor, np.ndarray]:
        """Encode a batch of id rows

        Args:
            ids: (B, N) integer token ids, N <= max_len

        Returns:
            (H_T of shape (B, N, d), padding mask of shape (B, N), True at pad)

        Raises:
            DataError: an id is outside [0, vocab_size) or N exceeds max_len
        """
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise DataError(f"token id out of vocabulary range [0, {self.vocab_size})")
        n = ids.shape[-1]
        if n > self.max_len:
            raise DataError(f"sequence length {n} exceeds max_len {self.max_len}")
        mask = ids == PAD_ID
        x = F.add(self.token_embedding(ids), self.position_embedding(np.arange(n)))
        x = self.dropout(self.embedding_norm(x))
        for layer in self.layers:
            x = layer(x, mask=mask)
        return x, mask


def encode_text(ids: np.ndarray, encoder: TextEncoder) -> tuple[Tensor, Tensor]:
    """H_T (N, d) and the first-token state H_<s> (d,) for one sequence"""
    hidden, _ = encoder(np.asarray(ids)[None, :])
    h_t = hidden[0]
    return h_t, h_t[0]
