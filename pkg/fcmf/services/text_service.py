"""Text Service - Vocabulary and auxiliary-sentence construction

Auxiliary sequence layout (ids, then <pad> up to max_len):
    <s> A^n </s> </s> T... </s> </s> A^I... </s> </s> A^R... </s>
"""

import logging
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fcmf.exceptions import DataError
from fcmf.schemas.sample import ASPECTS, AspectCategory, sort_aspects

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
SPECIAL_TOKENS = (PAD, BOS, EOS, UNK)
RESERVED_TOKENS: tuple[str, ...] = SPECIAL_TOKENS + tuple(a.token for a in ASPECTS)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)

# <s> aspect </s></s> </s></s> </s></s> </s>
FIXED_LENGTH = 9


class Vocabulary:
    """Token <-> id maps with a fixed reserved block

    Reserved ids: <pad>=0, <s>=1, </s>=2, <unk>=3, then the aspect tokens
    location, food, room, facilities, service, public_area (4..9).
    """

    def __init__(self, tokens: Iterable[str] = ()):
        self._id_to_token: list[str] = list(RESERVED_TOKENS)
        self._token_to_id: dict[str, int] = {t: i for i, t in enumerate(RESERVED_TOKENS)}
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        if token not in self._token_to_id:
            self._token_to_id[token] = len(self._id_to_token)
            self._id_to_token.append(token)
        return self._token_to_id[token]

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, index: int) -> str:
        if not 0 <= index < len(self._id_to_token):
            raise DataError(f"token id {index} outside vocabulary of size {len(self)}")
        return self._id_to_token[index]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    @property
    def regular_tokens(self) -> list[str]:
        return self._id_to_token[len(RESERVED_TOKENS) :]

    @classmethod
    def build(cls, token_lists: Iterable[Iterable[str]], min_count: int = 1) -> "Vocabulary":
        """Tokens ordered by descending frequency, ties broken alphabetically"""
        counts = Counter(t for tokens in token_lists for t in tokens)
        ordered = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
        return cls(t for t in ordered if t not in RESERVED_TOKENS)

    def save(self, path: str | Path) -> None:
        """One regular token per line; line i holds id len(RESERVED_TOKENS) + i"""
        Path(path).write_text("".join(f"{t}\n" for t in self.regular_tokens), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        vocab = cls()
        for lineno, token in enumerate(lines, start=1):
            if token in vocab:
                raise DataError(f"vocabulary line {lineno}: duplicate token '{token}'")
            vocab.add(token)
        return vocab


@dataclass(frozen=True)
class AuxiliarySequence:
    """Padded id row plus the segment boundaries used to build it"""

    ids: tuple[int, ...]
    aspect: AspectCategory
    context_length: int
    truncated: int

    @property
    def length(self) -> int:
        return len(self.ids)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.ids, dtype=np.int64)


def build_auxiliary_sequence(
    aspect: AspectCategory,
    tokens: Iterable[str],
    image_categories: Iterable[AspectCategory],
    roi_categories: Iterable[AspectCategory],
    vocab: Vocabulary,
    max_len: int = 170,
) -> AuxiliarySequence:
    """Assemble <s> A^n </s></s> T </s></s> A^I </s></s> A^R </s> and pad to max_len

    Category sets are deduplicated and rendered in canonical aspect order.
    Only the context T is truncated when the assembled length exceeds max_len.

    Raises:
        DataError: max_len cannot hold the fixed segments
    """
    image_ids = [vocab.id_of(a.token) for a in sort_aspects(image_categories)]
    roi_ids = [vocab.id_of(a.token) for a in sort_aspects(roi_categories)]
    fixed = FIXED_LENGTH + len(image_ids) + len(roi_ids)
    if fixed > max_len:
        raise DataError(f"max_len {max_len} cannot hold {fixed} fixed auxiliary tokens")
    context = vocab.encode(tokens)
    budget = max_len - fixed
    truncated = max(0, len(context) - budget)
    context = context[:budget]

    ids = [BOS_ID, vocab.id_of(aspect.token), EOS_ID, EOS_ID]
    ids += context
    ids += [EOS_ID, EOS_ID]
    ids += image_ids
    ids += [EOS_ID, EOS_ID]
    ids += roi_ids
    ids += [EOS_ID]
    ids += [PAD_ID] * (max_len - len(ids))
    if truncated:
        logger.debug(f"Context truncated by {truncated} tokens for aspect {aspect.value}")
    return AuxiliarySequence(ids=tuple(ids), aspect=aspect, context_length=len(context), truncated=truncated)
