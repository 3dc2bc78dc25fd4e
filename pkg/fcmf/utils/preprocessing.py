"""Text preprocessing for Vietnamese social-media reviews

Steps, in order:
1. Unicode NFC normalisation (decomposed diacritics become precomposed)
2. Lowercasing
3. Whitespace runs collapsed to one space
4. Control / format characters removed
5. Whitespace split
6. Optional abbreviation replacement (user-supplied table, e.g. "ks" -> "khách sạn")
7. Optional longest-match multi-word merge against a lexicon ("khách sạn" -> "khách_sạn")
"""

import re
import unicodedata
from collections.abc import Iterable, Mapping

_WHITESPACE = re.compile(r"\s+")


def normalize_text(raw_text: str) -> str:
    """NFC + lowercase + whitespace collapse + control-character removal"""
    text = unicodedata.normalize("NFC", raw_text)
    text = unicodedata.normalize("NFC", text.lower())
    text = _WHITESPACE.sub(" ", text)
    text = "".join(ch for ch in text if unicodedata.category(ch) not in ("Cc", "Cf"))
    return text.strip()


class Segmenter:
    """Longest-match merge of multi-word lexicon entries, joined with underscores"""

    def __init__(self, lexicon: Iterable[str] = ()):
        entries = {tuple(normalize_text(e).split()) for e in lexicon}
        self.entries = {e for e in entries if len(e) >= 2}
        self.max_words = max((len(e) for e in self.entries), default=0)

    def __call__(self, tokens: list[str]) -> list[str]:
        if not self.entries:
            return tokens
        out: list[str] = []
        i = 0
        while i < len(tokens):
            for n in range(min(self.max_words, len(tokens) - i), 1, -1):
                if tuple(tokens[i : i + n]) in self.entries:
                    out.append("_".join(tokens[i : i + n]))
                    i += n
                    break
            else:
                out.append(tokens[i])
                i += 1
        return out


def preprocess(
    raw_text: str,
    lexicon: Iterable[str] | Segmenter | None = None,
    replacements: Mapping[str, str] | None = None,
) -> list[str]:
    """Turn a raw review into tokens

    Args:
        raw_text: Arbitrary Unicode input
        lexicon: Multi-word entries for segmentation (off when None/empty)
        replacements: Token -> expansion table applied before segmentation

    Returns:
        list[str]: Tokens (empty list for empty input)

    Example:
        >>> preprocess("Phòng   RẤT  sạch")
        ['phòng', 'rất', 'sạch']
    """
    tokens = normalize_text(raw_text).split()
    if replacements:
        table = {normalize_text(k): normalize_text(v).split() for k, v in replacements.items()}
        expanded: list[str] = []
        for tok in tokens:
            expanded.extend(table.get(tok, [tok]))
        tokens = expanded
    segmenter = lexicon if isinstance(lexicon, Segmenter) else Segmenter(lexicon or ())
    return segmenter(tokens)


def raw_split(raw_text: str) -> list[str]:
    """Whitespace split only (the no-preprocessing ablation)"""
    return raw_text.split()
