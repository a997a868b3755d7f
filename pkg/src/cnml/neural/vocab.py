"""Shared token vocabulary for LTL and aag text."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

PAD, UNK, NL = "<pad>", "<unk>", "<nl>"
SPECIALS = (PAD, UNK, NL)
OPERATORS = ("(", ")", "!", "&", "|", "->", "<->", "G", "F", "X", "U", "R", "true", "false", "aag")
DIGITS = tuple(str(d) for d in range(10))

_TOKEN_RE = re.compile(r"<->|->|[()!&|]|\n|[A-Za-z_][A-Za-z0-9_]*|\d+|\S")


def split_tokens(text: str) -> list[str]:
    return [NL if t == "\n" else t for t in _TOKEN_RE.findall(text)]


def _order_key(tok: str):
    return (0, int(tok), "") if tok.isdigit() else (1, 0, tok)


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate vocabulary entries")
        if self.tokens[:len(SPECIALS)] != SPECIALS:
            raise ValueError("vocabulary must start with the reserved tokens")
        object.__setattr__(self, "_ids", {t: i for i, t in enumerate(self.tokens)})

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    def __len__(self):
        return len(self.tokens)

    def id(self, tok: str) -> int:
        return self._ids.get(tok, self.unk_id)

    def __contains__(self, tok: str) -> bool:
        return tok in self._ids

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocab":
        """Reserved tokens, operators and digits first, then scanned tokens
        (integers ascending, then words sorted)."""
        fixed = SPECIALS + OPERATORS + DIGITS
        seen = set(fixed)
        extra = set()
        for text in texts:
            for tok in split_tokens(text):
                if tok not in seen:
                    extra.add(tok)
        return cls(fixed + tuple(sorted(extra, key=_order_key)))


def encode_text(text: str, vocab: Vocab) -> list[int]:
    """Token ids without padding; integers missing from the vocabulary are spelled digit by digit."""
    ids = []
    for tok in split_tokens(text):
        if tok in vocab:
            ids.append(vocab.id(tok))
        elif tok.isdigit():
            ids.extend(vocab.id(d) for d in tok)
        else:
            ids.append(vocab.unk_id)
    return ids


def tokenize(text: str, vocab: Vocab, max_len: int) -> tuple[list[int], bool]:
    """Fixed-length id sequence padded with ``pad``; also reports truncation."""
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    ids = encode_text(text, vocab)
    truncated = len(ids) > max_len
    ids = ids[:max_len]
    return ids + [vocab.pad_id] * (max_len - len(ids)), truncated
