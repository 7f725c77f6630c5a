"""Word-level tokenizer, vocabulary and sequence embedding.

Tokenization lowercases, splits on whitespace and breaks punctuation out
as standalone tokens; digits stay attached to their word. The first four
vocabulary ids are fixed: PAD=0, UNK=1, CLS=2, SEP=3.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, IndexOutOfRange
from .numerics import Tensor, add, embedding_lookup

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
CLS_TOKEN = "<cls>"
SEP_TOKEN = "<sep>"
RESERVED = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens with punctuation split off."""
    out: list[str] = []
    cur: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            cur.append(ch)
            continue
        if cur:
            out.append("".join(cur))
            cur = []
        if not ch.isspace():
            out.append(ch)
    if cur:
        out.append("".join(cur))
    return out


class Vocabulary:
    """Immutable token-to-id mapping with the reserved ids pinned first."""

    def __init__(self, tokens: Sequence[str]):
        all_tokens = list(RESERVED) + list(tokens)
        index: dict[str, int] = {}
        for i, tok in enumerate(all_tokens):
            if tok in index:
                raise ContractError(f"duplicate token {tok!r} in vocabulary")
            index[tok] = i
        self._tokens = tuple(all_tokens)
        self._index = index

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def lookup(self, token: str) -> int:
        """Id of a token, UNK_ID when out of vocabulary."""
        return self._index.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._tokens):
            raise IndexOutOfRange(f"id {token_id} out of range for vocabulary of {len(self)}")
        return self._tokens[token_id]

    def save(self, path: str) -> None:
        """One token per line, in id order."""
        with open(path, "w", encoding="utf-8") as f:
            for tok in self._tokens:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            lines = [line.rstrip("\n") for line in f]
        while lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:4]) != RESERVED:
            raise ContractError(f"vocabulary file {path} does not start with the reserved tokens")
        return cls(lines[4:])


def build_vocab(corpus: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Vocabulary of all tokens seen at least min_count times.

    Ordered by descending count, then lexicographically, so the id
    assignment is deterministic for a given corpus.
    """
    if min_count < 1:
        raise ContractError(f"min_count must be at least 1, got {min_count}")
    counts: Counter[str] = Counter()
    for text in corpus:
        counts.update(tokenize(text))
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


def encode_text(text: str, vocab: Vocabulary, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-length id sequence [CLS] tokens... [SEP] PAD... plus its mask.

    Token lists longer than max_len - 2 are truncated so the SEP always
    survives. Pure: identical inputs give identical arrays.
    """
    if max_len < 2:
        raise ContractError(f"max_len must fit CLS and SEP, got {max_len}")
    toks = tokenize(text)[: max_len - 2]
    ids = [CLS_ID] + [vocab.lookup(t) for t in toks] + [SEP_ID]
    n = len(ids)
    ids.extend([PAD_ID] * (max_len - n))
    mask = np.zeros(max_len, dtype=bool)
    mask[:n] = True
    return np.asarray(ids, dtype=np.int64), mask


def embed_sequence(ids, token_table: Tensor, pos_table: Tensor) -> Tensor:
    """Token embeddings plus learned absolute position embeddings."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.shape[0] > pos_table.data.shape[0]:
        raise IndexOutOfRange(
            f"sequence of {idx.shape[0]} exceeds the {pos_table.data.shape[0]} known positions")
    if token_table.data.shape[-1] != pos_table.data.shape[-1]:
        raise ContractError(
            f"token width {token_table.data.shape[-1]} != position width {pos_table.data.shape[-1]}")
    tok = embedding_lookup(token_table, idx)
    pos = embedding_lookup(pos_table, np.arange(idx.shape[0]))
    return add(tok, pos)
