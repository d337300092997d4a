"""Lyric corpus parsing and token vocabularies."""

from __future__ import annotations

import re
from collections import Counter
from pathlib import Path
from typing import Callable, Iterable, Sequence

from songmass.tokens import SPECIAL_TOKENS, UNK, TokenSequence

_APOSTROPHES = str.maketrans({"’": "'", "‘": "'", "`": "'"})
_DROP = re.compile(r"[^\w\s']")


def normalize_line(line: str) -> list[str]:
    """Lowercase, strip punctuation (apostrophes stay), split on whitespace."""
    line = line.translate(_APOSTROPHES).lower()
    words = (w.strip("'") for w in _DROP.sub(" ", line).replace("_", " ").split())
    return [w for w in words if w]


def parse_lyrics(
    text: str,
    hyphenate: Callable[[str], list[str]] | None = None,
) -> list[TokenSequence]:
    """Split ``text`` into songs at blank lines and sentences at line breaks.

    ``hyphenate`` optionally maps each word to syllables. A line with no
    word characters counts as blank.
    """
    songs: list[TokenSequence] = []
    current: list[list[str]] = []
    for raw in text.splitlines():
        words = normalize_line(raw)
        if not words:
            if current:
                songs.append(TokenSequence.from_sentences(current))
                current = []
            continue
        if hyphenate is not None:
            words = [syl for w in words for syl in hyphenate(w)]
        current.append(words)
    if current:
        songs.append(TokenSequence.from_sentences(current))
    return songs


class Vocabulary:
    """Bijective token/id map; the special tokens take ids 0..5."""

    def __init__(self, tokens: Sequence[str]):
        if list(tokens[: len(SPECIAL_TOKENS)]) != list(SPECIAL_TOKENS):
            raise ValueError("vocabulary must start with the special tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.itos = list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        self.unk_id = self.stoi[UNK]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, self.unk_id)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def build_vocab(corpora: Iterable[Iterable[str]], min_count: int = 1) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_count`` times.

    Order after the specials: frequency descending, then lexicographic.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for seq in corpora:
        tokens = seq.tokens if isinstance(seq, TokenSequence) else seq
        counts.update(t for t in tokens if t not in SPECIAL_TOKENS)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(list(SPECIAL_TOKENS) + kept)
