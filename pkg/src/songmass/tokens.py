"""Token sequences shared by the lyric and melody sides.

A song is a flat list of tokens in which every sentence (lyric line or
melody phrase) is terminated by ``[SEP]``. The sentence id of a token is
the number of ``[SEP]`` tokens that precede it, so a ``[SEP]`` belongs to
the sentence it closes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

PAD = "[PAD]"
UNK = "[UNK]"
BOS = "[BOS]"
EOS = "[EOS]"
SEP = "[SEP]"
MASK = "[MASK]"

SPECIAL_TOKENS = (PAD, UNK, BOS, EOS, SEP, MASK)


class MalformedSequenceError(ValueError):
    pass


def sentence_ids_of(tokens: Iterable[str]) -> list[int]:
    ids = []
    current = 0
    for tok in tokens:
        ids.append(current)
        if tok == SEP:
            current += 1
    return ids


@dataclass
class TokenSequence:
    """A song-level token list with ``[SEP]``-delimited sentences."""

    tokens: list[str] = field(default_factory=list)

    @property
    def sentence_ids(self) -> list[int]:
        return sentence_ids_of(self.tokens)

    @property
    def num_sentences(self) -> int:
        return sum(1 for t in self.tokens if t == SEP)

    def __len__(self) -> int:
        return len(self.tokens)

    def sentences(self) -> list[list[str]]:
        """Content tokens of each sentence, ``[SEP]`` excluded.

        Trailing tokens after the last ``[SEP]`` are an error: every
        sentence must be closed.
        """
        out: list[list[str]] = []
        cur: list[str] = []
        for tok in self.tokens:
            if tok == SEP:
                out.append(cur)
                cur = []
            else:
                cur.append(tok)
        if cur:
            raise MalformedSequenceError("sequence does not end with [SEP]")
        return out

    def sentence_spans(self) -> list[tuple[int, int]]:
        """``(start, sep_index)`` of each sentence in song-level positions."""
        spans = []
        start = 0
        for i, tok in enumerate(self.tokens):
            if tok == SEP:
                spans.append((start, i))
                start = i + 1
        return spans

    @classmethod
    def from_sentences(cls, sentences: Iterable[Iterable[str]]) -> "TokenSequence":
        toks: list[str] = []
        for sent in sentences:
            toks.extend(sent)
            toks.append(SEP)
        return cls(toks)

    @classmethod
    def from_line(cls, line: str) -> "TokenSequence":
        return cls(line.split())

    def to_line(self) -> str:
        return " ".join(self.tokens)


def read_token_file(path: str | Path) -> list[TokenSequence]:
    """One song per line, tokens separated by whitespace."""
    text = Path(path).read_text(encoding="utf-8")
    return [TokenSequence.from_line(line) for line in text.splitlines() if line.strip()]


def write_token_file(path: str | Path, songs: Iterable[TokenSequence]) -> None:
    lines = [s.to_line() for s in songs]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

