"""Song-level MASS masking: one contiguous masked span per sentence."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from songmass.tokens import MASK, SEP, MalformedSequenceError, TokenSequence


@dataclass
class MaskedPair:
    encoder_input: list[str]
    decoder_target: list[str]
    # (sentence_id, u, v): inclusive song-level positions of each masked span
    span_list: list[tuple[int, int, int]]

    @property
    def target_positions(self) -> list[int]:
        return [p for _, u, v in self.span_list for p in range(u, v + 1)]

    @property
    def target_sentence_ids(self) -> list[int]:
        return [sid for sid, u, v in self.span_list for _ in range(u, v + 1)]


def span_length(sentence_len: int, ratio: float) -> int:
    return min(sentence_len, max(1, int(math.floor(ratio * sentence_len + 0.5))))


def mask_song(seq: TokenSequence, ratio: float = 0.5, rng_seed: int = 0) -> MaskedPair:
    """Mask a seeded-uniform span of ``round(ratio * len)`` tokens in every sentence.

    ``[SEP]`` is never masked. The decoder target is the concatenation of the
    original span tokens in sentence order.
    """
    if not 0 < ratio <= 1:
        raise ValueError(f"mask ratio must be in (0, 1], got {ratio}")
    if not seq.tokens or seq.tokens[-1] != SEP:
        raise MalformedSequenceError("sequence must end with [SEP]")
    rng = np.random.default_rng(rng_seed)
    enc = list(seq.tokens)
    target: list[str] = []
    spans = []
    for sid, (start, sep) in enumerate(seq.sentence_spans()):
        n = sep - start
        if n == 0:
            raise MalformedSequenceError(f"sentence {sid} is empty")
        k = span_length(n, ratio)
        u = start + int(rng.integers(0, n - k + 1))
        v = u + k - 1
        target.extend(seq.tokens[u:v + 1])
        enc[u:v + 1] = [MASK] * k
        spans.append((sid, u, v))
    return MaskedPair(enc, target, spans)
