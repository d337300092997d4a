"""Autoregressive generation that attends one source sentence at a time.

The decoder starts on source sentence 0 and moves to the next sentence
each time it emits ``[SEP]``; generation ends after the ``[SEP]`` closing
the last source sentence, so the output always has as many sentences as
the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from songmass.align import AlignmentPair, dp_align, greedy_align
from songmass.model.train import Bundle
from songmass.model.transformer import DIRECTION_MODES
from songmass.score_io.tokenize import is_duration_token, is_pitch_token
from songmass.tokens import BOS, SEP, SPECIAL_TOKENS, TokenSequence, sentence_ids_of


# Runaway guard on target units per source unit. Melismatic lyrics put
# well over two notes on a word, so the guard sits above that.
CAP_FACTOR = 4


class GenerationTruncated(RuntimeError):
    def __init__(self, partial: TokenSequence, steps: int):
        super().__init__(f"step budget of {steps} exhausted before the final [SEP]")
        self.partial = partial


@dataclass
class DecodeState:
    tokens: list[str] = field(default_factory=list)
    sentence: int = 0
    # attention rows of the current and finished sentences
    rows: list[list[np.ndarray]] = field(default_factory=lambda: [[]])
    steps: int = 0
    content: int = 0  # non-[SEP] tokens in the current sentence


@dataclass
class Generation:
    tokens: TokenSequence
    # per sentence: (target tokens incl. [SEP]) x (source tokens incl. [SEP])
    attention: list[np.ndarray]


def _units(tokens: list[str], melody: bool) -> int:
    return len(tokens) // 2 if melody else len(tokens)


def generate(
    bundle: Bundle,
    source: TokenSequence,
    direction: str,
    strategy: str = "greedy",
    top_k: int = 5,
    seed: int = 0,
    max_sentence_len: int | None = None,
    max_steps: int | None = None,
) -> Generation:
    """Generate the other modality for ``source``.

    ``max_sentence_len`` caps the non-``[SEP]`` tokens per target sentence;
    by default it allows ``CAP_FACTOR`` times as many words/notes as the
    source sentence has. Melody output obeys a pitch-then-duration grammar.
    """
    if direction not in DIRECTION_MODES:
        raise ValueError(f"unknown direction {direction!r}")
    if strategy not in ("greedy", "top-k"):
        raise ValueError(f"unknown strategy {strategy!r}")
    src_sents = source.sentences()
    if not src_sents:
        raise ValueError("source has no sentences")
    mode = DIRECTION_MODES[direction]
    melody_out = direction == "l2m"
    src_vocab, tgt_vocab = ((bundle.lyric_vocab, bundle.melody_vocab) if melody_out
                            else (bundle.melody_vocab, bundle.lyric_vocab))
    per_unit = 2 if melody_out else 1
    if max_sentence_len is None:
        caps = [CAP_FACTOR * max(1, _units(s, not melody_out)) * per_unit for s in src_sents]
    else:
        caps = [max_sentence_len + (max_sentence_len % 2 if melody_out else 0)] * len(src_sents)
    if max_steps is None:
        max_steps = sum(caps) + len(caps)

    itos = tgt_vocab.itos
    content = np.array([t not in SPECIAL_TOKENS for t in itos])
    pitch_ok = np.array([t not in SPECIAL_TOKENS and is_pitch_token(t) for t in itos])
    dur_ok = np.array([t not in SPECIAL_TOKENS and is_duration_token(t) for t in itos])
    sep_id = tgt_vocab.stoi[SEP]
    spans = source.sentence_spans()

    model = bundle.model
    model.eval()
    gen = torch.Generator().manual_seed(seed)
    src_ids = torch.tensor([src_vocab.encode(source.tokens)])
    src_pos = torch.arange(len(source))[None]
    src_sent = torch.tensor([source.sentence_ids])
    src_valid = torch.ones_like(src_ids, dtype=torch.bool)

    state = DecodeState()
    with torch.no_grad():
        memory = model.encode(mode, src_ids, src_pos, src_valid)
        while state.sentence < len(src_sents):
            if state.steps >= max_steps:
                raise GenerationTruncated(TokenSequence(list(state.tokens)), max_steps)
            ids = [tgt_vocab.stoi[BOS]] + tgt_vocab.encode(state.tokens)
            tgt_in = torch.tensor([ids])
            tgt_sent = torch.tensor([sentence_ids_of(state.tokens + [SEP])])
            logits, weights = model.decode(
                mode, memory, src_sent, src_valid, tgt_in,
                torch.arange(len(ids))[None], tgt_sent, torch.ones_like(tgt_in, dtype=torch.bool),
            )
            allowed = _allowed(state, caps[state.sentence], melody_out, content, pitch_ok, dur_ok, sep_id)
            scores = logits[0, -1].clone()
            scores[~torch.from_numpy(allowed)] = float("-inf")
            if strategy == "greedy":
                nxt = int(scores.argmax())
            else:
                k = min(top_k, int(allowed.sum()))
                top = torch.topk(scores, k)
                probs = torch.softmax(top.values, dim=-1)
                nxt = int(top.indices[torch.multinomial(probs, 1, generator=gen)])

            start, sep = spans[state.sentence]
            row = weights.mean(dim=1)[0, -1, start:sep + 1].numpy().copy()
            state.rows[-1].append(row)
            state.tokens.append(itos[nxt])
            state.steps += 1
            if nxt == sep_id:
                state.sentence += 1
                state.content = 0
                if state.sentence < len(src_sents):
                    state.rows.append([])
            else:
                state.content += 1
    return Generation(TokenSequence(state.tokens), [np.stack(r) for r in state.rows])


def _allowed(state: DecodeState, cap: int, melody: bool, content, pitch_ok, dur_ok, sep_id) -> np.ndarray:
    allowed = np.zeros(len(content), dtype=bool)
    if melody:
        if state.content % 2:
            return dur_ok.copy()
        if state.content >= cap:
            allowed[sep_id] = True
            return allowed
        allowed |= pitch_ok
        allowed[sep_id] = state.content > 0
        return allowed
    if state.content >= cap:
        allowed[sep_id] = True
        return allowed
    allowed |= content
    allowed[sep_id] = state.content > 0
    return allowed


def unit_attention(A: np.ndarray, direction: str) -> np.ndarray:
    """Word-by-note attention of one sentence.

    Drops the ``[SEP]`` row and column, then merges each note's pitch and
    duration tokens: target rows are averaged, source columns summed, so
    rows stay distributions over the source.
    """
    A = np.asarray(A)[:-1, :-1]
    if direction == "l2m":
        return A.reshape(A.shape[0] // 2, 2, A.shape[1]).mean(axis=1)
    if direction == "m2l":
        return A.reshape(A.shape[0], A.shape[1] // 2, 2).sum(axis=2)
    raise ValueError(f"unknown direction {direction!r}")


def align_generation(gen: Generation, direction: str, method: str = "dp") -> list[list[AlignmentPair]]:
    """Per-sentence word/note alignment of a generation, oriented (source, target)."""
    out = []
    for A in gen.attention:
        U = unit_attention(A, direction)
        if method == "dp":
            out.append(dp_align(U)[0])
        elif method == "greedy":
            out.append(greedy_align(U))
        else:
            raise ValueError(f"unknown alignment method {method!r}")
    return out
