"""Padded tensor batches for the four training modes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from songmass.data import PairedSong
from songmass.lyrics import Vocabulary
from songmass.masking import mask_song
from songmass.model.attention import target_map
from songmass.model.transformer import DIRECTION_MODES, MODES
from songmass.tokens import BOS, MASK, PAD, TokenSequence, sentence_ids_of


@dataclass
class Example:
    """One song before padding. ``att_target`` is the (T, S) map ``u``."""

    src: list[int]
    src_pos: list[int]
    src_sent: list[int]
    tgt_in: list[int]
    tgt_out: list[int]
    tgt_pos: list[int]
    tgt_sent: list[int]
    att_target: torch.Tensor | None = None


@dataclass
class Batch:
    mode: str
    src: torch.Tensor
    src_pos: torch.Tensor
    src_sent: torch.Tensor
    src_valid: torch.Tensor
    tgt_in: torch.Tensor
    tgt_out: torch.Tensor
    tgt_pos: torch.Tensor
    tgt_sent: torch.Tensor
    tgt_valid: torch.Tensor
    att_target: torch.Tensor | None = None
    att_weight: torch.Tensor | None = None

    @property
    def size(self) -> int:
        return self.src.shape[0]

    def lengths(self) -> list[tuple[int, int]]:
        """(target, source) lengths of each song."""
        return list(zip(self.tgt_valid.sum(1).tolist(), self.src_valid.sum(1).tolist()))


def _pad(rows: Sequence[Sequence[int]], value: int) -> torch.Tensor:
    width = max(len(r) for r in rows)
    return torch.tensor([list(r) + [value] * (width - len(r)) for r in rows], dtype=torch.long)


def _cell_weights(tgt_sent: list[int], src_sent: list[int]) -> torch.Tensor:
    """``1 / (N_s * M_s * S)`` on same-sentence cells: summing ``w * |A - u|``
    gives the mean over sentences of each sentence's averaged distance."""
    t = torch.tensor(tgt_sent)
    s = torch.tensor(src_sent)
    n_sent = int(t.max()) + 1
    m_count = torch.bincount(t, minlength=n_sent).double()
    n_count = torch.bincount(s, minlength=n_sent).double()
    same = t[:, None] == s[None, :]
    w = 1.0 / (m_count[t][:, None] * n_count[s][None, :] * n_sent)
    return torch.where(same, w, torch.zeros_like(w))


def collate(mode: str, examples: Sequence[Example], pad_id: int = 0) -> Batch:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    src = _pad([e.src for e in examples], pad_id)
    tgt_in = _pad([e.tgt_in for e in examples], pad_id)
    batch = Batch(
        mode=mode,
        src=src,
        src_pos=_pad([e.src_pos for e in examples], 0),
        src_sent=_pad([e.src_sent for e in examples], -1),
        src_valid=_pad([[1] * len(e.src) for e in examples], 0).bool(),
        tgt_in=tgt_in,
        tgt_out=_pad([e.tgt_out for e in examples], pad_id),
        tgt_pos=_pad([e.tgt_pos for e in examples], 0),
        tgt_sent=_pad([e.tgt_sent for e in examples], -1),
        tgt_valid=_pad([[1] * len(e.tgt_in) for e in examples], 0).bool(),
    )
    if all(e.att_target is not None for e in examples):
        B, T, S = len(examples), tgt_in.shape[1], src.shape[1]
        u = torch.zeros(B, T, S, dtype=torch.float64)
        w = torch.zeros(B, T, S, dtype=torch.float64)
        for b, e in enumerate(examples):
            t, s = e.att_target.shape
            u[b, :t, :s] = e.att_target
            w[b, :t, :s] = _cell_weights(e.tgt_sent, e.src_sent)
        batch.att_target, batch.att_weight = u, w
    return batch


def mass_example(seq: TokenSequence, vocab: Vocabulary, ratio: float, seed: int) -> Example:
    """Encoder sees the masked song; the decoder predicts every masked span.

    Each span's decoder input starts with ``[MASK]`` followed by the span
    shifted right; positions are those of the original tokens.
    """
    pair = mask_song(seq, ratio, seed)
    tgt_in: list[str] = []
    for _, u, v in pair.span_list:
        tgt_in.append(MASK)
        tgt_in.extend(seq.tokens[u:v])
    return Example(
        src=vocab.encode(pair.encoder_input),
        src_pos=list(range(len(seq))),
        src_sent=seq.sentence_ids,
        tgt_in=vocab.encode(tgt_in),
        tgt_out=vocab.encode(pair.decoder_target),
        tgt_pos=pair.target_positions,
        tgt_sent=pair.target_sentence_ids,
    )


def paired_example(
    song: PairedSong,
    direction: str,
    lyric_vocab: Vocabulary,
    melody_vocab: Vocabulary,
    with_alignment: bool = True,
) -> Example:
    src_seq, tgt_seq = song.source_target(direction)
    src_vocab, tgt_vocab = (lyric_vocab, melody_vocab) if direction == "l2m" else (melody_vocab, lyric_vocab)
    tgt = tgt_vocab.encode(tgt_seq.tokens)
    u = None
    if with_alignment:
        u = target_map(song.token_alignment(direction), len(tgt_seq), len(src_seq))
    return Example(
        src=src_vocab.encode(src_seq.tokens),
        src_pos=list(range(len(src_seq))),
        src_sent=src_seq.sentence_ids,
        tgt_in=[tgt_vocab.stoi[BOS]] + tgt[:-1],
        tgt_out=tgt,
        tgt_pos=list(range(len(tgt_seq))),
        tgt_sent=tgt_seq.sentence_ids,
        att_target=u,
    )


def mass_batch(mode: str, songs: Sequence[TokenSequence], vocab: Vocabulary, ratio: float, seed: int) -> Batch:
    if MODES[mode][0] != MODES[mode][1]:
        raise ValueError(f"{mode} is not a masked-prediction mode")
    return collate(mode, [mass_example(s, vocab, ratio, seed + k) for k, s in enumerate(songs)],
                   vocab.stoi[PAD])


def paired_batch(
    direction: str,
    songs: Sequence[PairedSong],
    lyric_vocab: Vocabulary,
    melody_vocab: Vocabulary,
    with_alignment: bool = True,
) -> Batch:
    mode = DIRECTION_MODES[direction]
    examples = [paired_example(s, direction, lyric_vocab, melody_vocab, with_alignment) for s in songs]
    return collate(mode, examples)


def source_example(seq: TokenSequence, vocab: Vocabulary) -> tuple[list[int], list[int], list[int]]:
    return vocab.encode(seq.tokens), list(range(len(seq))), sentence_ids_of(seq.tokens)
