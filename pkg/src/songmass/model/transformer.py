"""Separate lyric/melody Transformer encoders and decoders.

Every encoder-decoder attention layer applies the sentence mask, so a
target token only sees the source sentence with its own sentence id.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

from songmass.model.attention import NEG_INF, masked_softmax

MODES = {
    "lyric2lyric": ("lyric", "lyric"),
    "melody2melody": ("melody", "melody"),
    "lyric2melody": ("lyric", "melody"),
    "melody2lyric": ("melody", "lyric"),
}
DIRECTION_MODES = {"l2m": "lyric2melody", "m2l": "melody2lyric"}


@dataclass
class ModelConfig:
    lyric_vocab: int
    melody_vocab: int
    layers: int = 2
    hidden: int = 32
    heads: int = 2
    ff: int = 64
    max_len: int = 1024
    dropout: float = 0.1
    alpha: float = 0.5
    squared_att: bool = False

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError("hidden size must be divisible by the head count")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def sinusoidal(positions: torch.Tensor, dim: int) -> torch.Tensor:
    """Absolute sinusoidal encodings for integer ``positions`` of any shape."""
    half = torch.arange(0, dim, 2, dtype=torch.float64)
    freq = torch.exp(-math.log(10000.0) * half / dim)
    angles = positions.to(torch.float64).unsqueeze(-1) * freq
    pe = torch.zeros(*positions.shape, dim, dtype=torch.float64)
    pe[..., 0::2] = torch.sin(angles)
    pe[..., 1::2] = torch.cos(angles[..., : dim // 2])
    return pe


class MultiHeadAttention(nn.Module):
    def __init__(self, hidden: int, heads: int):
        super().__init__()
        self.heads = heads
        self.d_head = hidden // heads
        self.q = nn.Linear(hidden, hidden)
        self.k = nn.Linear(hidden, hidden)
        self.v = nn.Linear(hidden, hidden)
        self.o = nn.Linear(hidden, hidden)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        B, T, _ = x.shape
        return x.view(B, T, self.heads, self.d_head).transpose(1, 2)

    def forward(self, x_q, x_kv, mask):
        """``mask`` is an additive (B, Tq, Tk) tensor; returns output and
        per-head weights (B, H, Tq, Tk)."""
        q, k, v = self._split(self.q(x_q)), self._split(self.k(x_kv)), self._split(self.v(x_kv))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        weights = masked_softmax(scores, mask.unsqueeze(1))
        out = (weights @ v).transpose(1, 2).reshape(x_q.shape)
        return self.o(out), weights


class FeedForward(nn.Sequential):
    def __init__(self, hidden: int, ff: int):
        super().__init__(nn.Linear(hidden, ff), nn.ReLU(), nn.Linear(ff, hidden))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.hidden)
        self.attn = MultiHeadAttention(cfg.hidden, cfg.heads)
        self.norm2 = nn.LayerNorm(cfg.hidden)
        self.ff = FeedForward(cfg.hidden, cfg.ff)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, mask):
        h = self.norm1(x)
        x = x + self.drop(self.attn(h, h, mask)[0])
        return x + self.drop(self.ff(self.norm2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.hidden)
        self.self_attn = MultiHeadAttention(cfg.hidden, cfg.heads)
        self.norm2 = nn.LayerNorm(cfg.hidden)
        self.cross_attn = MultiHeadAttention(cfg.hidden, cfg.heads)
        self.norm3 = nn.LayerNorm(cfg.hidden)
        self.ff = FeedForward(cfg.hidden, cfg.ff)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, y, memory, self_mask, cross_mask):
        h = self.norm1(y)
        y = y + self.drop(self.self_attn(h, h, self_mask)[0])
        out, weights = self.cross_attn(self.norm2(y), memory, cross_mask)
        y = y + self.drop(out)
        return y + self.drop(self.ff(self.norm3(y))), weights


class Encoder(nn.Module):
    def __init__(self, vocab: int, cfg: ModelConfig):
        super().__init__()
        self.scale = math.sqrt(cfg.hidden)
        self.embed = nn.Embedding(vocab, cfg.hidden)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.layers))
        self.norm = nn.LayerNorm(cfg.hidden)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, ids, pos, valid):
        x = self.drop(self.embed(ids) * self.scale + sinusoidal(pos, self.embed.embedding_dim).to(self.embed.weight.dtype))
        mask = torch.zeros(valid.shape[0], valid.shape[1], valid.shape[1], dtype=x.dtype)
        mask = mask.masked_fill(~valid[:, None, :], NEG_INF)
        for layer in self.layers:
            x = layer(x, mask)
        return self.norm(x)


class Decoder(nn.Module):
    def __init__(self, vocab: int, cfg: ModelConfig):
        super().__init__()
        self.scale = math.sqrt(cfg.hidden)
        self.embed = nn.Embedding(vocab, cfg.hidden)
        self.layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.layers))
        self.norm = nn.LayerNorm(cfg.hidden)
        self.out = nn.Linear(cfg.hidden, vocab)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, ids, pos, valid, memory, cross_mask):
        """Returns logits and the last layer's cross-attention weights per head."""
        y = self.drop(self.embed(ids) * self.scale + sinusoidal(pos, self.embed.embedding_dim).to(self.embed.weight.dtype))
        T = ids.shape[1]
        causal = torch.ones(T, T, dtype=torch.bool).tril()
        allowed = causal[None] & valid[:, None, :]
        self_mask = torch.zeros(allowed.shape, dtype=y.dtype).masked_fill(~allowed, NEG_INF)
        weights = None
        for layer in self.layers:
            y, weights = layer(y, memory, self_mask, cross_mask)
        return self.out(self.norm(y)), weights


def cross_sentence_mask(tgt_sent, src_sent, tgt_valid, src_valid, dtype=torch.float64):
    """Batched sentence mask (B, T, S). Padding query rows see every real
    source token so that no row is fully masked."""
    same = (tgt_sent[:, :, None] == src_sent[:, None, :]) & src_valid[:, None, :]
    allowed = torch.where(tgt_valid[:, :, None], same, src_valid[:, None, :].expand_as(same))
    return torch.zeros(allowed.shape, dtype=dtype).masked_fill(~allowed, NEG_INF)


class SongMASS(nn.Module):
    """Four networks: lyric/melody encoders and lyric/melody decoders."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.lyric_encoder = Encoder(cfg.lyric_vocab, cfg)
        self.lyric_decoder = Decoder(cfg.lyric_vocab, cfg)
        self.melody_encoder = Encoder(cfg.melody_vocab, cfg)
        self.melody_decoder = Decoder(cfg.melody_vocab, cfg)

    def route(self, mode: str) -> tuple[Encoder, Decoder]:
        try:
            src, tgt = MODES[mode]
        except KeyError:
            raise ValueError(f"unknown mode {mode!r}") from None
        return getattr(self, f"{src}_encoder"), getattr(self, f"{tgt}_decoder")

    def encode(self, mode, src, src_pos, src_valid):
        enc, _ = self.route(mode)
        return enc(src, src_pos, src_valid)

    def decode(self, mode, memory, src_sent, src_valid, tgt_in, tgt_pos, tgt_sent, tgt_valid):
        _, dec = self.route(mode)
        cross = cross_sentence_mask(tgt_sent, src_sent, tgt_valid, src_valid, memory.dtype)
        return dec(tgt_in, tgt_pos, tgt_valid, memory, cross)

    def forward(self, batch):
        longest = max(batch.src.shape[1], batch.tgt_in.shape[1])
        if longest > self.cfg.max_len:
            raise SequenceTooLongError(f"sequence of {longest} tokens exceeds max_len={self.cfg.max_len}")
        memory = self.encode(batch.mode, batch.src, batch.src_pos, batch.src_valid)
        return self.decode(batch.mode, memory, batch.src_sent, batch.src_valid,
                           batch.tgt_in, batch.tgt_pos, batch.tgt_sent, batch.tgt_valid)


class SequenceTooLongError(ValueError):
    pass
