"""Sentence-masked encoder-decoder attention and the alignment regularizer."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch

from songmass.align import AlignmentError, AlignmentPair

NEG_INF = float("-inf")


class DegenerateRowError(ValueError):
    """An attention row has every position masked."""


def _tensor(x, dtype=None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if dtype is None else x.to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype or torch.float64)


def sentence_mask(target_ids: Sequence[int], source_ids: Sequence[int]) -> torch.Tensor:
    """Additive mask: 0 where both tokens share a sentence, -inf elsewhere."""
    t = torch.as_tensor(list(target_ids), dtype=torch.long)
    s = torch.as_tensor(list(source_ids), dtype=torch.long)
    for name, ids in (("target", t), ("source", s)):
        if ids.numel() > 1 and bool((ids[1:] < ids[:-1]).any()):
            raise ValueError(f"{name} sentence ids must be non-decreasing")
    same = t[:, None] == s[None, :]
    mask = torch.zeros(same.shape, dtype=torch.float64)
    return mask.masked_fill(~same, NEG_INF)


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Row softmax of ``scores + mask``; fully masked rows are an error."""
    logits = scores + mask
    dead = torch.isneginf(logits).all(dim=-1)
    if bool(dead.any()):
        rows = dead.nonzero().tolist()
        raise DegenerateRowError(f"fully masked attention rows at {rows[:5]}")
    return torch.softmax(logits, dim=-1)


def masked_attention(h_dec, h_enc, mask, w_q, w_k) -> torch.Tensor:
    """Single-head attention weights ``softmax(QK^T / sqrt(d_z) + mask)``.

    ``h_dec`` is (M, d_z), ``h_enc`` is (N, d_z) and ``w_q``/``w_k`` are
    (d_z, d_z). Returns the (M, N) attention matrix.
    """
    h_dec, h_enc = _tensor(h_dec), _tensor(h_enc)
    w_q, w_k = _tensor(w_q, h_dec.dtype), _tensor(w_k, h_dec.dtype)
    mask = _tensor(mask, h_dec.dtype)
    d_z = h_dec.shape[-1]
    if h_enc.shape[-1] != d_z or w_q.shape != (d_z, d_z) or w_k.shape != (d_z, d_z):
        raise ValueError("hidden sizes of states and projections disagree")
    if mask.shape != (h_dec.shape[0], h_enc.shape[0]):
        raise ValueError(f"mask shape {tuple(mask.shape)} does not match M x N")
    scores = (h_dec @ w_q) @ (h_enc @ w_k).T / math.sqrt(d_z)
    return masked_softmax(scores, mask)


def target_map(alignment: Sequence[AlignmentPair], n_target: int, n_source: int) -> torch.Tensor:
    """Desired attention ``u``: ``1/T`` on the ``T`` sources aligned to a target.

    Pairs may join spans of any length on both sides (a note's pitch and
    duration tokens share one word, for instance) but no token may appear
    in two pairs. Targets without a pair get an all-zero row.
    """
    u = torch.zeros((n_target, n_source), dtype=torch.float64)
    seen_t = np.zeros(n_target, dtype=bool)
    seen_s = np.zeros(n_source, dtype=bool)
    for p in alignment:
        (a, b), (c, d) = p
        if not (1 <= a <= b <= n_source and 1 <= c <= d <= n_target):
            raise AlignmentError(f"pair {p} out of bounds for {n_target}x{n_source}")
        if seen_s[a - 1:b].any() or seen_t[c - 1:d].any():
            raise AlignmentError(f"pair {p} overlaps an earlier pair")
        seen_s[a - 1:b] = True
        seen_t[c - 1:d] = True
        u[c - 1:d, a - 1:b] = 1.0 / (b - a + 1)
    return u


def attention_regularizer(A, u, squared: bool = False) -> torch.Tensor:
    """Mean per-entry distance between attention ``A`` and target ``u``.

    Each entry contributes ``|A - u|`` (or ``(A - u)^2`` with ``squared``),
    averaged over all ``M * N`` cells.
    """
    A, u = _tensor(A), _tensor(u)
    if A.shape != u.shape:
        raise ValueError(f"shape mismatch {tuple(A.shape)} vs {tuple(u.shape)}")
    diff = A - u.to(A.dtype)
    cell = diff * diff if squared else diff.abs()
    return cell.sum() / diff.numel()
