"""Training objectives: token NLL per mode plus the attention regularizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from songmass.model.batch import Batch
from songmass.model.transformer import SongMASS


class NumericError(FloatingPointError):
    def __init__(self, message: str, tensor_name: str):
        super().__init__(f"{message}: {tensor_name}")
        self.tensor_name = tensor_name


@dataclass
class LossResult:
    loss: torch.Tensor
    nll: torch.Tensor
    att: torch.Tensor | None
    # head-averaged last-layer cross attention per song, (T, S) without padding
    attention: list[np.ndarray]
    ntokens: int


def token_nll(logits: torch.Tensor, batch: Batch) -> torch.Tensor:
    mask = batch.tgt_valid
    return F.cross_entropy(logits[mask], batch.tgt_out[mask], reduction="mean")


def batch_regularizer(attn: torch.Tensor, batch: Batch, squared: bool = False) -> torch.Tensor:
    """Mean over songs of the per-sentence attention regularizer.

    ``attn`` is the (B, T, S) head-averaged attention. Each sentence block
    contributes its mean per-cell distance, blocks are averaged per song.
    """
    diff = attn - batch.att_target
    cell = diff * diff if squared else diff.abs()
    return (cell * batch.att_weight).sum(dim=(1, 2)).mean()


def forward_loss(model: SongMASS, batch: Batch) -> LossResult:
    logits, weights = model(batch)
    attn = weights.mean(dim=1)
    nll = token_nll(logits, batch)
    att = None
    loss = nll
    if batch.att_target is not None:
        att = batch_regularizer(attn, batch, model.cfg.squared_att)
        if model.cfg.alpha > 0:
            loss = nll + model.cfg.alpha * att
    per_song = [
        attn[b, :t, :s].detach().cpu().numpy()
        for b, (t, s) in enumerate(batch.lengths())
    ]
    return LossResult(loss, nll, att, per_song, int(batch.tgt_valid.sum()))


def total_loss(model: SongMASS, batches: dict[str, Batch]) -> torch.Tensor:
    """Sum of the per-mode losses, each with its own regularizer term."""
    return sum(forward_loss(model, b).loss for b in batches.values())


def backward(model: SongMASS, batch_or_batches) -> dict[str, torch.Tensor]:
    """Gradients of the loss w.r.t. every named parameter.

    Accepts a single batch or a ``{mode: batch}`` dict (summed loss).
    Parameters the loss does not reach get exact zeros.
    """
    model.zero_grad(set_to_none=True)
    if isinstance(batch_or_batches, Batch):
        loss = forward_loss(model, batch_or_batches).loss
        loss_name = f"loss[{batch_or_batches.mode}]"
    else:
        loss = total_loss(model, batch_or_batches)
        loss_name = "loss[total]"
    if not torch.isfinite(loss):
        raise NumericError("non-finite loss", loss_name)
    loss.backward()
    grads = {}
    for name, p in model.named_parameters():
        g = p.grad if p.grad is not None else torch.zeros_like(p)
        if not torch.isfinite(g).all():
            raise NumericError("non-finite gradient", name)
        grads[name] = g.detach().clone()
    return grads
