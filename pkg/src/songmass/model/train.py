"""Round-robin pre-training / fine-tuning loop and checkpoints."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from songmass.data import PairedSong
from songmass.lyrics import Vocabulary
from songmass.model.batch import mass_batch, paired_batch
from songmass.model.losses import forward_loss
from songmass.model.transformer import ModelConfig, SongMASS
from songmass.tokens import TokenSequence

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
PRETRAIN_MODES = ("lyric2lyric", "melody2melody", "lyric2melody", "melody2lyric")
FINETUNE_MODES = {"l2m": ("lyric2melody",), "m2l": ("melody2lyric",)}


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, checkpoint: Path | None):
        super().__init__(f"loss became non-finite at step {step}; last good state in {checkpoint}")
        self.step = step
        self.checkpoint = checkpoint


@dataclass
class Schedule:
    steps: int = 1000
    lr: float = 5e-4
    warmup: int = 100
    batch_size: int = 8
    mask_ratio: float = 0.5
    seed: int = 0
    # None: every mode the corpora support; otherwise an explicit subset
    modes: Sequence[str] | None = None
    log_every: int = 50


@dataclass
class Corpora:
    lyrics: list[TokenSequence] = field(default_factory=list)
    melodies: list[TokenSequence] = field(default_factory=list)
    paired: list[PairedSong] = field(default_factory=list)

    def available_modes(self) -> list[str]:
        modes = []
        if self.lyrics:
            modes.append("lyric2lyric")
        if self.melodies:
            modes.append("melody2melody")
        if self.paired:
            modes += ["lyric2melody", "melody2lyric"]
        return modes


@dataclass
class Bundle:
    """Model plus the vocabularies it was built with."""

    model: SongMASS
    lyric_vocab: Vocabulary
    melody_vocab: Vocabulary

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": self.model.cfg.to_dict(),
            "lyric_vocab": self.lyric_vocab.itos,
            "melody_vocab": self.melody_vocab.itos,
            "extra": extra or {},
        }
        arrays = {name: t.detach().cpu().numpy() for name, t in self.model.state_dict().items()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "Bundle":
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            state = {k: torch.from_numpy(data[k].copy()) for k in data.files if k != "__meta__"}
        model = build_model(ModelConfig(**meta["config"]))
        model.load_state_dict(state)
        return cls(model, Vocabulary(meta["lyric_vocab"]), Vocabulary(meta["melody_vocab"]))


def build_model(cfg: ModelConfig, seed: int = 0) -> SongMASS:
    torch.manual_seed(seed)
    return SongMASS(cfg).double()


def make_batch(mode, items, bundle: Bundle, ratio: float, seed: int):
    if mode == "lyric2lyric":
        return mass_batch(mode, items, bundle.lyric_vocab, ratio, seed)
    if mode == "melody2melody":
        return mass_batch(mode, items, bundle.melody_vocab, ratio, seed)
    direction = "l2m" if mode == "lyric2melody" else "m2l"
    return paired_batch(direction, items, bundle.lyric_vocab, bundle.melody_vocab)


class Trainer:
    """Adam with linear warmup; each step trains one loss term, cycling
    through the active terms in a fixed order."""

    def __init__(self, bundle: Bundle, corpora: Corpora, schedule: Schedule,
                 checkpoint: str | Path | None = None):
        self.bundle = bundle
        self.corpora = corpora
        self.schedule = schedule
        self.checkpoint = Path(checkpoint) if checkpoint else None
        self.modes = list(schedule.modes) if schedule.modes else corpora.available_modes()
        available = corpora.available_modes()
        missing = [m for m in self.modes if m not in available]
        if missing or not self.modes:
            raise ValueError(f"no corpus for modes {missing or self.modes}")
        self.opt = torch.optim.Adam(bundle.model.parameters(), lr=schedule.lr)
        warm = max(1, schedule.warmup)
        self.sched = torch.optim.lr_scheduler.LambdaLR(self.opt, lambda s: min(1.0, (s + 1) / warm))
        self.rng = np.random.default_rng(schedule.seed)
        self._orders: dict[str, list[int]] = {}
        self.step = 0
        self.history: list[dict] = []

    def _items(self, mode: str) -> list:
        if mode == "lyric2lyric":
            return self.corpora.lyrics
        if mode == "melody2melody":
            return self.corpora.melodies
        return self.corpora.paired

    def _next_indices(self, mode: str) -> list[int]:
        n = len(self._items(mode))
        k = min(self.schedule.batch_size, n)
        order = self._orders.get(mode, [])
        if len(order) < k:
            order = order + list(self.rng.permutation(n))
        self._orders[mode] = order[k:]
        return order[:k]

    def train_step(self) -> dict:
        mode = self.modes[self.step % len(self.modes)]
        items = self._items(mode)
        chosen = [items[i] for i in self._next_indices(mode)]
        batch = make_batch(mode, chosen, self.bundle, self.schedule.mask_ratio,
                           self.schedule.seed * 100_003 + self.step * 1_009)
        model = self.bundle.model
        model.train()
        result = forward_loss(model, batch)
        if not torch.isfinite(result.loss):
            self._abort()
        self.opt.zero_grad(set_to_none=True)
        result.loss.backward()
        for name, p in model.named_parameters():
            if p.grad is not None and not torch.isfinite(p.grad).all():
                log.error("non-finite gradient in %s", name)
                self._abort()
        self.opt.step()
        self.sched.step()
        record = {
            "step": self.step,
            "mode": mode,
            "loss": result.loss.item(),
            "nll": result.nll.item(),
            "att": None if result.att is None else result.att.item(),
            "lr": self.opt.param_groups[0]["lr"],
        }
        self.history.append(record)
        if self.schedule.log_every and self.step % self.schedule.log_every == 0:
            log.info("step %d %s loss=%.4f nll=%.4f att=%s", self.step, mode,
                     record["loss"], record["nll"], record["att"])
        self.step += 1
        return record

    def _abort(self):
        if self.checkpoint is not None:
            # parameters are still those of the last finite step
            self.bundle.save(self.checkpoint, {"diverged_at": self.step})
        raise TrainingDiverged(self.step, self.checkpoint)

    def run(self, steps: int | None = None) -> list[dict]:
        for _ in range(self.schedule.steps if steps is None else steps):
            self.train_step()
        return self.history


def train(bundle: Bundle, corpora: Corpora, schedule: Schedule,
          checkpoint: str | Path | None = None) -> Bundle:
    trainer = Trainer(bundle, corpora, schedule, checkpoint)
    trainer.run()
    if checkpoint is not None:
        bundle.save(checkpoint, {"steps": trainer.step})
    return bundle


def nll_and_count(bundle: Bundle, songs: Sequence[PairedSong], direction: str, batch_size: int = 16) -> tuple[float, int]:
    """Summed teacher-forced token NLL and target-token count."""
    model = bundle.model
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for k in range(0, len(songs), batch_size):
            batch = paired_batch(direction, songs[k:k + batch_size], bundle.lyric_vocab,
                                 bundle.melody_vocab, with_alignment=False)
            res = forward_loss(model, batch)
            total += float(res.nll) * res.ntokens
            count += res.ntokens
    return total, count


def heldout_regularizer(bundle: Bundle, songs: Sequence[PairedSong], direction: str) -> float:
    """Attention regularizer under teacher forcing, averaged over songs."""
    model = bundle.model
    model.eval()
    with torch.no_grad():
        batch = paired_batch(direction, list(songs), bundle.lyric_vocab, bundle.melody_vocab)
        res = forward_loss(model, batch)
    return float(res.att)
