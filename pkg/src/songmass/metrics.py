"""Objective melody metrics: distribution overlap, DTW melody distance, perplexity."""

from __future__ import annotations

import logging
import math
from collections import Counter
from typing import Sequence

import numpy as np

from songmass.model.train import nll_and_count
from songmass.score_io.melody import MelodySong, NoPitchError

log = logging.getLogger(__name__)

REST_BIN = "R"


def histogram(song: MelodySong, kind: str) -> dict:
    """Normalized frequency histogram of note pitches or durations.

    Pitch bins are MIDI numbers plus ``"R"`` for rests; duration bins are
    sixteenth counts.
    """
    if kind == "pitch":
        counts = Counter(REST_BIN if n.is_rest else n.pitch for n in song.notes)
    elif kind == "duration":
        counts = Counter(n.duration for n in song.notes)
    else:
        raise ValueError(f"kind must be 'pitch' or 'duration', got {kind!r}")
    total = sum(counts.values())
    return {k: v / total for k, v in counts.items()}


def overlapped_area(p: dict, q: dict) -> float:
    return float(sum(min(p[k], q[k]) for k in p.keys() & q.keys()))


def distribution_similarity(generated: Sequence[MelodySong], reference: Sequence[MelodySong], kind: str) -> float:
    """Mean histogram overlap over song pairs matched by index; empty songs
    are skipped with a warning."""
    if len(generated) != len(reference):
        raise ValueError(f"{len(generated)} generated vs {len(reference)} reference songs")
    scores = []
    for k, (g, r) in enumerate(zip(generated, reference)):
        if not g.notes or not r.notes:
            log.warning("skipping song %d: empty melody", k)
            continue
        scores.append(overlapped_area(histogram(g, kind), histogram(r, kind)))
    if not scores:
        raise ValueError("no non-empty song pairs")
    return float(np.mean(scores))


def pitch_series(song: MelodySong) -> np.ndarray:
    """One pitch per sixteenth, rests holding the previous pitch (leading
    rests take the first pitch), minus the mean."""
    pitches = song.pitches
    if not pitches:
        raise NoPitchError("song has no pitched notes")
    out = []
    last = pitches[0]
    for n in song.notes:
        if not n.is_rest:
            last = n.pitch
        out.extend([last] * n.duration)
    series = np.asarray(out, dtype=np.float64)
    return series - series.mean()


def dtw(a: np.ndarray, b: np.ndarray) -> float:
    """Full-table DTW with absolute-difference cost."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValueError("DTW needs non-empty series")
    cost = np.abs(a[:, None] - b[None, :])
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        prev, row, c = D[i - 1], D[i], cost[i - 1]
        # diagonal/vertical moves vectorized, horizontal move needs a scan
        best = np.minimum(prev[:-1], prev[1:]) + c
        for j in range(1, m + 1):
            row[j] = min(best[j - 1], row[j - 1] + c[j - 1])
    return float(D[n, m])


def melody_distance(generated: MelodySong, reference: MelodySong) -> float:
    return dtw(pitch_series(generated), pitch_series(reference))


def mean_melody_distance(generated: Sequence[MelodySong], reference: Sequence[MelodySong]) -> float:
    if len(generated) != len(reference):
        raise ValueError(f"{len(generated)} generated vs {len(reference)} reference songs")
    return float(np.mean([melody_distance(g, r) for g, r in zip(generated, reference)]))


def perplexity_from_nll(total_nll: float, count: int) -> float:
    if count == 0:
        raise ValueError("perplexity of an empty dataset")
    return math.exp(total_nll / count)


def perplexity(bundle, dataset, direction: str) -> float:
    """``exp`` of the mean teacher-forced target-token NLL."""
    if not dataset:
        raise ValueError("perplexity of an empty dataset")
    return perplexity_from_nll(*nll_and_count(bundle, list(dataset), direction))
