"""Strict lyric/melody alignment from an attention matrix.

Matrices are indexed ``A[target][source]``. An alignment is a list of
pairs, each joining a source span and a target span (1-based, inclusive)
where at least one side is a single token. Pairs tile both sequences in
order.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np


class AlignmentError(ValueError):
    pass


class AlignmentPair(NamedTuple):
    source: tuple[int, int]
    target: tuple[int, int]

    @property
    def source_len(self) -> int:
        return self.source[1] - self.source[0] + 1

    @property
    def target_len(self) -> int:
        return self.target[1] - self.target[0] + 1


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise AlignmentError(f"expected a non-empty 2-D attention matrix, got shape {A.shape}")
    return A


def check_tiling(pairs: Sequence[AlignmentPair], n_source: int, n_target: int) -> None:
    """Raise unless ``pairs`` tile ``[1, n_source] x [1, n_target]`` monotonically."""
    next_s = next_t = 1
    for p in pairs:
        (a, b), (c, d) = p
        if a != next_s or c != next_t or b < a or d < c:
            raise AlignmentError(f"pair {p} breaks the monotone tiling")
        if p.source_len > 1 and p.target_len > 1:
            raise AlignmentError(f"pair {p} is many-to-many")
        next_s, next_t = b + 1, d + 1
    if next_s != n_source + 1 or next_t != n_target + 1:
        raise AlignmentError("pairs do not cover both sequences")


def pair_score(A: np.ndarray, pair: AlignmentPair) -> float:
    """Summed weight for one target over many sources, else the mean over
    the target span for a single source."""
    (a, b), (c, d) = pair
    if c == d:
        return float(A[c - 1, a - 1:b].sum())
    return float(A[c - 1:d, a - 1].sum() / (d - c + 1))


def score_alignment(A, pairs: Sequence[AlignmentPair]) -> float:
    A = _as_matrix(A)
    return sum(pair_score(A, p) for p in pairs)


def dp_align(A) -> tuple[list[AlignmentPair], float]:
    """Highest-scoring monotone tiling by dynamic programming.

    ``F[i][j]`` is the best score aligning the first ``i`` targets with the
    first ``j`` sources. Candidates are compared with ``>=`` in a fixed
    order, so the last-evaluated split wins ties.
    """
    A = _as_matrix(A)
    M, N = A.shape
    row_cum = np.zeros((M + 1, N + 1))
    row_cum[1:, 1:] = np.cumsum(A, axis=1)
    col_cum = np.zeros((M + 1, N + 1))
    col_cum[1:, 1:] = np.cumsum(A, axis=0)

    F = np.full((M + 1, N + 1), -np.inf)
    F[0, 0] = 0.0
    path = {}
    for i in range(1, M + 1):
        for j in range(1, N + 1):
            best = -np.inf
            for k in range(j):
                score = F[i - 1, k] + (row_cum[i, j] - row_cum[i, k])
                if score >= best:
                    best, path[i, j] = score, (i - 1, k)
            for k in range(i):
                score = F[k, j - 1] + (col_cum[i, j] - col_cum[k, j]) / (i - k)
                if score >= best:
                    best, path[i, j] = score, (k, j - 1)
            F[i, j] = best

    pairs = []
    m, n = M, N
    while m != 0 and n != 0:
        i, j = path[m, n]
        pairs.append(AlignmentPair((j + 1, n), (i + 1, m)))
        m, n = i, j
    pairs.reverse()
    return pairs, float(F[M, N])


def greedy_align(A) -> list[AlignmentPair]:
    """Single left-to-right pass, no lookahead.

    At each step the current pair either takes the next source, takes the
    next target, or a new one-to-one pair starts, whichever raises the
    alignment score (as scored by ``pair_score``) the most. Once one side
    runs out, everything left on the other side goes to its last token.
    """
    A = _as_matrix(A)
    M, N = A.shape
    # current pair as 0-based inclusive spans
    pairs: list[list[int]] = []  # [a, b, c, d]: source a..b, target c..d
    cur = [0, 0, 0, 0]
    i = j = 0
    while i < M - 1 and j < N - 1:
        a, b, c, d = cur
        # score gained by each move under the same pair scoring as dp_align
        options = [(A[i + 1, j + 1], "new")]
        if a == b:
            old = A[c:d + 1, a].mean()
            options.append((A[c:d + 2, a].mean() - old, "target"))
        if c == d:
            options.append((A[i, j + 1], "source"))
        best_gain, move = options[0]
        for gain, name in options[1:]:
            if gain > best_gain:
                best_gain, move = gain, name
        if move == "new":
            pairs.append(cur)
            i, j = i + 1, j + 1
            cur = [j, j, i, i]
        elif move == "target":
            i += 1
            cur[3] = i
        else:
            j += 1
            cur[1] = j

    if i == M - 1 and j < N - 1:
        if cur[2] == cur[3]:
            cur[1] = N - 1
        else:
            cur[3] -= 1
            pairs.append(cur)
            cur = [j + 1, N - 1, M - 1, M - 1]
    elif j == N - 1 and i < M - 1:
        if cur[0] == cur[1]:
            cur[3] = M - 1
        else:
            cur[1] -= 1
            pairs.append(cur)
            cur = [N - 1, N - 1, i + 1, M - 1]
    pairs.append(cur)
    return [AlignmentPair((a + 1, b + 1), (c + 1, d + 1)) for a, b, c, d in pairs]


def fan_out(pairs: Sequence[AlignmentPair], n_source: int) -> np.ndarray:
    """Number of target tokens aligned to each source token."""
    counts = np.zeros(n_source, dtype=int)
    for p in pairs:
        a, b = p.source
        if b > n_source:
            raise AlignmentError(f"pair {p} exceeds source length {n_source}")
        counts[a - 1:b] = p.target_len if a == b else 1
    return counts


def source_length(pairs: Sequence[AlignmentPair]) -> int:
    return max((p.source[1] for p in pairs), default=0)


def alignment_accuracy(
    predicted: Sequence[Sequence[AlignmentPair]],
    reference: Sequence[Sequence[AlignmentPair]],
) -> float:
    """Share of source tokens whose target fan-out matches the reference."""
    if len(predicted) != len(reference):
        raise AlignmentError(f"{len(predicted)} predicted vs {len(reference)} reference alignments")
    matches = total = 0
    for k, (pred, ref) in enumerate(zip(predicted, reference)):
        n = source_length(ref)
        if source_length(pred) != n:
            raise AlignmentError(f"item {k}: source lengths differ ({source_length(pred)} vs {n})")
        matches += int((fan_out(pred, n) == fan_out(ref, n)).sum())
        total += n
    if total == 0:
        raise AlignmentError("no source tokens to score")
    return matches / total


def pairs_to_json(pairs: Sequence[AlignmentPair]) -> list[dict]:
    return [{"source": list(p.source), "target": list(p.target)} for p in pairs]


def pairs_from_json(items) -> list[AlignmentPair]:
    out = []
    for item in items:
        if isinstance(item, dict):
            src, tgt = item["source"], item["target"]
        else:
            src, tgt = item
        out.append(AlignmentPair(tuple(src), tuple(tgt)))
    return out
