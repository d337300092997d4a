"""Seeded synthetic corpora: paired songs, unpaired melodies and lyrics,
and noisy attention matrices with known alignments."""

from __future__ import annotations

import numpy as np

from songmass.align import AlignmentPair
from songmass.model.attention import target_map

# word -> syllable count
LEXICON = {
    "another": 3, "day": 1, "has": 1, "gone": 1, "i'm": 1, "still": 1, "all": 1,
    "alone": 2, "love": 1, "you": 1, "me": 1, "night": 1, "light": 1, "heart": 1,
    "forever": 3, "baby": 2, "dancing": 2, "river": 2, "tonight": 2, "the": 1,
    "and": 1, "in": 1, "my": 1, "dream": 1, "sky": 1, "morning": 2, "fire": 2,
    "together": 3, "away": 2, "home": 1, "road": 1, "rain": 1, "summer": 2,
    "hold": 1, "on": 1, "never": 2, "again": 2, "shine": 1, "slowly": 2, "tomorrow": 3,
}
C_MAJOR = (0, 2, 4, 5, 7, 9, 11)


def _melody_walk(rng: np.random.Generator, n: int, start_degree: int = 7) -> list[int]:
    """Stepwise walk over C-major scale degrees, centered near C4..B4."""
    degree = start_degree
    out = []
    for _ in range(n):
        degree = int(np.clip(degree + rng.choice([-2, -1, -1, 0, 1, 1, 2]), 3, 11))
        octave, step = divmod(degree, 7)
        out.append(48 + 12 * octave + C_MAJOR[step])
    return out


def paired_song(rng: np.random.Generator, song_id: str, n_sentences: tuple[int, int] = (2, 3),
                n_words: tuple[int, int] = (3, 5)) -> dict:
    """One raw paired song in the ``data.process_raw_paired`` input format."""
    words = list(LEXICON)
    sentences = []
    for s in range(int(rng.integers(n_sentences[0], n_sentences[1] + 1))):
        chosen = [words[i] for i in rng.integers(0, len(words), int(rng.integers(n_words[0], n_words[1] + 1)))]
        counts = []
        for w in chosen:
            k = LEXICON[w]
            if rng.random() < 0.2:
                k += 1  # melisma
            counts.append(k)
        pitches = _melody_walk(rng, sum(counts))
        durations = [int(d) for d in rng.choice([1, 2, 2, 4, 4, 8], size=len(pitches))]
        notes = [[p, d] for p, d in zip(pitches, durations)]
        if s == 0 and rng.random() < 0.5:
            notes.insert(0, [None, int(rng.choice([2, 4]))])
            counts[0] += 1
        if rng.random() < 0.3:
            notes.append([None, 4])
            counts[-1] += 1
        alignment, n0 = [], 1
        for w, k in enumerate(counts, start=1):
            alignment.append([[w, w], [n0, n0 + k - 1]])
            n0 += k
        text = " ".join(chosen)
        sentences.append({"lyric": text[:1].upper() + text[1:], "notes": notes, "alignment": alignment})
    return {"id": song_id, "bpm": 120, "sentences": sentences}


def paired_corpus(n: int, seed: int = 0, **kwargs) -> list[dict]:
    rng = np.random.default_rng(seed)
    return [paired_song(rng, f"song{k:03d}", **kwargs) for k in range(n)]


def melody_notes(rng: np.random.Generator, n: int) -> list[tuple[int | None, int]]:
    """``n`` (pitch, duration) events with occasional rests."""
    pitches = _melody_walk(rng, n)
    out = []
    for p in pitches:
        d = int(rng.choice([1, 2, 2, 4, 4, 8]))
        out.append((None if rng.random() < 0.08 else p, d))
    return out


def lyric_text(rng: np.random.Generator, n_songs: int, lines: tuple[int, int] = (2, 4)) -> str:
    words = list(LEXICON)
    songs = []
    for _ in range(n_songs):
        block = []
        for _ in range(int(rng.integers(lines[0], lines[1] + 1))):
            line = " ".join(words[i] for i in rng.integers(0, len(words), int(rng.integers(3, 7))))
            block.append(line[:1].upper() + line[1:] + ("," if rng.random() < 0.3 else ""))
        songs.append("\n".join(block))
    return "\n\n".join(songs) + "\n"


def random_alignment(rng: np.random.Generator, n_source: int, max_fan: int = 3,
                     p_many_to_one: float = 0.1) -> list[AlignmentPair]:
    """Monotone tiling where each source token takes 1..max_fan targets and a
    few adjacent source pairs share one target."""
    pairs = []
    a, c = 1, 1
    while a <= n_source:
        if a < n_source and rng.random() < p_many_to_one:
            pairs.append(AlignmentPair((a, a + 1), (c, c)))
            a, c = a + 2, c + 1
            continue
        k = int(rng.integers(1, max_fan + 1))
        pairs.append(AlignmentPair((a, a), (c, c + k - 1)))
        a, c = a + 1, c + k
    return pairs


def noisy_attention(rng: np.random.Generator, pairs: list[AlignmentPair], n_source: int, n_target: int,
                    sharpness: float = 2.0, noise: float = 0.5, blur: float = 0.5) -> np.ndarray:
    """Row-stochastic attention whose logits are the ground-truth map, spread
    to neighbouring sources and corrupted with Gaussian noise."""
    u = target_map(pairs, n_target, n_source).numpy()
    spread = u.copy()
    spread[:, 1:] += blur * u[:, :-1]
    spread[:, :-1] += blur * u[:, 1:]
    logits = sharpness * spread / spread.max(axis=1, keepdims=True) + noise * rng.standard_normal(u.shape)
    logits -= logits.max(axis=1, keepdims=True)
    A = np.exp(logits)
    return A / A.sum(axis=1, keepdims=True)


def attention_suite(n: int, seed: int = 0, source_len: tuple[int, int] = (4, 10), **noise_kw):
    """``n`` (attention, reference alignment) cases."""
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(n):
        n_src = int(rng.integers(source_len[0], source_len[1] + 1))
        pairs = random_alignment(rng, n_src)
        n_tgt = pairs[-1].target[1]
        cases.append((noisy_attention(rng, pairs, n_src, n_tgt, **noise_kw), pairs))
    return cases
