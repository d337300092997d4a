"""Monophonic melodies on a sixteenth-note grid and their normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from songmass.score_io.midi import EmptyTrackError, RawNote, read_midi, write_midi

# Pitch value used for rests.
REST = None

SIXTEENTHS_PER_BEAT = 4
ONE_LINED_OCTAVE = (60, 71)

# Krumhansl-Kessler key profiles, tonic first.
MAJOR_PROFILE = np.array([6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88])
MINOR_PROFILE = np.array([6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17])


class NoPitchError(ValueError):
    pass


@dataclass(frozen=True)
class Note:
    pitch: int | None
    onset: int
    duration: int

    def __post_init__(self):
        if self.pitch is not None and not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside MIDI range")
        if self.onset < 0:
            raise ValueError("onset must be >= 0")
        if self.duration < 1:
            raise ValueError("duration must be >= 1 sixteenth")

    @property
    def is_rest(self) -> bool:
        return self.pitch is None

    @property
    def end(self) -> int:
        return self.onset + self.duration


@dataclass
class MelodySong:
    notes: list[Note]
    phrase_boundaries: list[int] = field(default_factory=list)
    bpm: float = 120.0

    def __post_init__(self):
        b = self.phrase_boundaries
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("phrase boundaries must be strictly increasing")
        if b and (b[0] <= 0 or b[-1] != len(self.notes)):
            raise ValueError("last phrase boundary must equal the note count")

    def phrases(self) -> list[list[Note]]:
        out = []
        start = 0
        for end in self.phrase_boundaries:
            out.append(self.notes[start:end])
            start = end
        return out

    @property
    def pitches(self) -> list[int]:
        return [n.pitch for n in self.notes if n.pitch is not None]

    def shifted(self, semitones: int) -> "MelodySong":
        notes = [n if n.is_rest else replace(n, pitch=n.pitch + semitones) for n in self.notes]
        return replace(self, notes=notes, phrase_boundaries=list(self.phrase_boundaries))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def quantize(events: Iterable[tuple[int | None, float, float]], bpm: float) -> list[Note]:
    """Snap ``(pitch, onset_seconds, duration_seconds)`` events to the 1/16 grid.

    Onset and duration are rounded independently to the nearest sixteenth;
    durations that round to zero become one sixteenth.
    """
    if not bpm > 0:
        raise ValueError(f"bpm must be positive, got {bpm}")
    per_second = bpm / 60.0 * SIXTEENTHS_PER_BEAT
    notes = []
    for pitch, onset, duration in events:
        q_on = max(0, _round_half_up(onset * per_second))
        q_dur = max(1, _round_half_up(duration * per_second))
        notes.append(Note(pitch, q_on, q_dur))
    return notes


def monophonize(notes: Sequence[Note]) -> list[Note]:
    """Resolve overlaps by cutting the earlier note at the later onset, then
    fill every gap (including a leading one) with a rest."""
    ordered = sorted((n for n in notes if not n.is_rest), key=lambda n: (n.onset, n.pitch))
    kept: list[Note] = []
    for n in ordered:
        while kept and kept[-1].end > n.onset:
            prev = kept.pop()
            if n.onset > prev.onset:
                kept.append(replace(prev, duration=n.onset - prev.onset))
                break
        kept.append(n)

    out: list[Note] = []
    t = 0
    for n in kept:
        if n.onset > t:
            out.append(Note(REST, t, n.onset - t))
        out.append(n)
        t = n.end
    return out


def parse_midi_melody(midi_bytes: bytes, track_index: int = 0) -> MelodySong:
    """Extract the melody on ``track_index`` as a single-phrase song."""
    midi = read_midi(midi_bytes)
    if not 0 <= track_index < len(midi.tracks):
        raise IndexError(f"track {track_index} not in file with {len(midi.tracks)} tracks")
    raw = midi.tracks[track_index]
    if not raw:
        raise EmptyTrackError(f"track {track_index} has no note events")
    events = [
        (n.pitch, midi.ticks_to_seconds(n.start_tick),
         midi.ticks_to_seconds(n.end_tick) - midi.ticks_to_seconds(n.start_tick))
        for n in raw
    ]
    notes = monophonize(quantize(events, midi.bpm))
    return MelodySong(notes, [len(notes)], midi.bpm)


def song_to_midi(song: MelodySong, division: int = 480) -> bytes:
    ticks = division // SIXTEENTHS_PER_BEAT
    raw = [RawNote(n.pitch, n.onset * ticks, n.end * ticks) for n in song.notes if not n.is_rest]
    return write_midi(raw, division=division, bpm=song.bpm)


def pitch_class_histogram(song: MelodySong) -> np.ndarray:
    hist = np.zeros(12)
    for n in song.notes:
        if not n.is_rest:
            hist[n.pitch % 12] += n.duration
    return hist


def _correlation(a: np.ndarray, b: np.ndarray) -> float:
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def _shift_to(tonic: int, target: int) -> int:
    # representative of (target - tonic) mod 12 in [-6, 5]
    return (target - tonic + 6) % 12 - 6


def key_shift(song: MelodySong) -> int:
    """Semitone shift that moves the estimated key to C major or A minor.

    The key is the best Krumhansl-Schmuckler correlation against the
    duration-weighted pitch-class histogram. Ties go to the smallest
    ``|shift|``, then major before minor.
    """
    hist = pitch_class_histogram(song)
    if not hist.any():
        raise NoPitchError("song has no pitched notes")
    candidates = []
    for mode, profile, target in ((0, MAJOR_PROFILE, 0), (1, MINOR_PROFILE, 9)):
        for tonic in range(12):
            r = _correlation(hist, np.roll(profile, tonic))
            k = _shift_to(tonic, target)
            candidates.append((r, k, mode))
    best = max(r for r, _, _ in candidates)
    tied = [c for c in candidates if best - c[0] <= 1e-12]
    _, k, _ = min(tied, key=lambda c: (abs(c[1]), c[2], c[1]))
    return k


def transpose_to_c(song: MelodySong) -> MelodySong:
    if not song.notes:
        raise ValueError("cannot transpose an empty song")
    k = key_shift(song)
    pitches = song.pitches
    if min(pitches) + k < 0 or max(pitches) + k > 127:
        raise ValueError(f"shift {k} leaves the MIDI range")
    return song.shifted(k)


def octave_shift(song: MelodySong) -> int:
    """Octave count ``m`` maximizing pitches inside MIDI 60-71.

    Ties prefer smaller ``|m|`` and then negative ``m``.
    """
    pitches = np.array(song.pitches)
    if pitches.size == 0:
        raise NoPitchError("song has no pitched notes")
    lo, hi = ONE_LINED_OCTAVE
    best = None
    for m in range(-11, 12):
        shifted = pitches + 12 * m
        if shifted.min() < 0 or shifted.max() > 127:
            continue
        count = int(((shifted >= lo) & (shifted <= hi)).sum())
        key = (-count, abs(m), m)
        if best is None or key < best:
            best = key
    return best[2]


def octave_center(song: MelodySong) -> MelodySong:
    return song.shifted(12 * octave_shift(song))


def split_phrases_unpaired(song: MelodySong, mean_phrase_len: int) -> MelodySong:
    if mean_phrase_len < 1:
        raise ValueError("mean_phrase_len must be >= 1")
    n = len(song.notes)
    bounds = list(range(mean_phrase_len, n, mean_phrase_len))
    if n:
        bounds.append(n)
    return replace(song, phrase_boundaries=bounds)


def mean_phrase_length(songs: Iterable[MelodySong]) -> int:
    """Average notes per phrase over a paired corpus, rounded, at least 1."""
    notes = phrases = 0
    for s in songs:
        notes += len(s.notes)
        phrases += len(s.phrase_boundaries)
    if phrases == 0:
        raise ValueError("no phrases in corpus")
    return max(1, _round_half_up(notes / phrases))


def normalize(song: MelodySong) -> MelodySong:
    """Key to C major / A minor, then center on the one-lined octave."""
    return octave_center(transpose_to_c(song))
