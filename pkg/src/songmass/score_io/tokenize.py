"""Pitch/duration token format: ``R 7/16 G3 1/16 E4 1/8 ... [SEP]``."""

from __future__ import annotations

import re
from fractions import Fraction

from songmass.score_io.melody import REST, MelodySong, Note
from songmass.tokens import SEP, MalformedSequenceError, TokenSequence

NOTE_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
REST_TOKEN = "R"
MAX_DURATION = 32

_PITCH_RE = re.compile(r"^([A-G]#?)(-?\d+)$")


class MelodyFormatError(MalformedSequenceError):
    pass


def pitch_token(pitch: int | None) -> str:
    if pitch is None:
        return REST_TOKEN
    return f"{NOTE_NAMES[pitch % 12]}{pitch // 12 - 1}"


def parse_pitch_token(tok: str) -> int | None:
    if tok == REST_TOKEN:
        return REST
    m = _PITCH_RE.match(tok)
    if not m:
        raise MelodyFormatError(f"not a pitch token: {tok!r}")
    pitch = NOTE_NAMES.index(m.group(1)) + 12 * (int(m.group(2)) + 1)
    if not 0 <= pitch <= 127:
        raise MelodyFormatError(f"pitch token out of MIDI range: {tok!r}")
    return pitch


def duration_token(sixteenths: int) -> str:
    if not 1 <= sixteenths <= MAX_DURATION:
        raise ValueError(f"duration {sixteenths} outside 1..{MAX_DURATION}")
    return str(Fraction(sixteenths, 16))


def parse_duration_token(tok: str) -> int:
    try:
        value = Fraction(tok) * 16
    except (ValueError, ZeroDivisionError):
        raise MelodyFormatError(f"not a duration token: {tok!r}") from None
    if value.denominator != 1 or not 1 <= value <= MAX_DURATION:
        raise MelodyFormatError(f"duration token off the 1/16 grid: {tok!r}")
    return int(value)


def is_pitch_token(tok: str) -> bool:
    return tok == REST_TOKEN or bool(_PITCH_RE.match(tok))


def is_duration_token(tok: str) -> bool:
    try:
        parse_duration_token(tok)
    except MelodyFormatError:
        return False
    return True


def tokenize_melody(song: MelodySong) -> TokenSequence:
    """Flatten phrases into pitch/duration pairs, ``[SEP]`` after each phrase.

    Notes longer than ``MAX_DURATION`` sixteenths are emitted as repeated
    (tied) notes of at most that length.
    """
    tokens: list[str] = []
    for phrase in song.phrases():
        for note in phrase:
            remaining = note.duration
            while remaining > 0:
                chunk = min(remaining, MAX_DURATION)
                tokens.append(pitch_token(note.pitch))
                tokens.append(duration_token(chunk))
                remaining -= chunk
        tokens.append(SEP)
    return TokenSequence(tokens)


def detokenize_melody(seq: TokenSequence, bpm: float = 120.0) -> MelodySong:
    notes: list[Note] = []
    bounds: list[int] = []
    t = 0
    pending = None  # pitch waiting for its duration
    have_pitch = False
    for pos, tok in enumerate(seq.tokens):
        if tok == SEP:
            if have_pitch:
                raise MelodyFormatError(f"[SEP] at {pos} splits a pitch from its duration")
            if not notes or (bounds and bounds[-1] == len(notes)):
                raise MelodyFormatError(f"empty phrase ending at {pos}")
            bounds.append(len(notes))
        elif not have_pitch:
            if is_duration_token(tok):
                raise MelodyFormatError(f"duration {tok!r} at {pos} without a pitch")
            pending = parse_pitch_token(tok)
            have_pitch = True
        else:
            dur = parse_duration_token(tok)
            notes.append(Note(pending, t, dur))
            t += dur
            have_pitch = False
    if have_pitch or not bounds or bounds[-1] != len(notes):
        raise MelodyFormatError("sequence must end with a complete note and [SEP]")
    return MelodySong(notes, bounds, bpm)
