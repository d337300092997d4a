"""Paired lyric/melody songs with word-to-note alignments.

Raw paired input (one JSON object per line)::

    {"id": "s0", "bpm": 120,
     "sentences": [{"lyric": "Another day has gone",
                    "notes": [[null, 7], [55, 1], [64, 2], ...],
                    "alignment": [[[1, 1], [1, 3]], ...]}]}

``notes`` are ``[pitch or null for a rest, duration in sixteenths]`` and
each alignment item is ``[[first_word, last_word], [first_note, last_note]]``
(1-based, inclusive) within the sentence.

Processed paired files hold the normalized token strings instead, see
``PairedSong.to_json``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from songmass.align import AlignmentPair, check_tiling, pairs_from_json, pairs_to_json
from songmass.lyrics import normalize_line
from songmass.score_io.melody import MelodySong, Note, normalize
from songmass.score_io.tokenize import MAX_DURATION, tokenize_melody
from songmass.tokens import SEP, TokenSequence

DIRECTIONS = ("l2m", "m2l")


@dataclass
class PairedSong:
    lyric: TokenSequence
    melody: TokenSequence
    # per sentence; source = lyric words, target = notes (pitch/duration pairs)
    alignment: list[list[AlignmentPair]]
    song_id: str = ""

    def __post_init__(self):
        lyr, mel = self.lyric.sentences(), self.melody.sentences()
        if len(lyr) != len(mel) or len(lyr) != len(self.alignment):
            raise ValueError(
                f"{self.song_id}: {len(lyr)} lyric sentences, {len(mel)} melody phrases, "
                f"{len(self.alignment)} alignment groups"
            )
        for words, toks, pairs in zip(lyr, mel, self.alignment):
            if len(toks) % 2:
                raise ValueError(f"{self.song_id}: odd melody phrase length")
            check_tiling(pairs, len(words), len(toks) // 2)

    @property
    def num_sentences(self) -> int:
        return len(self.alignment)

    def unit_alignment(self, direction: str) -> list[list[AlignmentPair]]:
        """Per-sentence word/note alignment oriented as (source, target)."""
        if direction == "l2m":
            return [list(s) for s in self.alignment]
        if direction == "m2l":
            return [[AlignmentPair(p.target, p.source) for p in s] for s in self.alignment]
        raise ValueError(f"unknown direction {direction!r}")

    def source_target(self, direction: str) -> tuple[TokenSequence, TokenSequence]:
        if direction == "l2m":
            return self.lyric, self.melody
        if direction == "m2l":
            return self.melody, self.lyric
        raise ValueError(f"unknown direction {direction!r}")

    def token_alignment(self, direction: str) -> list[AlignmentPair]:
        """Song-level token alignment (1-based), ``[SEP]`` joined to ``[SEP]``.

        A note covers its pitch and duration tokens.
        """
        lyr_spans = self.lyric.sentence_spans()
        mel_spans = self.melody.sentence_spans()
        out = []
        for s, pairs in enumerate(self.alignment):
            l0, lsep = lyr_spans[s]
            m0, msep = mel_spans[s]
            for (a, b), (c, d) in pairs:
                words = (l0 + a, l0 + b)
                notes = (m0 + 2 * c - 1, m0 + 2 * d)
                out.append(AlignmentPair(words, notes) if direction == "l2m" else AlignmentPair(notes, words))
            out.append(AlignmentPair((lsep + 1, lsep + 1), (msep + 1, msep + 1)) if direction == "l2m"
                       else AlignmentPair((msep + 1, msep + 1), (lsep + 1, lsep + 1)))
        return out

    def to_json(self) -> dict:
        return {
            "id": self.song_id,
            "lyric": self.lyric.to_line(),
            "melody": self.melody.to_line(),
            "alignment": [pairs_to_json(s) for s in self.alignment],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PairedSong":
        return cls(
            TokenSequence.from_line(obj["lyric"]),
            TokenSequence.from_line(obj["melody"]),
            [pairs_from_json(s) for s in obj["alignment"]],
            obj.get("id", ""),
        )


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_jsonl(path: str | Path, items: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item, sort_keys=True) + "\n")


def load_paired(path: str | Path) -> list[PairedSong]:
    return [PairedSong.from_json(obj) for obj in read_jsonl(path)]


def save_paired(path: str | Path, songs: Iterable[PairedSong]) -> None:
    write_jsonl(path, (s.to_json() for s in songs))


def raw_melody(obj: dict) -> MelodySong:
    notes, bounds, t = [], [], 0
    for sent in obj["sentences"]:
        for pitch, dur in sent["notes"]:
            notes.append(Note(pitch, t, int(dur)))
            t += int(dur)
        bounds.append(len(notes))
    return MelodySong(notes, bounds, float(obj.get("bpm", 120.0)))


def process_raw_paired(obj: dict) -> PairedSong:
    """Normalize one raw paired song and tokenize both sides.

    Notes longer than the largest duration token are split into tied
    notes; the alignment spans are widened to match.
    """
    song = normalize(raw_melody(obj))
    phrases = song.phrases()
    lyric_sents, melody_sents, alignment = [], [], []
    for sent, phrase in zip(obj["sentences"], phrases):
        words = normalize_line(sent["lyric"])
        # note index -> (first, last) chunk index after splitting
        chunk_of, n_chunks = [], 0
        for note in phrase:
            k = math.ceil(note.duration / MAX_DURATION)
            chunk_of.append((n_chunks + 1, n_chunks + k))
            n_chunks += k
        pairs = [
            AlignmentPair((a, b), (chunk_of[c - 1][0], chunk_of[d - 1][1]))
            for (a, b), (c, d) in sent["alignment"]
        ]
        lyric_sents.append(words)
        sub = MelodySong(list(phrase), [len(phrase)], song.bpm)
        melody_sents.append([t for t in tokenize_melody(sub).tokens if t != SEP])
        alignment.append(pairs)
    return PairedSong(
        TokenSequence.from_sentences(lyric_sents),
        TokenSequence.from_sentences(melody_sents),
        alignment,
        str(obj.get("id", "")),
    )


def paired_melody_songs(raw: Iterable[dict]) -> list[MelodySong]:
    return [raw_melody(obj) for obj in raw]
