"""Minimal Standard MIDI File reader/writer.

Only what melody extraction needs: note on/off pairs per track and the
first tempo event. Everything else is skipped over by length.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

DEFAULT_BPM = 120.0


class MidiParseError(ValueError):
    """Malformed MIDI data; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EmptyTrackError(ValueError):
    pass


@dataclass(frozen=True)
class RawNote:
    pitch: int
    start_tick: int
    end_tick: int
    velocity: int = 64


@dataclass
class MidiFile:
    format: int
    division: int
    tracks: list[list[RawNote]]
    # microseconds per quarter of the first tempo event, if any
    tempo_us: int | None = None
    # SMPTE division as (frames per second, ticks per frame)
    smpte: tuple[int, int] | None = None

    @property
    def bpm(self) -> float:
        if self.tempo_us is None:
            return DEFAULT_BPM
        return 60_000_000.0 / self.tempo_us

    def ticks_to_seconds(self, ticks: int) -> float:
        if self.smpte is not None:
            fps, tpf = self.smpte
            return ticks / float(fps * tpf)
        return ticks / float(self.division) * 60.0 / self.bpm


class _Reader:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def need(self, n: int) -> None:
        if self.pos + n > self.end:
            raise MidiParseError("unexpected end of data", self.pos)

    def byte(self) -> int:
        self.need(1)
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        self.need(n)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def varlen(self) -> int:
        start = self.pos
        value = 0
        for _ in range(4):
            b = self.byte()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MidiParseError("variable-length quantity longer than 4 bytes", start)


# data bytes that follow each channel-voice status nibble
_VOICE_LEN = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def _parse_track(data: bytes, start: int, end: int) -> tuple[list[RawNote], int | None]:
    r = _Reader(data, start, end)
    tick = 0
    status = None
    tempo = None
    active: dict[tuple[int, int], tuple[int, int]] = {}
    notes: list[RawNote] = []

    def note_off(ch: int, pitch: int) -> None:
        key = (ch, pitch)
        if key in active:
            on_tick, vel = active.pop(key)
            if tick > on_tick:
                notes.append(RawNote(pitch, on_tick, tick, vel))

    while r.pos < r.end:
        tick += r.varlen()
        at = r.pos
        b = r.byte()
        if b == 0xFF:
            kind = r.byte()
            length = r.varlen()
            payload = r.take(length)
            if kind == 0x51 and tempo is None:
                if length != 3:
                    raise MidiParseError("tempo event must carry 3 bytes", at)
                tempo = int.from_bytes(payload, "big")
                if tempo == 0:
                    raise MidiParseError("zero tempo", at)
            elif kind == 0x2F:
                break
            continue
        if b in (0xF0, 0xF7):
            r.take(r.varlen())
            continue
        if b & 0x80:
            if b >= 0xF0:
                raise MidiParseError(f"unexpected system status 0x{b:02X}", at)
            status = b
            first = r.byte()
        else:
            if status is None:
                raise MidiParseError("running status without a prior status byte", at)
            first = b
        kind = status & 0xF0
        ch = status & 0x0F
        second = r.byte() if _VOICE_LEN[kind] == 2 else 0
        if first > 0x7F or second > 0x7F:
            raise MidiParseError("data byte out of range", at)
        if kind == 0x90 and second > 0:
            # a repeated note-on closes the sounding note first
            note_off(ch, first)
            active[(ch, first)] = (tick, second)
        elif kind == 0x80 or (kind == 0x90 and second == 0):
            note_off(ch, first)

    for (ch, pitch) in list(active):
        note_off(ch, pitch)
    notes.sort(key=lambda n: (n.start_tick, n.pitch))
    return notes, tempo


def read_midi(data: bytes) -> MidiFile:
    r = _Reader(data)
    if r.take(4) != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    hlen = struct.unpack(">I", r.take(4))[0]
    if hlen < 6:
        raise MidiParseError("header chunk too short", 4)
    fmt, ntracks, division = struct.unpack(">HHH", r.take(6))
    r.take(hlen - 6)
    if fmt not in (0, 1, 2):
        raise MidiParseError(f"unknown MIDI format {fmt}", 8)
    smpte = None
    if division & 0x8000:
        fps = 256 - (division >> 8)
        smpte = (fps, division & 0xFF)
        if smpte[1] == 0:
            raise MidiParseError("zero ticks per frame", 12)
    elif division == 0:
        raise MidiParseError("zero ticks per quarter note", 12)

    tracks: list[list[RawNote]] = []
    tempo = None
    while len(tracks) < ntracks:
        if r.pos >= len(data):
            raise MidiParseError(f"expected {ntracks} tracks, found {len(tracks)}", r.pos)
        chunk_at = r.pos
        cid = r.take(4)
        clen = struct.unpack(">I", r.take(4))[0]
        if r.pos + clen > len(data):
            raise MidiParseError("chunk extends past end of file", chunk_at)
        body = r.pos
        r.pos += clen
        if cid != b"MTrk":
            continue
        notes, t = _parse_track(data, body, body + clen)
        if tempo is None:
            tempo = t
        tracks.append(notes)
    return MidiFile(fmt, division, tracks, tempo, smpte)


def _varlen_bytes(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def write_midi(notes: list[RawNote], division: int = 480, bpm: float = DEFAULT_BPM) -> bytes:
    """Single-track format-0 file holding ``notes`` on channel 0."""
    events: list[tuple[int, int, bytes]] = []
    for n in notes:
        # offs sort before ons at the same tick
        events.append((n.start_tick, 1, bytes([0x90, n.pitch, n.velocity])))
        events.append((n.end_tick, 0, bytes([0x80, n.pitch, 0])))
    events.sort(key=lambda e: (e[0], e[1]))

    tempo = int(round(60_000_000 / bpm))
    body = bytearray()
    body += b"\x00\xFF\x51\x03" + tempo.to_bytes(3, "big")
    last = 0
    for tick, _, msg in events:
        body += _varlen_bytes(tick - last) + msg
        last = tick
    body += b"\x00\xFF\x2F\x00"

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, division)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
